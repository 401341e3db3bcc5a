#include "ndsh/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ndsh/errors.hpp"

namespace ndsh {

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iterations) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (b.size() != m) throw std::invalid_argument("nnls: dimension mismatch");
  if (max_iterations <= 0) max_iterations = static_cast<int>(10 * n + 100);

  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  std::vector<char> passive(static_cast<size_t>(n), 0);
  std::vector<char> banned(static_cast<size_t>(n), 0);  // anti-cycling guard

  Eigen::VectorXd w = a.transpose() * b;  // dual at x = 0
  const double dual_tol = 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff());

  std::vector<Eigen::Index> cols;
  const auto passive_ls = [&](Eigen::VectorXd& s) {
    cols.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<size_t>(j)]) cols.push_back(j);
    Eigen::MatrixXd ap(m, static_cast<Eigen::Index>(cols.size()));
    for (size_t k = 0; k < cols.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
    s = ap.colPivHouseholderQr().solve(b);
  };

  int it = 0;
  while (it < max_iterations) {
    Eigen::Index t = -1;
    double wmax = dual_tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<size_t>(j)] && !banned[static_cast<size_t>(j)] && w[j] > wmax) {
        wmax = w[j];
        t = j;
      }
    if (t < 0) {
      res.converged = true;
      break;
    }
    passive[static_cast<size_t>(t)] = 1;

    Eigen::VectorXd s;
    bool accepted = false;
    while (it < max_iterations) {
      ++it;
      passive_ls(s);
      double smin = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < s.size(); ++k) smin = std::min(smin, s[k]);
      if (smin > 0.0) {
        res.x.setZero();
        for (size_t k = 0; k < cols.size(); ++k) res.x[cols[k]] = s[static_cast<Eigen::Index>(k)];
        accepted = true;
        break;
      }

      double alpha = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < cols.size(); ++k)
        if (s[static_cast<Eigen::Index>(k)] <= 0.0) {
          const double xj = res.x[cols[k]];
          alpha = std::min(alpha, xj / (xj - s[static_cast<Eigen::Index>(k)]));
        }
      if (alpha <= 0.0) {
        // Only the entering variable blocks: numerical degeneracy. Reject it
        // for this pass instead of cycling.
        passive[static_cast<size_t>(t)] = 0;
        banned[static_cast<size_t>(t)] = 1;
        break;
      }
      for (size_t k = 0; k < cols.size(); ++k) {
        const Eigen::Index j = cols[k];
        res.x[j] += alpha * (s[static_cast<Eigen::Index>(k)] - res.x[j]);
      }
      const double drop_tol = 1e-12 * std::max(res.x.maxCoeff(), 1e-30);
      for (size_t k = 0; k < cols.size(); ++k) {
        const Eigen::Index j = cols[k];
        if (s[static_cast<Eigen::Index>(k)] <= 0.0 && res.x[j] <= drop_tol) {
          res.x[j] = 0.0;
          passive[static_cast<size_t>(j)] = 0;
        }
      }
    }
    if (accepted) std::fill(banned.begin(), banned.end(), 0);
    w = a.transpose() * (b - a * res.x);
  }
  res.iterations = it;
  if (it >= max_iterations) res.converged = false;
  return res;
}

namespace {

// Least-distance program  min ||z||  s.t.  C z >= d, solved through NNLS on
// E = [C^T; d^T], f = e_{n+1} (Lawson & Hanson, ch. 23).
struct LdpResult {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;  // one per constraint row, >= 0
  int iterations = 0;
  bool converged = false;
  bool feasible = true;
};

LdpResult ldp(const Eigen::MatrixXd& c, const Eigen::VectorXd& d) {
  const Eigen::Index k = c.rows();
  const Eigen::Index n = c.cols();
  Eigen::MatrixXd e(n + 1, k);
  e.topRows(n) = c.transpose();
  e.row(n) = d.transpose();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n + 1);
  f[n] = 1.0;

  NnlsResult inner = nnls(e, f);
  LdpResult out;
  out.iterations = inner.iterations;
  out.converged = inner.converged;

  Eigen::VectorXd r = e * inner.x - f;
  const double rn = r[n];
  if (r.squaredNorm() <= 1e-24 || rn >= -1e-15) {
    out.feasible = false;
    out.converged = false;
    out.z = Eigen::VectorXd::Zero(n);
    out.multipliers = Eigen::VectorXd::Zero(k);
    return out;
  }
  out.z = -r.head(n) / rn;
  out.multipliers = inner.x / (-rn);
  return out;
}

}  // namespace

QpSolution fit_fodf_with_constraints(std::span<const double> signal,
                                     const SignalBasisMatrix& basis,
                                     const Eigen::MatrixXd& constraint_sh, double tol) {
  const Eigen::Index n_samples = basis.values.rows();
  const Eigen::Index n_coeffs = basis.values.cols();
  if (static_cast<Eigen::Index>(signal.size()) != n_samples)
    throw std::invalid_argument("signal length does not match basis rows");
  if (constraint_sh.rows() == 0) throw std::invalid_argument("empty constraint grid");
  if (constraint_sh.cols() != n_coeffs)
    throw std::invalid_argument("constraint matrix does not match basis columns");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");

  const Eigen::Map<const Eigen::VectorXd> e_hat(signal.data(), n_samples);

  // Eliminate the equality: c = [kC00; x].
  const Eigen::VectorXd b = e_hat - basis.values.col(0) * kC00;
  const Eigen::MatrixXd a_full = basis.values.rightCols(n_coeffs - 1);
  const Eigen::MatrixXd g_full = constraint_sh.rightCols(n_coeffs - 1);
  const Eigen::VectorXd h = -constraint_sh.col(0) * kC00;

  // Columns with (near) zero norm cannot influence the fit; their
  // coefficients are pinned to zero (FORECAST with lambda_perp == lambda_par
  // zeroes every l > 0 column).
  std::vector<Eigen::Index> keep;
  double max_col_norm = 0.0;
  for (Eigen::Index j = 0; j < a_full.cols(); ++j)
    max_col_norm = std::max(max_col_norm, a_full.col(j).norm());
  for (Eigen::Index j = 0; j < a_full.cols(); ++j)
    if (a_full.col(j).norm() > 1e-12 * max_col_norm) keep.push_back(j);

  QpSolution sol;
  sol.coeffs.order = basis.order;
  sol.coeffs.coeffs = Eigen::VectorXd::Zero(n_coeffs);
  sol.coeffs.coeffs[0] = kC00;

  if (keep.empty()) {
    sol.residual_norm = b.norm();
    sol.kkt_residual = 0.0;
    sol.converged = true;
    return sol;
  }

  Eigen::MatrixXd a(n_samples, static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd g(g_full.rows(), static_cast<Eigen::Index>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    a.col(static_cast<Eigen::Index>(k)) = a_full.col(keep[k]);
    g.col(static_cast<Eigen::Index>(k)) = g_full.col(keep[k]);
  }
  const Eigen::Index n = a.cols();

  // Reduce to least-distance form through a QR of the data matrix.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd r_mat = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  double r_max = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) r_max = std::max(r_max, std::abs(r_mat(j, j)));
  for (Eigen::Index j = 0; j < n; ++j)
    if (std::abs(r_mat(j, j)) < 1e-10 * r_max)
      throw SolverError("rank-deficient signal basis after column pruning (diag " +
                        std::to_string(r_mat(j, j)) + " at " + std::to_string(j) + ")");

  const Eigen::VectorXd q_t_b = (qr.householderQ().transpose() * b).head(n);
  // C = G R^{-1} via a triangular solve.
  const Eigen::MatrixXd c_mat =
      r_mat.transpose().triangularView<Eigen::Lower>().solve(g.transpose()).transpose();
  const Eigen::VectorXd d = h - c_mat * q_t_b;

  LdpResult ldp_sol = ldp(c_mat, d);
  if (!ldp_sol.feasible)
    throw SolverError("least-distance subproblem reported an infeasible constraint set");

  const Eigen::VectorXd x =
      r_mat.triangularView<Eigen::Upper>().solve(ldp_sol.z + q_t_b);
  for (size_t k = 0; k < keep.size(); ++k) sol.coeffs.coeffs[keep[k] + 1] = x[static_cast<Eigen::Index>(k)];

  // KKT certificate on the reduced problem: stationarity, feasibility,
  // complementary slackness.
  const Eigen::VectorXd fit_residual = a * x - b;
  const Eigen::VectorXd grad = 2.0 * a.transpose() * fit_residual;
  const Eigen::VectorXd mult = 2.0 * ldp_sol.multipliers;
  const Eigen::VectorXd slack = g * x - h;
  const Eigen::VectorXd stationarity = grad - g.transpose() * mult;

  double kkt = stationarity.cwiseAbs().maxCoeff();
  kkt = std::max(kkt, -std::min(0.0, slack.minCoeff()));
  for (Eigen::Index i = 0; i < slack.size(); ++i)
    kkt = std::max(kkt, std::abs(mult[i] * slack[i]));

  sol.residual_norm = fit_residual.norm();
  sol.kkt_residual = kkt;
  sol.iterations = ldp_sol.iterations;
  sol.converged = ldp_sol.converged && kkt <= tol;
  return sol;
}

QpSolution fit_fodf(std::span<const double> signal, const SignalBasisMatrix& basis,
                    const SphericalGrid& constraint_grid, double tol) {
  if (constraint_grid.directions.empty()) throw std::invalid_argument("empty constraint grid");
  const Eigen::MatrixXd y = eval_sh(basis.order, constraint_grid.directions);
  return fit_fodf_with_constraints(signal, basis, y, tol);
}

}  // namespace ndsh
