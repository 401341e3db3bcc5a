#include <doctest.h>

#include <cmath>
#include <vector>

#include "ndsh/errors.hpp"
#include "ndsh/peaks.hpp"
#include "ndsh/phantom.hpp"
#include "ndsh/qp.hpp"
#include "ndsh/rng.hpp"
#include "ndsh/scheme_io.hpp"
#include "oracles.hpp"

using namespace ndsh;

namespace {

AcquisitionScheme test_scheme(int per_shell = 40) {
  return make_incremental_scheme(4, {1000.0, 2000.0, 3000.0}, per_shell);
}

// Brute-force solver for min ||Ax-b||^2 s.t. Gx >= h: enumerate active sets,
// solve the equality-constrained KKT system, keep the feasible dual-feasible
// candidate with the lowest objective.
Eigen::VectorXd brute_force_qp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                               const Eigen::MatrixXd& g, const Eigen::VectorXd& h) {
  const int n = static_cast<int>(a.cols());
  const int k = static_cast<int>(g.rows());
  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;

  std::vector<int> subset;
  const std::function<void(int)> recurse = [&](int start) {
    // Solve with the current active subset as equalities.
    const int na = static_cast<int>(subset.size());
    Eigen::MatrixXd kkt(n + na, n + na);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = 2.0 * a.transpose() * a;
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = 2.0 * a.transpose() * b;
    for (int i = 0; i < na; ++i) {
      kkt.block(n + i, 0, 1, n) = g.row(subset[static_cast<size_t>(i)]);
      kkt.block(0, n + i, n, 1) = -g.row(subset[static_cast<size_t>(i)]).transpose();
      rhs[n + i] = h[subset[static_cast<size_t>(i)]];
    }
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    bool ok = (kkt * sol - rhs).cwiseAbs().maxCoeff() < 1e-8;
    for (int i = 0; i < na && ok; ++i)
      if (sol[n + i] < -1e-9) ok = false;  // dual feasibility
    if (ok) {
      const Eigen::VectorXd slack = g * x - h;
      if (slack.minCoeff() > -1e-9) {
        const double obj = (a * x - b).squaredNorm();
        if (obj < best_obj) {
          best_obj = obj;
          best = x;
        }
      }
    }
    if (na == n) return;
    for (int next = start; next < k; ++next) {
      subset.push_back(next);
      recurse(next + 1);
      subset.pop_back();
    }
  };
  recurse(0);
  return best;
}

}  // namespace

TEST_CASE("nnls solves small problems exactly") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 0, 1;
  Eigen::VectorXd b(2);
  b << 1, -1;
  const NnlsResult r = nnls(a, b);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.x[1] == 0.0);
}

TEST_CASE("nnls recovers nonnegative ground truth") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 30, n = 8;
    Eigen::MatrixXd a(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
    Eigen::VectorXd x_true(n);
    for (int j = 0; j < n; ++j) x_true[j] = j % 3 == 0 ? 0.0 : rng.uniform() + 0.1;
    const Eigen::VectorXd b = a * x_true;
    const NnlsResult r = nnls(a, b);
    CHECK(r.converged);
    CHECK((a * r.x - b).norm() < 1e-9);
  }
}

TEST_CASE("strictly feasible noiseless problems are recovered exactly") {
  const AcquisitionScheme scheme = test_scheme();
  DiffusivitySet diff;
  const SignalBasisMatrix basis = forecast_basis(scheme, diff, 4);
  const SphericalGrid grid = make_hemisphere_grid(181);

  // Mildly anisotropic strictly positive fODF.
  Eigen::VectorXd c_true = Eigen::VectorXd::Zero(15);
  c_true[0] = kC00;
  c_true[sh_flat_index(2, 0)] = 0.08;
  c_true[sh_flat_index(2, 1)] = -0.05;
  c_true[sh_flat_index(4, 2)] = 0.03;
  double min_amp = 1e9;
  for (double v : sh_expand_on_grid(c_true, grid)) min_amp = std::min(min_amp, v);
  REQUIRE(min_amp > 0.0);

  const Eigen::VectorXd signal = predict_signal(basis, c_true);
  const std::vector<double> sig(signal.data(), signal.data() + signal.size());
  const QpSolution sol = fit_fodf(sig, basis, grid);
  CHECK(sol.converged);
  CHECK((sol.coeffs.coeffs - c_true).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("isotropic signal with a degenerate FORECAST basis yields the isotropic fODF") {
  const AcquisitionScheme scheme = test_scheme();
  DiffusivitySet diff;
  diff.lambda_par = diff.lambda_perp = 1.2e-3;
  const SignalBasisMatrix basis = forecast_basis(scheme, diff, 8);
  std::vector<double> sig(static_cast<size_t>(scheme.sample_count()));
  for (int i = 0; i < scheme.sample_count(); ++i)
    sig[static_cast<size_t>(i)] = std::exp(-scheme.bvalues[static_cast<size_t>(i)] * 1.2e-3);
  const QpSolution sol = fit_fodf(sig, basis, make_hemisphere_grid(181));
  CHECK(sol.converged);
  CHECK(sol.coeffs.coeffs[0] == kC00);
  for (int j = 1; j < 45; ++j) CHECK(sol.coeffs.coeffs[j] == 0.0);
}

TEST_CASE("QP matches brute-force active-set enumeration on random order-2 problems") {
  SplitMix64 rng(99);
  const SphericalGrid grid = make_hemisphere_grid(20);
  const Eigen::MatrixXd y = eval_sh(2, grid.directions);
  const AcquisitionScheme scheme = test_scheme(12);
  DiffusivitySet diff;

  for (int trial = 0; trial < 10; ++trial) {
    SignalBasisMatrix basis = forecast_basis(scheme, diff, 2);
    std::vector<double> sig(static_cast<size_t>(scheme.sample_count()));
    for (auto& s : sig) s = rng.gaussian() * 0.3;  // generic infeasible target

    const QpSolution sol = fit_fodf_with_constraints(sig, basis, y);
    CHECK(sol.converged);

    const Eigen::Map<const Eigen::VectorXd> e_hat(sig.data(), static_cast<Eigen::Index>(sig.size()));
    const Eigen::VectorXd b = e_hat - basis.values.col(0) * kC00;
    const Eigen::MatrixXd a = basis.values.rightCols(5);
    const Eigen::MatrixXd g = y.rightCols(5);
    const Eigen::VectorXd h = -y.col(0) * kC00;
    const Eigen::VectorXd x_ref = brute_force_qp(a, b, g, h);
    REQUIRE(x_ref.size() == 5);
    CHECK((sol.coeffs.coeffs.tail(5) - x_ref).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("solutions are feasible, anchored, and no worse than the isotropic point") {
  const AcquisitionScheme scheme = test_scheme();
  const SphericalGrid grid = make_hemisphere_grid(181);
  const Eigen::MatrixXd y = eval_sh(8, grid.directions);
  DiffusivitySet diff;
  SplitMix64 rng(1234);

  for (int trial = 0; trial < 5; ++trial) {
    VolumeFractions f;
    f.nu_ic = 0.6 + 0.4 * rng.uniform();
    f.nu_ec = 1.0 - f.nu_ic;
    PhantomVoxelSpec spec;
    spec.populations = {make_kent(32.0, 8.0, Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized())};
    spec.fractions = f;
    spec.snr = 20.0;
    spec.seed = 1000 + static_cast<std::uint64_t>(trial);
    const SynthResult synth = synth_signal(spec, scheme, diff);

    const SignalBasisMatrix basis = noddish_basis(scheme, diff, f, 8);
    const QpSolution sol = fit_fodf_with_constraints(synth.signal, basis, y);
    CHECK(sol.converged);
    CHECK(sol.coeffs.coeffs[0] == doctest::Approx(kC00).epsilon(1e-10));

    const Eigen::VectorXd amplitudes = y * sol.coeffs.coeffs;
    CHECK(amplitudes.minCoeff() >= -1e-8);

    Eigen::VectorXd c_iso = Eigen::VectorXd::Zero(45);
    c_iso[0] = kC00;
    const Eigen::Map<const Eigen::VectorXd> e_hat(synth.signal.data(),
                                                  static_cast<Eigen::Index>(synth.signal.size()));
    const double iso_residual = (e_hat - basis.values * c_iso).norm();
    CHECK(sol.residual_norm <= iso_residual + 1e-12);
  }
}

TEST_CASE("KKT certificate: random feasible perturbations never improve the objective") {
  const AcquisitionScheme scheme = test_scheme();
  const SphericalGrid grid = make_hemisphere_grid(61);
  const Eigen::MatrixXd y = eval_sh(4, grid.directions);
  DiffusivitySet diff;
  const SignalBasisMatrix basis = forecast_basis(scheme, diff, 4);
  SplitMix64 rng(5150);
  std::vector<double> sig(static_cast<size_t>(scheme.sample_count()));
  for (auto& s : sig) s = 0.25 * rng.gaussian();

  const double tol = 1e-8;
  const QpSolution sol = fit_fodf_with_constraints(sig, basis, y, tol);
  CHECK(sol.converged);
  CHECK(sol.kkt_residual <= tol);

  const Eigen::Map<const Eigen::VectorXd> e_hat(sig.data(), static_cast<Eigen::Index>(sig.size()));
  const double f_star = (e_hat - basis.values * sol.coeffs.coeffs).squaredNorm();
  Eigen::VectorXd c_iso = Eigen::VectorXd::Zero(15);
  c_iso[0] = kC00;

  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd c = sol.coeffs.coeffs;
    const double eps = 1e-5;
    for (int j = 1; j < c.size(); ++j) c[j] += eps * rng.gaussian();
    // Pull toward the strictly feasible isotropic point until feasible.
    double t = 0.0;
    while (t <= 1.0) {
      const Eigen::VectorXd blend = (1.0 - t) * c + t * c_iso;
      if ((y * blend).minCoeff() >= 0.0) {
        c = blend;
        break;
      }
      t += 0.05;
    }
    if ((y * c).minCoeff() < 0.0) continue;
    const double f_c = (e_hat - basis.values * c).squaredNorm();
    CHECK(f_c >= f_star - 10.0 * tol);
  }
}

TEST_CASE("rotating scheme and signal together rotates the recovered peak") {
  DiffusivitySet diff;
  const AcquisitionScheme scheme = test_scheme(60);
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(0.9, Vec3(1.0, 2.0, -0.5).normalized()).toRotationMatrix();

  AcquisitionScheme rotated = scheme;
  for (size_t i = 0; i < rotated.directions.size(); ++i)
    if (rotated.bvalues[i] > 0.0) rotated.directions[i] = rot * rotated.directions[i];

  const Vec3 fiber(0, 0, 1);
  VolumeFractions f;
  f.nu_ic = 0.8;
  f.nu_ec = 0.2;

  PhantomVoxelSpec spec;
  spec.populations = {make_kent(128.0, 0.0, fiber)};
  spec.fractions = f;
  spec.seed = 777;
  const SynthResult synth = synth_signal(spec, scheme, diff);

  // The same sample values attached to the rotated directions describe the
  // rotated voxel exactly: E(R u) with every model direction rotated is E(u).
  const SphericalGrid grid = make_hemisphere_grid(181);
  const PeakFinder finder(8, make_hemisphere_grid(3000));
  const auto fit_peak = [&](const AcquisitionScheme& sch, const std::vector<double>& s) {
    const SignalBasisMatrix basis = noddish_basis(sch, diff, f, 8);
    const QpSolution sol = fit_fodf(s, basis, grid);
    REQUIRE(sol.converged);
    const PeakSet peaks = finder.extract({sol.coeffs.coeffs, 8});
    REQUIRE(peaks.count() >= 1);
    return peaks.directions[0];
  };

  const Vec3 p0 = fit_peak(scheme, synth.signal);
  const Vec3 p1 = fit_peak(rotated, synth.signal);
  CHECK(axial_angle_deg(p0, fiber) < 2.0);
  CHECK(axial_angle_deg(p1, rot * fiber) < 2.0);
  CHECK(axial_angle_deg(rot * p0, p1) < 2.0);
}

TEST_CASE("fit_fodf input validation") {
  const AcquisitionScheme scheme = test_scheme(12);
  const SignalBasisMatrix basis = forecast_basis(scheme, DiffusivitySet{}, 4);
  std::vector<double> sig(static_cast<size_t>(scheme.sample_count()), 0.5);
  const SphericalGrid grid = make_hemisphere_grid(61);
  CHECK_THROWS_AS(fit_fodf(sig, basis, grid, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_fodf(sig, basis, SphericalGrid{}), std::invalid_argument);
  std::vector<double> short_sig(3, 0.5);
  CHECK_THROWS_AS(fit_fodf(short_sig, basis, grid), std::invalid_argument);
}
