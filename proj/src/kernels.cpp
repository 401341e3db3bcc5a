#include "ndsh/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ndsh {

namespace {

constexpr double kSqrtPi = 1.7724538509055160272981674833411;

// Monomial coefficients of the even Legendre polynomials P_0..P_8
// (dyadic rationals, exact in double). Entry k is the coefficient of t^(2k).
constexpr std::array<std::array<double, 5>, 5> kLegendreCoeffs = {{
    {1.0, 0.0, 0.0, 0.0, 0.0},
    {-1.0 / 2.0, 3.0 / 2.0, 0.0, 0.0, 0.0},
    {3.0 / 8.0, -30.0 / 8.0, 35.0 / 8.0, 0.0, 0.0},
    {-5.0 / 16.0, 105.0 / 16.0, -315.0 / 16.0, 231.0 / 16.0, 0.0},
    {35.0 / 128.0, -1260.0 / 128.0, 6930.0 / 128.0, -12012.0 / 128.0, 6435.0 / 128.0},
}};

void check_l(int l) {
  if (l < 0 || l > kMaxKernelOrder || l % 2 != 0)
    throw std::invalid_argument("kernel order l must be in {0,2,4,6,8}, got " + std::to_string(l));
}

void check_xi(double xi) {
  if (!(xi >= 0.0) || !std::isfinite(xi))
    throw std::invalid_argument("kernel argument xi must be finite and >= 0");
}

// The closed forms lose all precision as xi -> 0 (the erf and exponential terms
// cancel to O(xi^((l+1)/2))), so below this threshold the alternating Taylor
// series of the integral is used instead. Both branches carry ~1e-14 absolute
// error at the switch point.
constexpr double kSeriesThreshold = 1.0;

double phi_series(int l, double xi) {
  // integral t^l exp(-xi t^2) = sum_k (-xi)^k / k! * 2 / (l + 2k + 1)
  double power = 1.0;
  double sum = 2.0 / (l + 1);
  for (int k = 1; k <= 40; ++k) {
    power *= -xi / k;
    const double term = power * 2.0 / (l + 2 * k + 1);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

double phi_closed(int l, double xi) {
  const double se = kSqrtPi * std::erf(std::sqrt(xi));
  const double sx = std::sqrt(xi);
  const double ex = std::exp(-xi);
  switch (l) {
    case 0:
      return se / sx;
    case 2:
      return (se - 2.0 * ex * sx) / (2.0 * xi * sx);
    case 4:
      return (3.0 * se - 2.0 * ex * sx * (2.0 * xi + 3.0)) / (4.0 * xi * xi * sx);
    case 6:
      return (15.0 * se - 2.0 * ex * sx * (4.0 * xi * xi + 10.0 * xi + 15.0)) /
             (8.0 * xi * xi * xi * sx);
    case 8:
      return (105.0 * se -
              2.0 * ex * sx * (8.0 * xi * xi * xi + 28.0 * xi * xi + 70.0 * xi + 105.0)) /
             (16.0 * xi * xi * xi * xi * sx);
    default:
      throw std::invalid_argument("unsupported kernel order");
  }
}

// Taylor coefficients g[l/2][k] of Psi_l(xi) = sum_k (-xi)^k / k! * g_{l,k};
// g_{l,k} = integral of P_l(t) t^(2k); zero for 2k < l by orthogonality.
const std::array<std::array<double, 41>, 5>& psi_series_table() {
  static const std::array<std::array<double, 41>, 5> table = [] {
    std::array<std::array<double, 41>, 5> g{};
    for (int half_l = 0; half_l < 5; ++half_l) {
      const int l = 2 * half_l;
      for (int k = 0; k <= 40; ++k) {
        if (2 * k < l) {
          g[half_l][k] = 0.0;
          continue;
        }
        double moment = 0.0;
        for (int j = 0; j < 5; ++j)
          moment += kLegendreCoeffs[half_l][j] * 2.0 / (2 * j + 2 * k + 1);
        g[half_l][k] = moment;
      }
    }
    return g;
  }();
  return table;
}

}  // namespace

double phi_l(int l, double xi) {
  check_l(l);
  check_xi(xi);
  if (xi < kSeriesThreshold) return phi_series(l, xi);
  return phi_closed(l, xi);
}

double psi_l(int l, double xi) {
  check_l(l);
  check_xi(xi);
  if (xi < kSeriesThreshold) {
    const auto& g = psi_series_table()[l / 2];
    double power = 1.0;
    double sum = g[0];
    for (int k = 1; k <= 40; ++k) {
      power *= -xi / k;
      const double term = power * g[k];
      sum += term;
      if (k > l / 2 && std::abs(term) < 1e-18 * (std::abs(sum) + 1e-300)) break;
    }
    return sum;
  }
  double sum = 0.0;
  for (int j = 0; j < 5; ++j) {
    const double c = kLegendreCoeffs[l / 2][j];
    if (c != 0.0) sum += c * phi_closed(2 * j, xi);
  }
  return sum;
}

void validate(const DiffusivitySet& d) {
  if (!(d.lambda_perp >= 0.0) || !(d.lambda_par >= d.lambda_perp) || !(d.lambda_par <= 4.0e-3))
    throw std::invalid_argument("diffusivities must satisfy 0 <= lambda_perp <= lambda_par <= 4e-3");
  if (!(d.lambda_csf > 0.0)) throw std::invalid_argument("lambda_csf must be positive");
}

void validate(const VolumeFractions& f, double tol) {
  const auto in_unit = [](double x) { return x >= -1e-12 && x <= 1.0 + 1e-12; };
  if (!in_unit(f.nu_ic) || !in_unit(f.nu_ec) || !in_unit(f.nu_csf))
    throw std::invalid_argument("volume fractions must lie in [0, 1]");
  if (std::abs(f.sum() - 1.0) > tol)
    throw std::invalid_argument("volume fractions must sum to 1");
}

double tortuosity_lambda_perp(double lambda_par, const VolumeFractions& f) {
  const double aniso = f.nu_ic + f.nu_ec;
  if (aniso <= 0.0) return 0.0;
  // ratio <= 1 exactly, so the product never exceeds lambda_par.
  return lambda_par * (f.nu_ec / aniso);
}

std::vector<std::vector<int>> AcquisitionScheme::shell_sample_lists() const {
  std::vector<std::vector<int>> lists(static_cast<size_t>(shell_count()));
  for (int i = 0; i < sample_count(); ++i)
    lists[static_cast<size_t>(shell_ids[static_cast<size_t>(i)])].push_back(i);
  return lists;
}

std::vector<double> AcquisitionScheme::nonzero_shell_bvalues() const {
  std::vector<double> out;
  for (double b : shell_bvalues)
    if (b > 0.0) out.push_back(b);
  return out;
}

AcquisitionScheme make_scheme(std::vector<Vec3> directions, std::vector<double> bvalues,
                              double tau) {
  if (directions.size() != bvalues.size())
    throw std::invalid_argument("directions and bvalues must have equal length");
  if (bvalues.empty()) throw std::invalid_argument("empty acquisition scheme");
  if (!(tau > 0.0)) throw std::invalid_argument("diffusion time tau must be positive");

  AcquisitionScheme s;
  s.tau = tau;
  s.bvalues = std::move(bvalues);
  s.directions = std::move(directions);

  for (size_t i = 0; i < s.bvalues.size(); ++i) {
    double& b = s.bvalues[i];
    if (!(b >= 0.0)) throw std::invalid_argument("negative b-value at sample " + std::to_string(i));
    if (b < kBZeroShellWidth) {
      b = 0.0;
    } else {
      const double n = s.directions[i].norm();
      if (std::abs(n - 1.0) > 1e-3)
        throw std::invalid_argument("non-unit gradient direction at sample " + std::to_string(i));
      // Already-unit directions pass through bit-identically.
      if (std::abs(n - 1.0) > 1e-12) s.directions[i] /= n;
    }
  }

  // Cluster b-values: sorted walk, new shell when the gap from the shell's
  // first member exceeds the tolerance.
  std::vector<int> idx(s.bvalues.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return s.bvalues[static_cast<size_t>(a)] < s.bvalues[static_cast<size_t>(b)]; });

  s.shell_ids.assign(s.bvalues.size(), -1);
  double shell_first = -1.0;
  double shell_sum = 0.0;
  int shell_n = 0;
  int shell_id = -1;
  for (int i : idx) {
    const double b = s.bvalues[static_cast<size_t>(i)];
    if (shell_id < 0 || b - shell_first > kBZeroShellWidth) {
      if (shell_id >= 0) s.shell_bvalues.push_back(shell_sum / shell_n);
      ++shell_id;
      shell_first = b;
      shell_sum = 0.0;
      shell_n = 0;
    }
    s.shell_ids[static_cast<size_t>(i)] = shell_id;
    shell_sum += b;
    ++shell_n;
  }
  s.shell_bvalues.push_back(shell_sum / shell_n);
  if (s.shell_bvalues.front() < kBZeroShellWidth) s.shell_bvalues.front() = 0.0;
  return s;
}

namespace {

void check_basis_args(const AcquisitionScheme& scheme, int order) {
  if (order < 0 || order > kMaxKernelOrder || order % 2 != 0)
    throw std::invalid_argument("basis order must be even and <= 8");
  if (scheme.sample_count() == 0) throw std::invalid_argument("empty acquisition scheme");
}

// Band weights w_l(b) and the extra isotropic-column term at one b-value; the
// basis row at sample i is w_l(b_i) * Y_l^m(u_i) plus the CSF term on column 0.
struct BandWeights {
  double b = -1.0;
  std::array<double, 5> w{};
  double csf_column = 0.0;
};

BandWeights forecast_weights_at(double b, const DiffusivitySet& diff) {
  BandWeights bw;
  bw.b = b;
  const double attenuation = std::exp(-b * diff.lambda_perp);
  const double xi = b * (diff.lambda_par - diff.lambda_perp);
  for (int l = 0; l <= kMaxKernelOrder; l += 2)
    bw.w[static_cast<size_t>(l / 2)] = 2.0 * kPi * attenuation * psi_l(l, xi);
  return bw;
}

BandWeights noddish_weights_at(double b, const DiffusivitySet& diff, const VolumeFractions& f,
                               double lambda_perp) {
  BandWeights bw;
  bw.b = b;
  const double ec_attenuation = std::exp(-b * lambda_perp);
  const double xi_ic = b * diff.lambda_par;
  const double xi_ec = b * (diff.lambda_par - lambda_perp);
  for (int l = 0; l <= kMaxKernelOrder; l += 2)
    bw.w[static_cast<size_t>(l / 2)] =
        2.0 * kPi * (f.nu_ic * psi_l(l, xi_ic) + f.nu_ec * ec_attenuation * psi_l(l, xi_ec));
  bw.csf_column = kSqrt4Pi * f.nu_csf * std::exp(-b * diff.lambda_csf);
  return bw;
}

template <typename WeightsFn>
Eigen::MatrixXd assemble(const AcquisitionScheme& scheme, const Eigen::MatrixXd& sh, int order,
                         WeightsFn weights_at) {
  const int n_coeffs = sh_count(order);
  if (sh.rows() != scheme.sample_count() || sh.cols() != n_coeffs)
    throw std::invalid_argument("SH matrix shape does not match scheme/order");

  std::vector<BandWeights> cache;  // one entry per distinct b, in order seen
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(scheme.sample_count(), n_coeffs);
  for (int i = 0; i < scheme.sample_count(); ++i) {
    const double b = scheme.bvalues[static_cast<size_t>(i)];
    if (b == 0.0) {
      m(i, 0) = kSqrt4Pi;  // E(0) = c00 * sqrt(4 pi); exact regardless of direction
      continue;
    }
    const BandWeights* bw = nullptr;
    for (const auto& entry : cache)
      if (entry.b == b) {
        bw = &entry;
        break;
      }
    if (!bw) {
      cache.push_back(weights_at(b));
      bw = &cache.back();
    }
    for (int l = 0; l <= order; l += 2) {
      const double w = bw->w[static_cast<size_t>(l / 2)];
      for (int mm = -l; mm <= l; ++mm) {
        const int j = sh_flat_index(l, mm);
        m(i, j) = w * sh(i, j);
      }
    }
    m(i, 0) += bw->csf_column;
  }
  return m;
}

Eigen::MatrixXd scheme_sh(const AcquisitionScheme& scheme, int order) {
  // b = 0 samples may carry zero directions; substitute +z, the basis row for
  // them is overwritten analytically anyway.
  std::vector<Vec3> dirs = scheme.directions;
  for (size_t i = 0; i < dirs.size(); ++i)
    if (scheme.bvalues[i] == 0.0) dirs[i] = Vec3(0, 0, 1);
  return eval_sh(order, dirs);
}

}  // namespace

SignalBasisMatrix forecast_basis_from_sh(const AcquisitionScheme& scheme,
                                         const Eigen::MatrixXd& sh, const DiffusivitySet& diff,
                                         int order) {
  check_basis_args(scheme, order);
  validate(diff);
  SignalBasisMatrix out;
  out.values = assemble(scheme, sh, order, [&](double b) { return forecast_weights_at(b, diff); });
  out.order = order;
  out.model = KernelModel::Forecast;
  out.diff = diff;
  return out;
}

SignalBasisMatrix forecast_basis(const AcquisitionScheme& scheme, const DiffusivitySet& diff,
                                 int order) {
  check_basis_args(scheme, order);
  return forecast_basis_from_sh(scheme, scheme_sh(scheme, order), diff, order);
}

SignalBasisMatrix noddish_basis_from_sh(const AcquisitionScheme& scheme,
                                        const Eigen::MatrixXd& sh, const DiffusivitySet& diff,
                                        const VolumeFractions& fractions, int order) {
  check_basis_args(scheme, order);
  validate(fractions);
  if (!(diff.lambda_par >= 0.0) || !(diff.lambda_par <= 4.0e-3) || !(diff.lambda_csf > 0.0))
    throw std::invalid_argument("invalid diffusivities");
  const double lambda_perp = tortuosity_lambda_perp(diff.lambda_par, fractions);
  SignalBasisMatrix out;
  out.values = assemble(scheme, sh, order, [&](double b) {
    return noddish_weights_at(b, diff, fractions, lambda_perp);
  });
  out.order = order;
  out.model = KernelModel::NoddiSh;
  out.diff = diff;
  out.diff.lambda_perp = lambda_perp;
  out.fractions = fractions;
  return out;
}

SignalBasisMatrix noddish_basis(const AcquisitionScheme& scheme, const DiffusivitySet& diff,
                                const VolumeFractions& fractions, int order) {
  check_basis_args(scheme, order);
  return noddish_basis_from_sh(scheme, scheme_sh(scheme, order), diff, fractions, order);
}

}  // namespace ndsh
