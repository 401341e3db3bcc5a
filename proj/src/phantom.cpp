#include "ndsh/phantom.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ndsh/errors.hpp"
#include "ndsh/rng.hpp"

namespace ndsh {

namespace {

// I_nu(x) * exp(-x) by the ascending series, summed through log-space terms so
// large x never overflows. The half-order case has a closed form valid for
// arbitrarily large argument.
double scaled_bessel_i(double nu, double x) {
  if (x == 0.0) return nu == 0.0 ? 1.0 : 0.0;
  if (nu == 0.5) return -std::expm1(-2.0 * x) / std::sqrt(2.0 * kPi * x);
  const double lx = std::log(x / 2.0);
  double sum = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const double log_term = (nu + 2.0 * k) * lx - std::lgamma(k + 1.0) - std::lgamma(nu + k + 1.0) - x;
    const double term = std::exp(log_term);
    sum += term;
    if (k > 3 && term < 1e-18 * sum) break;
  }
  return sum;
}

// c(kappa, beta) * exp(-kappa), from the series
// c = 2 pi sum_j Gamma(j+1/2)/Gamma(j+1) beta^(2j) (kappa/2)^(-2j-1/2) I_(2j+1/2)(kappa).
double kent_normalizer_scaled(double kappa, double beta) {
  if (kappa == 0.0) return 4.0 * kPi;  // uniform distribution
  const double log_half_kappa = std::log(kappa / 2.0);
  const double log_beta = beta > 0.0 ? std::log(beta) : 0.0;
  double sum = 0.0;
  for (int j = 0; j < 200; ++j) {
    const double bessel = scaled_bessel_i(2.0 * j + 0.5, kappa);
    if (bessel == 0.0) break;
    double log_term = std::lgamma(j + 0.5) - std::lgamma(j + 1.0) -
                      (2.0 * j + 0.5) * log_half_kappa + std::log(bessel);
    if (beta > 0.0)
      log_term += 2.0 * j * log_beta;
    else if (j > 0)
      break;  // beta^0 = 1 only
    const double term = std::exp(log_term);
    sum += term;
    if (term < 1e-15 * sum) return 2.0 * kPi * sum;
    if (j == 199)
      throw NumericError("Kent normalizer series did not converge within 200 terms (kappa=" +
                         std::to_string(kappa) + ", beta=" + std::to_string(beta) + ")");
  }
  return 2.0 * kPi * sum;
}

}  // namespace

void validate(const KentParams& p) {
  if (!(p.kappa >= 0.0)) throw std::invalid_argument("Kent kappa must be >= 0");
  if (!(p.beta >= 0.0) || p.beta > p.kappa / 2.0 + 1e-12)
    throw std::invalid_argument("Kent beta must lie in [0, kappa/2]");
  const double tol = 1e-10;
  if (std::abs(p.mu.norm() - 1.0) > tol || std::abs(p.gamma1.norm() - 1.0) > tol ||
      std::abs(p.gamma2.norm() - 1.0) > tol || std::abs(p.mu.dot(p.gamma1)) > tol ||
      std::abs(p.mu.dot(p.gamma2)) > tol || std::abs(p.gamma1.dot(p.gamma2)) > tol)
    throw std::invalid_argument("Kent axes must form an orthonormal triad");
}

KentParams make_kent(double kappa, double beta, const Vec3& mu, double roll_deg) {
  KentParams p;
  p.kappa = kappa;
  p.beta = beta;
  p.mu = mu.normalized();
  const Vec3 base = any_orthogonal(p.mu);
  p.gamma1 = rotate_about(base, p.mu, deg_to_rad(roll_deg));
  p.gamma2 = p.mu.cross(p.gamma1);
  validate(p);
  return p;
}

double kent_log_normalizer(const KentParams& p) {
  return std::log(kent_normalizer_scaled(p.kappa, p.beta)) + p.kappa;
}

double kent_pdf(const KentParams& p, const Vec3& u) {
  validate(p);
  if (!is_unit(u)) throw std::invalid_argument("kent_pdf: direction is not unit norm");
  const double g1 = p.gamma1.dot(u);
  const double g2 = p.gamma2.dot(u);
  const double exponent = p.kappa * (p.mu.dot(u) - 1.0) + p.beta * (g1 * g1 - g2 * g2);
  return std::exp(exponent) / kent_normalizer_scaled(p.kappa, p.beta);
}

std::vector<Vec3> sample_kent(const KentParams& p, int n, std::uint64_t seed) {
  validate(p);
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  const double c_scaled = kent_normalizer_scaled(p.kappa, p.beta);
  // Uniform proposal with the tight density bound exp(kappa)/c; the mean
  // acceptance rate is c_scaled/(4 pi).
  const double acceptance = c_scaled / (4.0 * kPi);
  if (acceptance < 1e-6)
    throw NumericError("Kent rejection sampling acceptance below 1e-6 (kappa=" +
                       std::to_string(p.kappa) + ")");

  SplitMix64 rng(seed);
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    const double z = 1.0 - 2.0 * rng.uniform();
    const double phi = 2.0 * kPi * rng.uniform();
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 v(r * std::cos(phi), r * std::sin(phi), z);
    const double g1 = p.gamma1.dot(v);
    const double g2 = p.gamma2.dot(v);
    const double log_ratio = p.kappa * (p.mu.dot(v) - 1.0) + p.beta * (g1 * g1 - g2 * g2);
    if (rng.uniform() < std::exp(log_ratio)) out.push_back(v);
  }
  return out;
}

std::vector<double> add_rician_noise(std::span<const double> signal, double snr,
                                     std::uint64_t seed) {
  if (!(snr > 0.0)) throw std::invalid_argument("snr must be positive");
  std::vector<double> out(signal.begin(), signal.end());
  if (std::isinf(snr)) return out;
  const double sigma = 1.0 / snr;
  SplitMix64 rng(seed);
  for (double& e : out) {
    const double n1 = sigma * rng.gaussian();
    const double n2 = sigma * rng.gaussian();
    e = std::hypot(e + n1, n2);
  }
  return out;
}

SynthResult synth_signal(const PhantomVoxelSpec& spec, const AcquisitionScheme& scheme,
                         const DiffusivitySet& diff) {
  if (spec.populations.empty() || spec.populations.size() > 2)
    throw std::invalid_argument("phantom voxel needs 1 or 2 fiber populations");
  validate(spec.fractions);
  if (spec.directions_per_population < 1)
    throw std::invalid_argument("directions_per_population must be >= 1");

  // Two populations split the direction budget evenly.
  const int n_pop = static_cast<int>(spec.populations.size());
  const int per_pop = n_pop == 2 ? spec.directions_per_population / 2 : spec.directions_per_population;
  if (per_pop < 1) throw std::invalid_argument("directions_per_population too small to split");

  SynthResult res;
  res.truth.fractions = spec.fractions;
  std::vector<Vec3> fibers;
  for (int p = 0; p < n_pop; ++p) {
    res.truth.kent_means.push_back(spec.populations[static_cast<size_t>(p)].mu);
    auto draws = sample_kent(spec.populations[static_cast<size_t>(p)], per_pop,
                             derive_seed(spec.seed, 0x4b656e74ull + static_cast<std::uint64_t>(p)));
    for (Vec3& d : draws) {
      if (d.z() < 0.0) d = -d;  // fibers are axes; canonical hemisphere
      fibers.push_back(d);
    }
  }
  res.truth.sampled_directions = fibers;

  const double lambda_perp = tortuosity_lambda_perp(diff.lambda_par, spec.fractions);
  const double m_inv = 1.0 / static_cast<double>(fibers.size());
  const double nu_aniso = spec.fractions.nu_ic + spec.fractions.nu_ec;

  res.signal.resize(static_cast<size_t>(scheme.sample_count()));
  for (int i = 0; i < scheme.sample_count(); ++i) {
    const double b = scheme.bvalues[static_cast<size_t>(i)];
    if (b == 0.0) {
      res.signal[static_cast<size_t>(i)] = spec.fractions.sum();
      continue;
    }
    const Vec3& u = scheme.directions[static_cast<size_t>(i)];
    double acc = 0.0;
    if (nu_aniso > 0.0) {
      for (const Vec3& f : fibers) {
        const double c2 = f.dot(u) * f.dot(u);
        const double ic = std::exp(-b * diff.lambda_par * c2);
        const double ec = std::exp(-b * ((diff.lambda_par - lambda_perp) * c2 + lambda_perp));
        acc += spec.fractions.nu_ic * ic + spec.fractions.nu_ec * ec;
      }
      acc *= m_inv;
    }
    res.signal[static_cast<size_t>(i)] = acc + spec.fractions.nu_csf * std::exp(-b * diff.lambda_csf);
  }

  if (!std::isinf(spec.snr))
    res.signal = add_rician_noise(res.signal, spec.snr, derive_seed(spec.seed, 0x52696365ull));
  return res;
}

}  // namespace ndsh
