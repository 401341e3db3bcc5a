#include <doctest.h>

#include <cmath>

#include "ndsh/errors.hpp"
#include "ndsh/phantom.hpp"
#include "ndsh/rng.hpp"
#include "ndsh/scheme_io.hpp"
#include "ndsh/smt.hpp"
#include "oracles.hpp"

using namespace ndsh;

TEST_CASE("Kent density: uniform limit and beta = 0 closed form") {
  const KentParams uniform = make_kent(0.0, 0.0, Vec3(0, 0, 1));
  CHECK(kent_pdf(uniform, Vec3(1, 0, 0)) == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-14));

  // c(kappa, 0) = 4 pi sinh(kappa) / kappa, so at u = mu the density is
  // e^kappa kappa / (4 pi sinh kappa).
  const KentParams k1 = make_kent(1.0, 0.0, Vec3(0, 0, 1));
  CHECK(kent_pdf(k1, Vec3(0, 0, 1)) ==
        doctest::Approx(std::exp(1.0) / (4.0 * kPi * std::sinh(1.0))).epsilon(1e-12));
  const KentParams k32 = make_kent(32.0, 0.0, Vec3(0, 1, 0));
  const double expected = 32.0 / (4.0 * kPi * std::sinh(32.0)) * std::exp(32.0);
  CHECK(kent_pdf(k32, Vec3(0, 1, 0)) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("Kent density integrates to one over the sphere") {
  const auto sphere = oracles::uniform_sphere(10000);
  for (const auto& [kappa, beta] : std::vector<std::pair<double, double>>{
           {128.0, 0.0}, {128.0, 64.0}, {32.0, 16.0}, {32.0, 8.0}, {4.0, 2.0}, {4.0, 0.0}}) {
    const KentParams p = make_kent(kappa, beta, Vec3(0.2, -0.3, 0.5).normalized(), 30.0);
    double integral = 0.0;
    for (const auto& u : sphere) integral += kent_pdf(p, u);
    integral *= 4.0 * kPi / static_cast<double>(sphere.size());
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("Kent density with beta = 0 is rotationally symmetric about mu") {
  const Vec3 mu = Vec3(0.1, 0.7, 0.3).normalized();
  const KentParams p = make_kent(32.0, 0.0, mu);
  const Vec3 e1 = any_orthogonal(mu);
  const double theta = 0.7;
  double reference = -1.0;
  for (double roll = 0.0; roll < 6.0; roll += 0.37) {
    const Vec3 u = rotate_about(
        (mu * std::cos(theta) + e1 * std::sin(theta)).normalized(), mu, roll);
    const double v = kent_pdf(p, u);
    if (reference < 0.0)
      reference = v;
    else
      CHECK(std::abs(v - reference) < 1e-12 * reference + 1e-15);
  }
}

TEST_CASE("Kent parameter validation") {
  CHECK_THROWS_AS(make_kent(4.0, 3.0, Vec3(0, 0, 1)), std::invalid_argument);  // beta > kappa/2
  CHECK_THROWS_AS(make_kent(-1.0, 0.0, Vec3(0, 0, 1)), std::invalid_argument);
  KentParams skew = make_kent(8.0, 2.0, Vec3(0, 0, 1));
  skew.gamma1 = Vec3(0, 0, 1);  // no longer orthogonal to mu
  CHECK_THROWS_AS(kent_pdf(skew, Vec3(1, 0, 0)), std::invalid_argument);
}

TEST_CASE("Kent sampling is deterministic and concentrates around mu") {
  const Vec3 mu = Vec3(0.3, -0.1, 0.94).normalized();
  const KentParams p = make_kent(128.0, 0.0, mu);
  const auto a = sample_kent(p, 1000, 42);
  const auto b = sample_kent(p, 1000, 42);
  REQUIRE(a.size() == 1000);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x() == b[i].x());
    CHECK(a[i].y() == b[i].y());
    CHECK(a[i].z() == b[i].z());
  }

  Vec3 resultant(0, 0, 0);
  for (const auto& d : sample_kent(p, 10000, 7)) resultant += d;
  CHECK(axial_angle_deg(resultant.normalized(), mu) < 2.0);
}

TEST_CASE("Kent sampling at kappa = 0 is uniform (chi-square over equal-area bins)") {
  const auto draws = sample_kent(make_kent(0.0, 0.0, Vec3(0, 0, 1)), 100000, 3);
  // 10 z-bands x 10 azimuth sectors of equal area.
  std::array<int, 100> counts{};
  for (const auto& d : draws) {
    int zi = static_cast<int>((d.z() + 1.0) / 2.0 * 10.0);
    int ai = static_cast<int>((std::atan2(d.y(), d.x()) + kPi) / (2.0 * kPi) * 10.0);
    zi = std::clamp(zi, 0, 9);
    ai = std::clamp(ai, 0, 9);
    ++counts[static_cast<size_t>(zi * 10 + ai)];
  }
  const double expected = 100000.0 / 100.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // chi-square 99 dof, upper 0.99 quantile
  CHECK(chi2 < 134.642);
}

TEST_CASE("rejection draws match the analytic polar inverse-CDF sampler (beta = 0)") {
  // For beta = 0 the polar angle has CDF proportional to exp(kappa cos) sin;
  // cos theta = 1 + log(1 - U (1 - exp(-2 kappa))) / kappa.
  const double kappa = 8.0;
  const Vec3 mu(0, 0, 1);
  const auto rejection = sample_kent(make_kent(kappa, 0.0, mu), 60000, 11);

  SplitMix64 rng(17);
  std::vector<double> inverse_cdf(60000);
  for (auto& c : inverse_cdf)
    c = 1.0 + std::log1p(-rng.uniform() * (1.0 - std::exp(-2.0 * kappa))) / kappa;

  // Two-sample chi-square over 20 equal-probability bins of the inverse-CDF
  // sample's empirical quantiles.
  std::vector<double> sorted = inverse_cdf;
  std::sort(sorted.begin(), sorted.end());
  std::array<double, 19> edges{};
  for (int q = 1; q < 20; ++q) edges[static_cast<size_t>(q - 1)] = sorted[static_cast<size_t>(q * 60000 / 20)];

  std::array<int, 20> n1{}, n2{};
  const auto bin_of = [&](double c) {
    int b = 0;
    while (b < 19 && c > edges[static_cast<size_t>(b)]) ++b;
    return b;
  };
  for (const auto& d : rejection) ++n1[static_cast<size_t>(bin_of(d.dot(mu)))];
  for (double c : inverse_cdf) ++n2[static_cast<size_t>(bin_of(c))];
  double chi2 = 0.0;
  for (int b = 0; b < 20; ++b) {
    const double tot = n1[static_cast<size_t>(b)] + n2[static_cast<size_t>(b)];
    if (tot == 0.0) continue;
    const double d = n1[static_cast<size_t>(b)] - n2[static_cast<size_t>(b)];
    chi2 += d * d / tot;  // equal sample sizes
  }
  // chi-square 19 dof, upper 0.99 quantile
  CHECK(chi2 < 36.191);
}

TEST_CASE("synthetic signal: normalization, monotone decay, SMT rotation invariance") {
  const AcquisitionScheme scheme = make_incremental_scheme(6, {1000.0, 2000.0, 3000.0}, 90);
  DiffusivitySet diff;
  VolumeFractions f;
  f.nu_ic = 0.7;
  f.nu_ec = 0.3;

  PhantomVoxelSpec one;
  one.populations = {make_kent(128.0, 0.0, Vec3(0, 0, 1))};
  one.fractions = f;
  one.seed = 5;
  const SynthResult single = synth_signal(one, scheme, diff);
  CHECK(single.signal[0] == f.sum());  // exact at b = 0
  CHECK(single.truth.sampled_directions.size() == 100);
  for (const auto& d : single.truth.sampled_directions) CHECK(d.z() >= 0.0);

  const ShellMeans means = shell_means(single.signal, scheme);
  for (size_t sh = 1; sh < means.means.size(); ++sh)
    CHECK(means.means[sh] < means.means[sh - 1]);

  PhantomVoxelSpec two;
  two.populations = {make_kent(128.0, 0.0, Vec3(0, 0, 1)),
                     make_kent(128.0, 0.0, Vec3(1, 0, 0))};
  two.fractions = f;
  two.seed = 6;
  const SynthResult crossing = synth_signal(two, scheme, diff);
  CHECK(crossing.truth.sampled_directions.size() == 100);  // M/2 per population
  const ShellMeans cross_means = shell_means(crossing.signal, scheme);
  // Spherical means are invariant to the orientation distribution; the match
  // at b = 1000 is within 1%, looser at high b where the mean is small and
  // the 100-draw Monte-Carlo fluctuation is relatively larger.
  CHECK(std::abs(cross_means.means[1] - means.means[1]) / means.means[1] < 0.01);
  for (size_t sh = 2; sh < means.means.size(); ++sh)
    CHECK(std::abs(cross_means.means[sh] - means.means[sh]) / means.means[sh] < 0.03);

  PhantomVoxelSpec bad = one;
  bad.populations.clear();
  CHECK_THROWS_AS(synth_signal(bad, scheme, diff), std::invalid_argument);
}

TEST_CASE("Rician noise: identity at infinite SNR, correct mean at zero and unit signal") {
  std::vector<double> sig = {0.3, 0.8, 1.0};
  const auto same = add_rician_noise(sig, std::numeric_limits<double>::infinity(), 9);
  CHECK(same == sig);

  const int n = 1000000;
  std::vector<double> zeros(static_cast<size_t>(n), 0.0);
  const auto noisy0 = add_rician_noise(zeros, 20.0, 1234);
  double mean0 = 0.0;
  for (double v : noisy0) mean0 += v;
  mean0 /= n;
  const double rayleigh = oracles::rician_mean(0.0, 0.05);
  CHECK(rayleigh == doctest::Approx(0.06266570686577501).epsilon(1e-12));
  CHECK(std::abs(mean0 - rayleigh) / rayleigh < 0.01);

  std::vector<double> ones(static_cast<size_t>(n), 1.0);
  const auto noisy1 = add_rician_noise(ones, 20.0, 4321);
  double mean1 = 0.0;
  for (double v : noisy1) mean1 += v;
  mean1 /= n;
  const double exact = oracles::rician_mean(1.0, 0.05);
  CHECK(exact == doctest::Approx(1.0012507842028608).epsilon(1e-10));
  CHECK(std::abs(mean1 - exact) / exact < 0.005);

  CHECK_THROWS_AS(add_rician_noise(sig, 0.0, 1), std::invalid_argument);

  const auto again = add_rician_noise(sig, 20.0, 77);
  const auto again2 = add_rician_noise(sig, 20.0, 77);
  CHECK(again == again2);
}

TEST_CASE("pathological Kent concentration raises a numeric error") {
  // The rejection acceptance rate c/(4 pi exp(kappa)) collapses below 1e-6
  // once kappa exceeds ~5e5.
  const KentParams p = make_kent(6.0e5, 0.0, Vec3(0, 0, 1));
  CHECK_THROWS_AS(sample_kent(p, 10, 1), NumericError);
}
