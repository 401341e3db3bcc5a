#include <doctest.h>

#include <cmath>

#include "ndsh/peaks.hpp"
#include "oracles.hpp"

using namespace ndsh;

namespace {

// Bandlimited delta mixture: sum over targets of the SH projection.
FodfCoefficients delta_mix(int order, const std::vector<Vec3>& targets) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(sh_count(order));
  for (const Vec3& t : targets) c += eval_sh_direction(order, t);
  return {c, order};
}

}  // namespace

TEST_CASE("single-fiber fODF yields one peak close to the fiber") {
  const FodfCoefficients c = delta_mix(8, {Vec3(0, 0, 1)});
  const PeakSet peaks = extract_peaks(c, make_hemisphere_grid(3000));
  REQUIRE(peaks.count() == 1);
  CHECK(axial_angle_deg(peaks.directions[0], Vec3(0, 0, 1)) < 2.0);

  // off-grid fiber
  const Vec3 fiber = Vec3(0.3, -0.5, 0.81).normalized();
  const PeakSet peaks2 = extract_peaks(delta_mix(8, {fiber}), make_hemisphere_grid(3000));
  REQUIRE(peaks2.count() == 1);
  CHECK(axial_angle_deg(peaks2.directions[0], fiber) < 2.0);
}

TEST_CASE("isotropic fODF yields no peaks") {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(45);
  c[0] = 1.0 / std::sqrt(4.0 * oracles::kPi);
  const PeakSet peaks = extract_peaks({c, 8}, make_hemisphere_grid(3000));
  CHECK(peaks.count() == 0);

  // all-negative field
  Eigen::VectorXd neg = -c;
  CHECK(extract_peaks({neg, 8}, make_hemisphere_grid(3000)).count() == 0);
}

TEST_CASE("60 degree crossing yields two peaks near the generators") {
  const Vec3 d1(0, 0, 1);
  const Vec3 d2(std::sin(deg_to_rad(60.0)), 0, std::cos(deg_to_rad(60.0)));
  const PeakSet peaks = extract_peaks(delta_mix(8, {d1, d2}), make_hemisphere_grid(3000));
  REQUIRE(peaks.count() == 2);
  const double a1 = std::min(axial_angle_deg(peaks.directions[0], d1),
                             axial_angle_deg(peaks.directions[1], d1));
  const double a2 = std::min(axial_angle_deg(peaks.directions[0], d2),
                             axial_angle_deg(peaks.directions[1], d2));
  CHECK(a1 < 5.0);
  CHECK(a2 < 5.0);
  CHECK(peaks.amplitudes[0] >= peaks.amplitudes[1]);
}

TEST_CASE("peak extraction respects the separation and count limits") {
  const Vec3 d1(0, 0, 1);
  const Vec3 d2 = Vec3(std::sin(deg_to_rad(15.0)), 0, std::cos(deg_to_rad(15.0)));
  PeakConfig cfg;
  cfg.min_sep_deg = 25.0;
  // Two lobes 15 degrees apart merge under a 25-degree separation floor.
  const PeakSet peaks = extract_peaks(delta_mix(8, {d1, d2}), make_hemisphere_grid(3000), cfg);
  CHECK(peaks.count() == 1);

  PeakConfig one;
  one.max_peaks = 1;
  const Vec3 d3(1, 0, 0);
  CHECK(extract_peaks(delta_mix(8, {d1, d3}), make_hemisphere_grid(3000), one).count() == 1);

  PeakConfig bad;
  bad.rel_threshold = 1.5;
  CHECK_THROWS_AS(extract_peaks(delta_mix(8, {d1}), make_hemisphere_grid(3000), bad),
                  std::invalid_argument);
}

TEST_CASE("angular error: exact, offset, and assignment cases") {
  PeakSet exact;
  exact.directions = {Vec3(0, 0, 1), Vec3(1, 0, 0)};
  exact.amplitudes = {1.0, 0.9};
  const std::vector<Vec3> gt = {Vec3(0, 0, 1), Vec3(1, 0, 0)};
  CHECK(angular_error(exact, gt).degrees == doctest::Approx(0.0).epsilon(1e-12));

  PeakSet single;
  single.directions = {Vec3(0, 0, 1)};
  single.amplitudes = {1.0};
  const Vec3 tilted(std::sin(deg_to_rad(10.0)), 0, std::cos(deg_to_rad(10.0)));
  CHECK(angular_error(single, std::vector<Vec3>{tilted}).degrees ==
        doctest::Approx(10.0).epsilon(1e-9));
  // antipodal symmetry
  CHECK(angular_error(single, std::vector<Vec3>{(-tilted).eval()}).degrees ==
        doctest::Approx(10.0).epsilon(1e-9));

  PeakSet zx;
  zx.directions = {Vec3(0, 0, 1), Vec3(1, 0, 0)};
  zx.amplitudes = {1.0, 1.0};
  const std::vector<Vec3> zy = {Vec3(0, 0, 1), Vec3(0, 1, 0)};
  CHECK(angular_error(zx, zy).degrees == doctest::Approx(45.0).epsilon(1e-9));

  PeakSet empty;
  const AngularErrorResult r = angular_error(empty, gt);
  CHECK(r.degrees == 90.0);
  CHECK(r.empty_peaks);

  CHECK_THROWS_AS(angular_error(exact, std::vector<Vec3>{}), std::invalid_argument);
}
