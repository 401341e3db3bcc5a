#include "ndsh/peaks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ndsh {

namespace {

constexpr int kNeighborCount = 8;

std::vector<std::array<int, kNeighborCount>> build_neighbors(const std::vector<Vec3>& dirs) {
  const int n = static_cast<int>(dirs.size());
  std::vector<std::array<int, kNeighborCount>> nb(static_cast<size_t>(n));
  std::vector<std::pair<double, int>> scored(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double c = std::abs(dirs[static_cast<size_t>(i)].dot(dirs[static_cast<size_t>(j)]));
      scored[static_cast<size_t>(j)] = {i == j ? -2.0 : c, j};
    }
    std::partial_sort(scored.begin(), scored.begin() + kNeighborCount, scored.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; k < kNeighborCount; ++k) nb[static_cast<size_t>(i)][static_cast<size_t>(k)] = scored[static_cast<size_t>(k)].second;
  }
  return nb;
}

// One Newton step of a quadratic model fitted to the peak and its neighbors in
// tangent-plane coordinates. Falls back to the grid point if the fit is
// degenerate or the step leaves the neighborhood.
Vec3 refine_peak(const Vec3& dir, const std::array<int, kNeighborCount>& neighbors,
                 const std::vector<Vec3>& dirs, const Eigen::VectorXd& amplitudes,
                 double self_amplitude) {
  const Vec3 e1 = any_orthogonal(dir);
  const Vec3 e2 = dir.cross(e1);

  Eigen::MatrixXd design(kNeighborCount + 1, 6);
  Eigen::VectorXd rhs(kNeighborCount + 1);
  double max_r = 0.0;
  for (int k = 0; k <= kNeighborCount; ++k) {
    Vec3 v = k == 0 ? dir : dirs[static_cast<size_t>(neighbors[static_cast<size_t>(k - 1)])];
    if (v.dot(dir) < 0.0) v = -v;  // antipodal flip into the local chart
    const double u1 = v.dot(e1);
    const double u2 = v.dot(e2);
    design.row(k) << 1.0, u1, u2, u1 * u1, u1 * u2, u2 * u2;
    rhs[k] = k == 0 ? self_amplitude : amplitudes[neighbors[static_cast<size_t>(k - 1)]];
    max_r = std::max(max_r, std::hypot(u1, u2));
  }
  const Eigen::VectorXd q = design.colPivHouseholderQr().solve(rhs);

  // Stationary point of q0 + q1 u + q2 v + q3 u^2 + q4 uv + q5 v^2.
  const double det = 4.0 * q[3] * q[5] - q[4] * q[4];
  if (std::abs(det) < 1e-14 || q[3] >= 0.0) return dir;  // not a proper maximum
  const double u1 = (-2.0 * q[5] * q[1] + q[4] * q[2]) / det;
  const double u2 = (-2.0 * q[3] * q[2] + q[4] * q[1]) / det;
  if (std::hypot(u1, u2) > max_r) return dir;
  return (dir * std::sqrt(std::max(0.0, 1.0 - u1 * u1 - u2 * u2)) + e1 * u1 + e2 * u2)
      .normalized();
}

}  // namespace

PeakFinder::PeakFinder(int order, SphericalGrid search_grid)
    : order_(order), grid_(std::move(search_grid)) {
  if (grid_.directions.size() < kNeighborCount + 1)
    throw std::invalid_argument("search grid too small for peak extraction");
  sh_ = eval_sh(order_, grid_.directions);
  neighbors_ = build_neighbors(grid_.directions);
}

PeakSet PeakFinder::extract(const FodfCoefficients& coeffs, const PeakConfig& config) const {
  if (!(config.rel_threshold > 0.0) || !(config.rel_threshold < 1.0))
    throw std::invalid_argument("rel_threshold must lie in (0, 1)");
  if (!(config.min_sep_deg > 0.0)) throw std::invalid_argument("min_sep_deg must be positive");
  if (coeffs.coeffs.size() != sh_.cols())
    throw std::invalid_argument("coefficient count does not match peak finder order");

  PeakSet out;
  const Eigen::VectorXd amp = sh_ * coeffs.coeffs;
  const double max_amp = amp.maxCoeff();
  const double min_amp = amp.minCoeff();
  if (max_amp <= 0.0) return out;
  // Flat field: no distinguished maxima.
  if (max_amp - min_amp <= 1e-6 * std::abs(max_amp)) return out;

  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(grid_.directions.size()); ++i) {
    bool is_max = true;
    for (int k = 0; k < kNeighborCount && is_max; ++k)
      if (amp[neighbors_[static_cast<size_t>(i)][static_cast<size_t>(k)]] >= amp[i]) is_max = false;
    if (is_max && amp[i] > 0.0) candidates.push_back(i);
  }
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) { return amp[a] > amp[b]; });

  const double cos_sep = std::cos(deg_to_rad(config.min_sep_deg));
  for (int i : candidates) {
    if (out.count() >= config.max_peaks) break;
    if (amp[i] < config.rel_threshold * max_amp) break;
    Vec3 dir = refine_peak(grid_.directions[static_cast<size_t>(i)], neighbors_[static_cast<size_t>(i)],
                           grid_.directions, amp, amp[i]);
    double a = eval_sh_direction(order_, dir).dot(coeffs.coeffs);
    if (a < amp[i]) {  // refinement must not lose amplitude
      dir = grid_.directions[static_cast<size_t>(i)];
      a = amp[i];
    }
    bool separated = true;
    for (const Vec3& p : out.directions)
      if (std::abs(p.dot(dir)) > cos_sep) {
        separated = false;
        break;
      }
    if (!separated) continue;
    out.directions.push_back(dir);
    out.amplitudes.push_back(a);
  }
  // Refinement can nudge amplitudes past each other; restore descending order.
  std::vector<size_t> by_amp(out.directions.size());
  std::iota(by_amp.begin(), by_amp.end(), size_t{0});
  std::stable_sort(by_amp.begin(), by_amp.end(),
                   [&](size_t a, size_t b) { return out.amplitudes[a] > out.amplitudes[b]; });
  PeakSet sorted;
  for (size_t k : by_amp) {
    sorted.directions.push_back(out.directions[k]);
    sorted.amplitudes.push_back(out.amplitudes[k]);
  }
  return sorted;
}

PeakSet extract_peaks(const FodfCoefficients& coeffs, const SphericalGrid& search_grid,
                      const PeakConfig& config) {
  PeakFinder finder(coeffs.order, search_grid);
  return finder.extract(coeffs, config);
}

AngularErrorResult angular_error(const PeakSet& peaks, std::span<const Vec3> ground_truth) {
  if (ground_truth.empty()) throw std::invalid_argument("empty ground-truth direction list");
  AngularErrorResult out;
  if (peaks.count() == 0) {
    out.degrees = 90.0;
    out.empty_peaks = true;
    return out;
  }
  double sum = 0.0;
  for (const Vec3& gt : ground_truth) {
    double best = 90.0;
    for (const Vec3& p : peaks.directions) best = std::min(best, axial_angle_deg(gt, p));
    sum += best;
  }
  out.degrees = sum / static_cast<double>(ground_truth.size());
  return out;
}

}  // namespace ndsh
