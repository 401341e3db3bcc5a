#include "ndsh/sh.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ndsh {

namespace {

void check_order(int order) {
  if (order < 0 || order > kMaxShOrder || order % 2 != 0)
    throw std::invalid_argument("SH order must be even and in [0, " +
                                std::to_string(kMaxShOrder) + "], got " + std::to_string(order));
}

// Associated Legendre values P_l^m(x) for all l <= order, 0 <= m <= l,
// without the Condon-Shortley phase. s = sin(theta) passed separately so the
// caller can use hypot(x, y) instead of sqrt(1 - z^2).
// Layout: p[l * (order + 1) + m].
void legendre_table(int order, double ct, double st, std::vector<double>& p) {
  const int w = order + 1;
  p.assign(static_cast<size_t>(w) * w, 0.0);
  p[0] = 1.0;
  for (int m = 1; m <= order; ++m)
    p[m * w + m] = p[(m - 1) * w + (m - 1)] * (2 * m - 1) * st;
  for (int m = 0; m < order; ++m)
    p[(m + 1) * w + m] = ct * (2 * m + 1) * p[m * w + m];
  for (int m = 0; m <= order; ++m)
    for (int l = m + 2; l <= order; ++l)
      p[l * w + m] =
          (ct * (2 * l - 1) * p[(l - 1) * w + m] - (l + m - 1) * p[(l - 2) * w + m]) / (l - m);
}

double normalization(int l, int m) {
  // sqrt((2l+1)(l-m)! / (4 pi (l+m)!))
  double ratio = 1.0;
  for (int k = l - m + 1; k <= l + m; ++k) ratio /= k;
  return std::sqrt((2 * l + 1) * ratio / (4.0 * kPi));
}

}  // namespace

int sh_count(int order) {
  check_order(order);
  return (order + 1) * (order + 2) / 2;
}

int sh_flat_index(int l, int m) {
  if (l < 0 || l % 2 != 0 || std::abs(m) > l)
    throw std::invalid_argument("invalid SH index (l=" + std::to_string(l) +
                                ", m=" + std::to_string(m) + ")");
  return l * (l + 1) / 2 + m;
}

ShIndex sh_index_from_flat(int j) {
  if (j < 0) throw std::invalid_argument("negative flat SH index");
  int l = 0;
  while (l * (l + 1) / 2 + l < j) l += 2;
  return ShIndex{l, j - l * (l + 1) / 2};
}

int sh_order_from_count(int n_coeffs) {
  for (int order = 0; order <= kMaxShOrder; order += 2)
    if ((order + 1) * (order + 2) / 2 == n_coeffs) return order;
  throw std::invalid_argument("no even SH order has " + std::to_string(n_coeffs) +
                              " coefficients");
}

Eigen::MatrixXd eval_sh(int order, std::span<const Vec3> dirs) {
  const int n_coeffs = sh_count(order);
  if (dirs.empty()) throw std::invalid_argument("eval_sh: empty direction list");

  Eigen::MatrixXd basis(static_cast<Eigen::Index>(dirs.size()), n_coeffs);

  // Normalizations depend only on (l, m).
  std::vector<double> norm(static_cast<size_t>(n_coeffs));
  for (int l = 0; l <= order; l += 2)
    for (int m = 0; m <= l; ++m) norm[static_cast<size_t>(sh_flat_index(l, m))] = normalization(l, m);

  const double sqrt2 = std::sqrt(2.0);
  std::vector<double> p;
  for (size_t i = 0; i < dirs.size(); ++i) {
    const Vec3& u = dirs[i];
    if (!is_unit(u))
      throw std::invalid_argument("eval_sh: direction " + std::to_string(i) + " is not unit norm");
    const double ct = u.z();
    const double st = std::hypot(u.x(), u.y());
    const double phi = std::atan2(u.y(), u.x());
    legendre_table(order, ct, st, p);
    const int w = order + 1;
    for (int l = 0; l <= order; l += 2) {
      basis(static_cast<Eigen::Index>(i), sh_flat_index(l, 0)) = norm[static_cast<size_t>(sh_flat_index(l, 0))] * p[l * w + 0];
      for (int m = 1; m <= l; ++m) {
        const double base = norm[static_cast<size_t>(sh_flat_index(l, m))] * p[l * w + m] * sqrt2;
        basis(static_cast<Eigen::Index>(i), sh_flat_index(l, -m)) = base * std::cos(m * phi);
        basis(static_cast<Eigen::Index>(i), sh_flat_index(l, m)) = base * std::sin(m * phi);
      }
    }
  }
  return basis;
}

Eigen::MatrixXd eval_sh(int order, const std::vector<Vec3>& dirs) {
  return eval_sh(order, std::span<const Vec3>(dirs));
}

Eigen::VectorXd eval_sh_direction(int order, const Vec3& dir) {
  return eval_sh(order, std::span<const Vec3>(&dir, 1)).row(0);
}

std::vector<Vec3> fibonacci_hemisphere(int count) {
  // Golden-angle spiral with z in (0, 1); uniform z is uniform in cap area.
  const double golden_angle = 2.0 * kPi * (1.0 - 2.0 / (1.0 + std::sqrt(5.0)));
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double z = (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden_angle * i;
    dirs.emplace_back(r * std::cos(a), r * std::sin(a), z);
  }
  return dirs;
}

std::vector<Vec3> fibonacci_sphere(int count) {
  const double golden_angle = 2.0 * kPi * (1.0 - 2.0 / (1.0 + std::sqrt(5.0)));
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden_angle * i;
    dirs.emplace_back(r * std::cos(a), r * std::sin(a), z);
  }
  return dirs;
}

SphericalGrid make_hemisphere_grid(int count) {
  if (count < 12)
    throw std::invalid_argument("hemisphere grid needs at least 12 points, got " +
                                std::to_string(count));
  return SphericalGrid{fibonacci_hemisphere(count)};
}

std::vector<double> sh_expand_on_grid(const Eigen::VectorXd& coeffs, const SphericalGrid& grid) {
  const int order = sh_order_from_count(static_cast<int>(coeffs.size()));
  const Eigen::MatrixXd basis = eval_sh(order, grid.directions);
  const Eigen::VectorXd amp = basis * coeffs;
  return std::vector<double>(amp.data(), amp.data() + amp.size());
}

}  // namespace ndsh
