#ifndef NDSH_SH_HPP
#define NDSH_SH_HPP

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ndsh/geometry.hpp"

namespace ndsh {

// Real symmetric spherical harmonics over even bands l = 0, 2, ..., N:
//   m < 0 :  sqrt(2) * N_l^|m| * P_l^|m|(cos theta) * cos(|m| phi)
//   m = 0 :            N_l^0   * P_l  (cos theta)
//   m > 0 :  sqrt(2) * N_l^m   * P_l^m (cos theta) * sin(m phi)
// with N_l^m = sqrt((2l+1)(l-m)! / (4 pi (l+m)!)) and no Condon-Shortley phase.
// Flat coefficient index j = l(l+1)/2 + m, bands ascending, m = -l..l inside a band.

inline constexpr int kMaxShOrder = 16;

// Number of coefficients for even max order N: (N+1)(N+2)/2.
int sh_count(int order);

int sh_flat_index(int l, int m);

struct ShIndex {
  int l;
  int m;
};

ShIndex sh_index_from_flat(int j);

// Even order such that sh_count(order) == n_coeffs; throws if no such order.
int sh_order_from_count(int n_coeffs);

// Sampled basis, one row per direction, one column per (l, m).
Eigen::MatrixXd eval_sh(int order, std::span<const Vec3> dirs);
Eigen::MatrixXd eval_sh(int order, const std::vector<Vec3>& dirs);

// Single-direction row.
Eigen::VectorXd eval_sh_direction(int order, const Vec3& dir);

struct SphericalGrid {
  std::vector<Vec3> directions;  // all z >= 0, pairwise distinct, no antipodes
};

// Deterministic Fibonacci-spiral hemisphere point set; pure function of count.
SphericalGrid make_hemisphere_grid(int count);

// Quasi-uniform full-sphere point set (test quadrature, dense synthesis shells).
std::vector<Vec3> fibonacci_sphere(int count);

// Internal spiral without the public count >= 12 floor; used for small
// deterministic orientation sets.
std::vector<Vec3> fibonacci_hemisphere(int count);

// rho(v_i) = sum_lm c_lm Y_l^m(v_i) for every grid direction.
std::vector<double> sh_expand_on_grid(const Eigen::VectorXd& coeffs, const SphericalGrid& grid);

}  // namespace ndsh

#endif
