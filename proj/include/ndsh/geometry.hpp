#ifndef NDSH_GEOMETRY_HPP
#define NDSH_GEOMETRY_HPP

#include <Eigen/Dense>
#include <cmath>

namespace ndsh {

using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

inline bool is_unit(const Vec3& v, double tol = 1e-6) {
  return std::abs(v.norm() - 1.0) <= tol;
}

// Angle between two axes in degrees, ignoring sign (antipodal metric).
inline double axial_angle_deg(const Vec3& a, const Vec3& b) {
  double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  if (c > 1.0) c = 1.0;
  return rad_to_deg(std::acos(c));
}

// Some unit vector orthogonal to v; deterministic choice.
inline Vec3 any_orthogonal(const Vec3& v) {
  Vec3 ref = std::abs(v.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  return v.cross(ref).normalized();
}

// Rodrigues rotation of x about a unit axis.
inline Vec3 rotate_about(const Vec3& x, const Vec3& axis, double angle_rad) {
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  return x * c + axis.cross(x) * s + axis * (axis.dot(x) * (1.0 - c));
}

// Rotation matrix mapping +z onto the unit vector `to`.
inline Eigen::Matrix3d rotation_z_to(const Vec3& to) {
  const Vec3 z(0, 0, 1);
  const double c = z.dot(to);
  if (c > 1.0 - 1e-14) return Eigen::Matrix3d::Identity();
  if (c < -1.0 + 1e-14) {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    r(0, 0) = 1.0;
    r(1, 1) = -1.0;
    r(2, 2) = -1.0;
    return r;
  }
  const Vec3 axis = z.cross(to).normalized();
  const double angle = std::acos(c);
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

}  // namespace ndsh

#endif
