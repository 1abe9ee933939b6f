#pragma once

// Quaternion and unit dual quaternion algebra. Coefficient order is always
// (w, x, y, z); a Vec8 stacks the primary part followed by the dual part.

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "railkit/error.hpp"

namespace railkit {

using Vec3 = Eigen::Vector3d;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static constexpr Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }
  static constexpr Quaternion zero() { return {0.0, 0.0, 0.0, 0.0}; }
  static Quaternion pure(const Vec3& v) { return {0.0, v.x(), v.y(), v.z()}; }

  Vec3 vec() const { return {x, y, z}; }
  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

inline Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}
inline Quaternion operator+(const Quaternion& a, const Quaternion& b) {
  return {a.w + b.w, a.x + b.x, a.y + b.y, a.z + b.z};
}
inline Quaternion operator-(const Quaternion& a, const Quaternion& b) {
  return {a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z};
}
inline Quaternion operator-(const Quaternion& a) { return {-a.w, -a.x, -a.y, -a.z}; }
inline Quaternion operator*(double s, const Quaternion& a) {
  return {s * a.w, s * a.x, s * a.y, s * a.z};
}
inline Quaternion conj(const Quaternion& a) { return {a.w, -a.x, -a.y, -a.z}; }

/// Rotation of `angle` rad about the (not necessarily unit) `axis`.
inline Quaternion axis_angle(const Vec3& axis, double angle) {
  const Vec3 n = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return {std::cos(0.5 * angle), s * n.x(), s * n.y(), s * n.z()};
}

/// Roll-pitch-yaw (extrinsic x, then y, then z) to a unit quaternion.
inline Quaternion from_rpy(const Vec3& rpy) {
  return axis_angle(Vec3::UnitZ(), rpy.z()) * axis_angle(Vec3::UnitY(), rpy.y()) *
         axis_angle(Vec3::UnitX(), rpy.x());
}

inline Vec3 rotate(const Quaternion& r, const Vec3& v) {
  return (r * Quaternion::pure(v) * conj(r)).vec();
}

struct DualQuaternion {
  Quaternion primary = Quaternion::identity();
  Quaternion dual = Quaternion::zero();

  static constexpr DualQuaternion identity() {
    return {Quaternion::identity(), Quaternion::zero()};
  }

  friend bool operator==(const DualQuaternion&, const DualQuaternion&) = default;
};

using Pose = DualQuaternion;

inline DualQuaternion operator*(const DualQuaternion& a, const DualQuaternion& b) {
  return {a.primary * b.primary, a.primary * b.dual + a.dual * b.primary};
}
inline DualQuaternion operator+(const DualQuaternion& a, const DualQuaternion& b) {
  return {a.primary + b.primary, a.dual + b.dual};
}
inline DualQuaternion operator-(const DualQuaternion& a, const DualQuaternion& b) {
  return {a.primary - b.primary, a.dual - b.dual};
}
inline DualQuaternion operator-(const DualQuaternion& a) { return {-a.primary, -a.dual}; }
inline DualQuaternion operator*(double s, const DualQuaternion& a) {
  return {s * a.primary, s * a.dual};
}

/// Conjugates both parts. For unit poses this is the inverse.
inline DualQuaternion conj(const DualQuaternion& a) { return {conj(a.primary), conj(a.dual)}; }

inline constexpr double kUnitRotationTolerance = 1e-9;
inline constexpr double kUnitPoseTolerance = 1e-9;

inline bool is_unit(const DualQuaternion& p, double tol = kUnitPoseTolerance) {
  // Written so that NaN coefficients fail the check.
  return std::abs(p.primary.norm() - 1.0) <= tol && std::abs(p.primary.dot(p.dual)) <= tol;
}

inline DualQuaternion from_rotation_translation(const Quaternion& r, const Vec3& t) {
  if (!(std::abs(r.norm() - 1.0) <= kUnitRotationTolerance)) {
    throw Error(ErrorCode::NonUnitRotation, "rotation quaternion norm is " + std::to_string(r.norm()));
  }
  return {r, 0.5 * (Quaternion::pure(t) * r)};
}

inline DualQuaternion from_translation(const Vec3& t) {
  return {Quaternion::identity(), Quaternion::pure(0.5 * t)};
}

inline DualQuaternion from_rotation(const Quaternion& r) { return from_rotation_translation(r, Vec3::Zero()); }

/// Translation of a pose without the unit check; used on hot paths where the
/// pose comes from composing unit factors.
inline Vec3 translation_of(const DualQuaternion& p) {
  return (2.0 * (p.dual * conj(p.primary))).vec();
}

struct RigidTransform {
  Quaternion rotation;
  Vec3 translation;
};

inline RigidTransform decompose(const DualQuaternion& p) {
  if (!is_unit(p)) {
    throw Error(ErrorCode::NonUnitPose, "pose is not a unit dual quaternion");
  }
  return {p.primary, translation_of(p)};
}

/// Applies the rigid transform `p` to the point `v`.
inline Vec3 transform_point(const DualQuaternion& p, const Vec3& v) {
  return rotate(p.primary, v) + translation_of(p);
}

/// Projects a drifted pose back onto the unit dual quaternions.
inline DualQuaternion normalize(const DualQuaternion& p) {
  const double n = p.primary.norm();
  const Quaternion r = (1.0 / n) * p.primary;
  const Quaternion d = (1.0 / n) * p.dual;
  // Remove the component of the dual part that breaks orthogonality.
  return {r, d - r.dot(d) * r};
}

inline Vec8 to_vec8(const DualQuaternion& p) {
  Vec8 v;
  v << p.primary.w, p.primary.x, p.primary.y, p.primary.z, p.dual.w, p.dual.x, p.dual.y, p.dual.z;
  return v;
}

inline DualQuaternion from_vec8(const Vec8& v) {
  return {{v[0], v[1], v[2], v[3]}, {v[4], v[5], v[6], v[7]}};
}

namespace detail {

inline Eigen::Matrix4d hamilton_plus(const Quaternion& q) {
  Eigen::Matrix4d m;
  m << q.w, -q.x, -q.y, -q.z,
       q.x, q.w, -q.z, q.y,
       q.y, q.z, q.w, -q.x,
       q.z, -q.y, q.x, q.w;
  return m;
}

inline Eigen::Matrix4d hamilton_minus(const Quaternion& q) {
  Eigen::Matrix4d m;
  m << q.w, -q.x, -q.y, -q.z,
       q.x, q.w, q.z, -q.y,
       q.y, -q.z, q.w, q.x,
       q.z, q.y, -q.x, q.w;
  return m;
}

}  // namespace detail

/// vec8(a * b) == hamilton_plus(a) * vec8(b)
inline Mat8 hamilton_plus(const DualQuaternion& a) {
  Mat8 m = Mat8::Zero();
  m.topLeftCorner<4, 4>() = detail::hamilton_plus(a.primary);
  m.bottomLeftCorner<4, 4>() = detail::hamilton_plus(a.dual);
  m.bottomRightCorner<4, 4>() = detail::hamilton_plus(a.primary);
  return m;
}

/// vec8(a * b) == hamilton_minus(b) * vec8(a)
inline Mat8 hamilton_minus(const DualQuaternion& b) {
  Mat8 m = Mat8::Zero();
  m.topLeftCorner<4, 4>() = detail::hamilton_minus(b.primary);
  m.bottomLeftCorner<4, 4>() = detail::hamilton_minus(b.dual);
  m.bottomRightCorner<4, 4>() = detail::hamilton_minus(b.primary);
  return m;
}

}  // namespace railkit
