#pragma once

// Geometric primitives, signed distances between primitive pairs and the
// Jacobians of those distances with respect to joint velocities.
//
// Every distance is reported together with two witness points and a unit
// normal n such that moving the first primitive along n increases the
// distance. Since the distance is a minimum over the witness parameters, its
// rate of change is n . (v_a - v_b), where v_a and v_b are the velocities of
// the material points under the witnesses. The Jacobians below are built from
// that identity.

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>

#include "railkit/chain.hpp"
#include "railkit/pose.hpp"

namespace railkit {

enum class Shape { Point, Line, Plane, Sphere };

constexpr std::string_view to_string(Shape s) {
  switch (s) {
    case Shape::Point: return "point";
    case Shape::Line: return "line";
    case Shape::Plane: return "plane";
    case Shape::Sphere: return "sphere";
  }
  return "?";
}

struct Attachment {
  enum class Kind { Environment, Robot };
  Kind kind = Kind::Environment;
  /// World pose for environment primitives, offset from the joint frame for
  /// robot primitives.
  Pose pose = Pose::identity();
  std::size_t branch = 0;  // robot only, 0-based
  std::size_t joint = 0;   // robot only, 0-based; frame right after this joint

  static Attachment environment(Pose world = Pose::identity()) { return {Kind::Environment, world, 0, 0}; }
  static Attachment robot(std::size_t branch, std::size_t joint, Pose offset = Pose::identity()) {
    return {Kind::Robot, offset, branch, joint};
  }
};

/// Shape parameters are expressed in the attachment frame. `axis` is the line
/// direction or the plane normal; `origin` is the point, a point on the line or
/// plane, or the sphere center.
struct Primitive {
  Shape shape = Shape::Point;
  Vec3 origin = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double radius = 0.0;
  Attachment attachment;

  static Primitive point(Vec3 p, Attachment at = {}) { return {Shape::Point, p, Vec3::UnitZ(), 0.0, at}; }
  static Primitive line(Vec3 p, Vec3 dir, Attachment at = {}) { return {Shape::Line, p, dir, 0.0, at}; }
  static Primitive plane(Vec3 p, Vec3 normal, Attachment at = {}) { return {Shape::Plane, p, normal, 0.0, at}; }
  static Primitive sphere(Vec3 c, double r, Attachment at = {}) { return {Shape::Sphere, c, Vec3::UnitZ(), r, at}; }
};

inline void validate(const Primitive& p) {
  if ((p.shape == Shape::Line || p.shape == Shape::Plane) && !(std::abs(p.axis.norm() - 1.0) <= 1e-9)) {
    throw Error(ErrorCode::ParseError, std::string(to_string(p.shape)) + " axis must be a unit vector");
  }
  if (p.shape == Shape::Sphere && !(p.radius > 0.0)) {
    throw Error(ErrorCode::ParseError, "sphere radius must be positive");
  }
}

/// A primitive resolved into world coordinates.
struct WorldPrimitive {
  Shape shape = Shape::Point;
  Vec3 origin = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double radius = 0.0;
};

inline WorldPrimitive place(const Primitive& p, const Pose& frame) {
  const Pose world = frame * p.attachment.pose;
  return {p.shape, transform_point(world, p.origin), rotate(world.primary, p.axis), p.radius};
}

struct DistanceResult {
  double d = 0.0;
  Vec3 witness_a = Vec3::Zero();
  Vec3 witness_b = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
};

namespace detail {

inline Vec3 any_perpendicular(const Vec3& u) {
  const Vec3 trial = std::abs(u.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return u.cross(trial).normalized();
}

inline DistanceResult point_point(const WorldPrimitive& a, const WorldPrimitive& b) {
  const Vec3 diff = a.origin - b.origin;
  const double d = diff.norm();
  return {d, a.origin, b.origin, d > 0.0 ? Vec3(diff / d) : Vec3::UnitX()};
}

inline DistanceResult point_line(const WorldPrimitive& p, const WorldPrimitive& l) {
  const Vec3 w = p.origin - l.origin;
  const Vec3 foot = l.origin + w.dot(l.axis) * l.axis;
  const Vec3 perp = p.origin - foot;
  const double d = perp.norm();
  return {d, p.origin, foot, d > 0.0 ? Vec3(perp / d) : any_perpendicular(l.axis)};
}

inline DistanceResult point_plane(const WorldPrimitive& p, const WorldPrimitive& pl) {
  const double d = (p.origin - pl.origin).dot(pl.axis);
  return {d, p.origin, p.origin - d * pl.axis, pl.axis};
}

inline DistanceResult point_sphere(const WorldPrimitive& p, const WorldPrimitive& s) {
  const Vec3 diff = p.origin - s.origin;
  const double c = diff.norm();
  const Vec3 n = c > 0.0 ? Vec3(diff / c) : Vec3::UnitX();
  return {c - s.radius, p.origin, s.origin + s.radius * n, n};
}

inline DistanceResult sphere_sphere(const WorldPrimitive& a, const WorldPrimitive& b) {
  const Vec3 diff = a.origin - b.origin;
  const double c = diff.norm();
  const Vec3 n = c > 0.0 ? Vec3(diff / c) : Vec3::UnitX();
  return {c - (a.radius + b.radius), a.origin - a.radius * n, b.origin + b.radius * n, n};
}

inline DistanceResult sphere_plane(const WorldPrimitive& s, const WorldPrimitive& pl) {
  const double h = (s.origin - pl.origin).dot(pl.axis);
  return {h - s.radius, s.origin - s.radius * pl.axis, s.origin - h * pl.axis, pl.axis};
}

inline constexpr double kParallelTolerance = 1e-9;

inline DistanceResult line_line(const WorldPrimitive& a, const WorldPrimitive& b) {
  const Vec3 m = a.axis.cross(b.axis);
  if (m.norm() <= kParallelTolerance) {
    // Parallel lines: the distance is the same from any point of a; use its
    // stored origin as the witness.
    const WorldPrimitive pa{Shape::Point, a.origin, a.axis, 0.0};
    return point_line(pa, b);
  }
  const Vec3 w0 = a.origin - b.origin;
  const double cross = a.axis.dot(b.axis);
  const double da = a.axis.dot(w0);
  const double db = b.axis.dot(w0);
  const double denom = 1.0 - cross * cross;
  const double s = (cross * db - da) / denom;
  const double t = (db - cross * da) / denom;
  const Vec3 pa = a.origin + s * a.axis;
  const Vec3 pb = b.origin + t * b.axis;
  const Vec3 diff = pa - pb;
  const double d = diff.norm();
  return {d, pa, pb, d > 0.0 ? Vec3(diff / d) : Vec3(m.normalized())};
}

inline int shape_rank(Shape s) {
  switch (s) {
    case Shape::Point: return 0;
    case Shape::Line: return 1;
    case Shape::Sphere: return 2;
    case Shape::Plane: return 3;
  }
  return 4;
}

inline auto ordering_key(const WorldPrimitive& p) {
  return std::make_tuple(p.origin.x(), p.origin.y(), p.origin.z(), p.axis.x(), p.axis.y(), p.axis.z(),
                         p.radius);
}

inline DistanceResult flipped(DistanceResult r) {
  std::swap(r.witness_a, r.witness_b);
  r.normal = -r.normal;
  return r;
}

}  // namespace detail

inline bool is_supported_pair(Shape a, Shape b) {
  if (detail::shape_rank(a) > detail::shape_rank(b)) std::swap(a, b);
  using S = Shape;
  switch (a) {
    case S::Point: return true;
    case S::Line: return b == S::Line;
    case S::Sphere: return b == S::Sphere || b == S::Plane;
    case S::Plane: return false;
  }
  return false;
}

/// Assumes rank(a.shape) <= rank(b.shape); use pair_distance() instead.
inline DistanceResult pair_distance_canonical(const WorldPrimitive& a, const WorldPrimitive& b) {
  using S = Shape;
  if (a.shape == S::Point) {
    switch (b.shape) {
      case S::Point: return detail::point_point(a, b);
      case S::Line: return detail::point_line(a, b);
      case S::Plane: return detail::point_plane(a, b);
      case S::Sphere: return detail::point_sphere(a, b);
    }
  }
  if (a.shape == S::Line && b.shape == S::Line) return detail::line_line(a, b);
  if (a.shape == S::Sphere && b.shape == S::Sphere) return detail::sphere_sphere(a, b);
  if (a.shape == S::Sphere && b.shape == S::Plane) return detail::sphere_plane(a, b);
  throw Error(ErrorCode::UnsupportedPair, std::string(to_string(a.shape)) + "-" + std::string(to_string(b.shape)));
}

/// Signed distance between two world primitives. Symmetric: swapping the
/// arguments gives the same d bit for bit, with witnesses swapped and the
/// normal negated.
inline DistanceResult pair_distance(const WorldPrimitive& a, const WorldPrimitive& b) {
  if (!is_supported_pair(a.shape, b.shape)) {
    throw Error(ErrorCode::UnsupportedPair,
                std::string(to_string(a.shape)) + "-" + std::string(to_string(b.shape)));
  }
  const int ra = detail::shape_rank(a.shape);
  const int rb = detail::shape_rank(b.shape);
  if (ra > rb || (ra == rb && detail::ordering_key(b) < detail::ordering_key(a))) {
    return detail::flipped(pair_distance_canonical(b, a));
  }
  return pair_distance_canonical(a, b);
}

/// 3 x n Jacobian of the velocity of a point rigidly attached to the frame
/// after joint `joint`. Columns of later joints are zero.
template <KinematicChain C>
Eigen::Matrix<double, 3, Eigen::Dynamic> point_velocity_jacobian(const C& chain, const VecX& q,
                                                                 std::size_t joint, const Vec3& point) {
  const auto frames = joint_frames(chain, q);
  const auto links = chain.links();
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, static_cast<Eigen::Index>(chain.dof()));
  for (std::size_t k = 0; k <= joint; ++k) {
    const Vec3 axis = rotate(frames[k].primary, Vec3::UnitZ());
    if (links[k].joint.kind == JointKind::Revolute) {
      jac.col(static_cast<Eigen::Index>(k)) = axis.cross(point - translation_of(frames[k]));
    } else {
      jac.col(static_cast<Eigen::Index>(k)) = axis;
    }
  }
  return jac;
}

/// Frame that a robot primitive is attached to (before its local offset).
template <KinematicChain C>
Pose attachment_frame(const C& chain, const VecX& q, const Primitive& prim) {
  if (prim.attachment.kind != Attachment::Kind::Robot) {
    throw Error(ErrorCode::AttachmentMismatch, "primitive is not attached to a robot");
  }
  if (prim.attachment.joint >= chain.dof()) {
    throw Error(ErrorCode::AttachmentMismatch, "primitive joint index " + std::to_string(prim.attachment.joint) +
                                                   " exceeds chain dof " + std::to_string(chain.dof()));
  }
  return fk_prefix(chain, q, prim.attachment.joint);
}

inline WorldPrimitive place_environment(const Primitive& prim) {
  if (prim.attachment.kind != Attachment::Kind::Environment) {
    throw Error(ErrorCode::AttachmentMismatch, "primitive is not attached to the environment");
  }
  return place(prim, Pose::identity());
}

struct DistanceJacobian {
  DistanceResult distance;
  Eigen::RowVectorXd row;
};

/// Distance between a robot primitive and an environment primitive, and the
/// 1 x n row J with d' = J qdot.
template <KinematicChain C>
DistanceJacobian distance_jacobian_env(const C& chain, const VecX& q, const Primitive& robot_prim,
                                       const Primitive& env_prim) {
  const WorldPrimitive a = place(robot_prim, attachment_frame(chain, q, robot_prim));
  const WorldPrimitive b = place_environment(env_prim);
  const DistanceResult r = pair_distance(a, b);
  const auto jv = point_velocity_jacobian(chain, q, robot_prim.attachment.joint, r.witness_a);
  return {r, r.normal.transpose() * jv};
}

/// Distance between primitives on two chains, with a row over the stacked
/// joint velocities (qdot_a, qdot_b).
template <KinematicChain CA, KinematicChain CB>
DistanceJacobian distance_jacobian_pair(const CA& chain_a, const VecX& q_a, const Primitive& prim_a,
                                        const CB& chain_b, const VecX& q_b, const Primitive& prim_b) {
  const WorldPrimitive a = place(prim_a, attachment_frame(chain_a, q_a, prim_a));
  const WorldPrimitive b = place(prim_b, attachment_frame(chain_b, q_b, prim_b));
  const DistanceResult r = pair_distance(a, b);
  const auto ja = point_velocity_jacobian(chain_a, q_a, prim_a.attachment.joint, r.witness_a);
  const auto jb = point_velocity_jacobian(chain_b, q_b, prim_b.attachment.joint, r.witness_b);
  Eigen::RowVectorXd row(ja.cols() + jb.cols());
  row << r.normal.transpose() * ja, -r.normal.transpose() * jb;
  return {r, row};
}

}  // namespace railkit
