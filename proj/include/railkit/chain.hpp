#pragma once

// Serial chains in standard (distal) Denavit-Hartenberg form, composition of
// several chains into one serial robot, forward kinematics and pose Jacobians.

#include <algorithm>
#include <concepts>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "railkit/error.hpp"
#include "railkit/pose.hpp"

namespace railkit {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

enum class JointKind { Revolute, Prismatic };

struct DhParams {
  double theta = 0.0;  // rad
  double d = 0.0;      // m
  double a = 0.0;      // m
  double alpha = 0.0;  // rad
};

struct JointDesc {
  JointKind kind = JointKind::Revolute;
  DhParams dh;
  double q_min = -kPi2;
  double q_max = kPi2;
  double velocity_limit = 1.0;

  static constexpr double kPi2 = 6.283185307179586;
};

/// Rz(theta) Tz(d) Tx(a) Rx(alpha) with the joint value added to theta or d.
inline Pose joint_transform(const JointDesc& joint, double q) {
  const double theta = joint.dh.theta + (joint.kind == JointKind::Revolute ? q : 0.0);
  const double d = joint.dh.d + (joint.kind == JointKind::Prismatic ? q : 0.0);
  const Pose rz = from_rotation(axis_angle(Vec3::UnitZ(), theta));
  const Pose tz = from_translation(Vec3(0.0, 0.0, d));
  const Pose tx = from_translation(Vec3(joint.dh.a, 0.0, 0.0));
  const Pose rx = from_rotation(axis_angle(Vec3::UnitX(), joint.dh.alpha));
  return rz * tz * tx * rx;
}

/// A joint together with the fixed transform that precedes it.
struct Link {
  Pose pre = Pose::identity();
  JointDesc joint;
};

class SerialChain {
 public:
  SerialChain() = default;
  SerialChain(Pose base, std::vector<JointDesc> joints, Pose tool, std::string name = {})
      : base_(base), joints_(std::move(joints)), tool_(tool), name_(std::move(name)) {
    if (joints_.empty()) {
      throw Error(ErrorCode::InvalidChain, "chain '" + name_ + "' has no joints");
    }
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      const auto& j = joints_[i];
      if (!(j.q_min < j.q_max)) {
        throw Error(ErrorCode::InvalidChain, "joint " + std::to_string(i) + " has q_min >= q_max");
      }
      if (!(j.velocity_limit > 0.0)) {
        throw Error(ErrorCode::InvalidChain, "joint " + std::to_string(i) + " has non-positive velocity limit");
      }
    }
    links_.reserve(joints_.size());
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      links_.push_back({i == 0 ? base_ : Pose::identity(), joints_[i]});
    }
  }

  const Pose& base() const { return base_; }
  const Pose& tool() const { return tool_; }
  const std::vector<JointDesc>& joints() const { return joints_; }
  const std::string& name() const { return name_; }
  std::span<const Link> links() const { return links_; }
  std::size_t dof() const { return joints_.size(); }

 private:
  Pose base_;
  std::vector<JointDesc> joints_;
  Pose tool_;
  std::string name_;
  std::vector<Link> links_;
};

/// Several serial chains attached tip-to-base, seen as one serial robot.
class CompositeChain {
 public:
  struct JointRef {
    std::size_t segment;
    std::size_t local;
  };

  const std::vector<SerialChain>& segments() const { return segments_; }
  std::span<const Link> links() const { return links_; }
  const Pose& tool() const { return segments_.back().tool(); }
  std::size_t dof() const { return links_.size(); }

  JointRef joint_ref(std::size_t i) const {
    if (i >= joint_map_.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "composite joint " + std::to_string(i));
    }
    return joint_map_[i];
  }

  /// Offset of a segment's first joint in the composite joint vector.
  std::size_t segment_offset(std::size_t segment) const { return segment_offsets_.at(segment); }

 private:
  friend CompositeChain compose(std::vector<SerialChain> segments);

  std::vector<SerialChain> segments_;
  std::vector<Link> links_;
  std::vector<JointRef> joint_map_;
  std::vector<std::size_t> segment_offsets_;
};

inline CompositeChain compose(std::vector<SerialChain> segments) {
  if (segments.empty()) {
    throw Error(ErrorCode::EmptyComposition, "compose() needs at least one segment");
  }
  CompositeChain out;
  Pose carry = Pose::identity();
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const SerialChain& seg = segments[s];
    out.segment_offsets_.push_back(out.links_.size());
    for (std::size_t k = 0; k < seg.dof(); ++k) {
      Link link = seg.links()[k];
      if (k == 0) link.pre = carry * link.pre;
      out.links_.push_back(link);
      out.joint_map_.push_back({s, k});
    }
    carry = seg.tool();
  }
  out.segments_ = std::move(segments);
  return out;
}

template <typename C>
concept KinematicChain = requires(const C& c) {
  { c.links() } -> std::convertible_to<std::span<const Link>>;
  { c.tool() } -> std::convertible_to<Pose>;
  { c.dof() } -> std::convertible_to<std::size_t>;
};

namespace detail {

template <KinematicChain C>
void check_dimension(const C& chain, const VecX& q) {
  if (static_cast<std::size_t>(q.size()) != chain.dof()) {
    throw Error(ErrorCode::DimensionMismatch, "joint vector has " + std::to_string(q.size()) +
                                                  " entries, chain has " + std::to_string(chain.dof()));
  }
}

}  // namespace detail

/// Pose of the frame immediately after joint `i`.
template <KinematicChain C>
Pose fk_prefix(const C& chain, const VecX& q, std::size_t i) {
  detail::check_dimension(chain, q);
  if (i >= chain.dof()) {
    throw Error(ErrorCode::IndexOutOfRange, "joint index " + std::to_string(i) + " >= dof " +
                                                std::to_string(chain.dof()));
  }
  const auto links = chain.links();
  Pose x = Pose::identity();
  for (std::size_t k = 0; k <= i; ++k) {
    x = x * links[k].pre * joint_transform(links[k].joint, q[static_cast<Eigen::Index>(k)]);
  }
  return x;
}

template <KinematicChain C>
Pose fk(const C& chain, const VecX& q) {
  return fk_prefix(chain, q, chain.dof() - 1) * chain.tool();
}

/// All intermediate frames. frames[k] is the frame just before joint k
/// (its z axis is the joint axis), frames[dof] is the frame after the last joint.
template <KinematicChain C>
std::vector<Pose> joint_frames(const C& chain, const VecX& q) {
  detail::check_dimension(chain, q);
  const auto links = chain.links();
  std::vector<Pose> frames;
  frames.reserve(links.size() + 1);
  Pose x = Pose::identity();
  for (std::size_t k = 0; k < links.size(); ++k) {
    x = x * links[k].pre;
    frames.push_back(x);
    x = x * joint_transform(links[k].joint, q[static_cast<Eigen::Index>(k)]);
  }
  frames.push_back(x);
  return frames;
}

/// 8 x n matrix with d/dt vec8(fk(q)) = J qdot.
template <KinematicChain C>
Eigen::Matrix<double, 8, Eigen::Dynamic> pose_jacobian(const C& chain, const VecX& q) {
  detail::check_dimension(chain, q);
  const auto links = chain.links();
  const std::size_t n = links.size();

  // suffix[k] = J_k * pre_{k+1} * J_{k+1} * ... * tool
  std::vector<Pose> suffix(n + 1);
  suffix[n] = chain.tool();
  for (std::size_t k = n; k-- > 0;) {
    const Pose next_pre = (k + 1 < n) ? links[k + 1].pre : Pose::identity();
    suffix[k] = joint_transform(links[k].joint, q[static_cast<Eigen::Index>(k)]) * next_pre * suffix[k + 1];
  }

  Eigen::Matrix<double, 8, Eigen::Dynamic> jac(8, static_cast<Eigen::Index>(n));
  Pose before = Pose::identity();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0) before = links[0].pre;
    // Both joint kinds act along the local z axis, so the derivative of the
    // joint transform is a left product with half the z generator.
    const Pose generator = links[k].joint.kind == JointKind::Revolute
                               ? Pose{{0.0, 0.0, 0.0, 0.5}, Quaternion::zero()}
                               : Pose{Quaternion::zero(), {0.0, 0.0, 0.0, 0.5}};
    jac.col(static_cast<Eigen::Index>(k)) = to_vec8(before * generator * suffix[k]);
    if (k + 1 < n) {
      before = before * joint_transform(links[k].joint, q[static_cast<Eigen::Index>(k)]) * links[k + 1].pre;
    }
  }
  return jac;
}

template <KinematicChain C>
VecX clamp_joints(const C& chain, const VecX& q) {
  detail::check_dimension(chain, q);
  VecX out = q;
  const auto links = chain.links();
  for (std::size_t k = 0; k < links.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out[i] = std::clamp(q[i], links[k].joint.q_min, links[k].joint.q_max);
  }
  return out;
}

template <KinematicChain C>
bool within_limits(const C& chain, const VecX& q) {
  detail::check_dimension(chain, q);
  const auto links = chain.links();
  for (std::size_t k = 0; k < links.size(); ++k) {
    const double v = q[static_cast<Eigen::Index>(k)];
    if (v < links[k].joint.q_min || v > links[k].joint.q_max) return false;
  }
  return true;
}

}  // namespace railkit
