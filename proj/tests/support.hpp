#pragma once

#include <random>
#include <string>
#include <vector>

#include "railkit/chain.hpp"
#include "railkit/chain_io.hpp"
#include "railkit/pose.hpp"
#include "railkit/system.hpp"

namespace support {

using namespace railkit;

inline std::string data_path(const std::string& rel) { return std::string(RAILKIT_DATA_DIR) + "/" + rel; }

inline Vec3 random_vec3(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline double random_angle(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(-3.14159265358979, 3.14159265358979)(rng);
}

inline Pose random_pose(std::mt19937_64& rng, double reach = 1.0) {
  return from_rotation_translation(axis_angle(random_unit(rng), random_angle(rng)), random_vec3(rng, reach));
}

inline JointDesc random_joint(std::mt19937_64& rng, bool allow_prismatic = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  JointDesc j;
  j.kind = allow_prismatic && u(rng) > 0.4 ? JointKind::Prismatic : JointKind::Revolute;
  j.dh = {random_angle(rng), 0.3 * u(rng), 0.3 * u(rng), random_angle(rng)};
  j.q_min = -3.0;
  j.q_max = 3.0;
  j.velocity_limit = 1.0;
  return j;
}

inline SerialChain random_chain(std::mt19937_64& rng, std::size_t dof, bool allow_prismatic = true) {
  std::vector<JointDesc> joints;
  for (std::size_t i = 0; i < dof; ++i) joints.push_back(random_joint(rng, allow_prismatic));
  return SerialChain(random_pose(rng, 0.5), joints, random_pose(rng, 0.2));
}

inline VecX random_q(std::mt19937_64& rng, std::size_t n, double scale = 1.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VecX q(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = u(rng);
  return q;
}

inline RobotSystem load_platform() {
  RobotSystem s;
  for (int b = 1; b <= 4; ++b) {
    s.branches.push_back(load_chain(data_path("chains/branch_" + std::to_string(b) + ".yaml")).chain);
  }
  return s;
}

// Tools pointing down near the platform center, all VFIs inactive.
inline VecX platform_home(const RobotSystem& s) {
  VecX a(8), b(9);
  a << 0.409133, 0.221426, -2.74025, -1.14038, 2.60092, -3.03134, -1.5708, -0.760316;
  b << 0.136945, 0.158938, 1.08666, 1.16682, -0.925552, -2.22209, -1.54002, -0.82565, -0.873811;
  return s.stack({a, a, b, b});
}

inline std::string read_data(const std::string& rel) { return read_file(data_path(rel)); }

}  // namespace support
