#pragma once

// Vector-field-inequality configuration files and the constraint rows they
// produce.
//
// A keepout entry keeps d >= safe_distance through   -J_d qdot <= eta_d (d - d_safe),
// a keepin entry keeps d <= safe_distance through     J_d qdot <= eta_d (d_safe - d).
//
// Robot and joint indices in the files are 1-based ("the fourth branch, second
// joint" is robot_index: 4, joint_index: 2); everything in memory is 0-based.

#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "railkit/geometry.hpp"
#include "railkit/system.hpp"
#include "railkit/yaml_util.hpp"

namespace railkit {

enum class VfiType { EnvironmentToRobot, RobotToRobot };
enum class VfiDirection { Keepout, Keepin };

struct VfiSpec {
  VfiType type = VfiType::EnvironmentToRobot;
  /// Robot primitive for environment_to_robot, entity one for robot_to_robot.
  Primitive first;
  /// Environment primitive for environment_to_robot, entity two for robot_to_robot.
  Primitive second;
  double safe_distance = 0.0;
  VfiDirection direction = VfiDirection::Keepout;
  std::optional<double> gain;
  int line = 0;
};

inline constexpr double kDefaultVfiGain = 2.0;
inline constexpr double kDefaultJointLimitGain = 1.0;

namespace detail {

inline Shape parse_shape(const YAML::Node& n, const std::string& key) {
  const auto s = yaml::as<std::string>(n, key);
  if (s == "point") return Shape::Point;
  if (s == "line") return Shape::Line;
  if (s == "plane") return Shape::Plane;
  if (s == "sphere") return Shape::Sphere;
  throw Error(ErrorCode::ParseError, key + ": unknown primitive type '" + s + "'", yaml::line_of(n));
}

inline Primitive parse_entity(const YAML::Node& n, Shape shape, Attachment attachment) {
  if (!n || n.IsNull()) {
    if (shape != Shape::Point) {
      throw Error(ErrorCode::MissingField, std::string(to_string(shape)) + " parameters", yaml::line_of(n));
    }
    return Primitive::point(Vec3::Zero(), attachment);
  }
  yaml::require_map(n, "entity");
  Primitive p;
  p.shape = shape;
  switch (shape) {
    case Shape::Point:
      yaml::check_keys(n, {"pose", "point"});
      p.origin = n["point"] ? yaml::vec3(n["point"], "point") : Vec3::Zero();
      break;
    case Shape::Line:
      yaml::check_keys(n, {"pose", "point", "direction"});
      p.origin = n["point"] ? yaml::vec3(n["point"], "point") : Vec3::Zero();
      p.axis = yaml::vec3(yaml::required(n, "direction"), "direction");
      break;
    case Shape::Plane:
      yaml::check_keys(n, {"pose", "point", "normal"});
      p.origin = n["point"] ? yaml::vec3(n["point"], "point") : Vec3::Zero();
      p.axis = yaml::vec3(yaml::required(n, "normal"), "normal");
      break;
    case Shape::Sphere:
      yaml::check_keys(n, {"pose", "center", "radius"});
      p.origin = n["center"] ? yaml::vec3(n["center"], "center") : Vec3::Zero();
      p.radius = yaml::get<double>(n, "radius");
      break;
  }
  attachment.pose = yaml::pose(n["pose"]);
  p.attachment = attachment;
  try {
    validate(p);
  } catch (const Error& e) {
    throw Error(e.code(), e.message(), yaml::line_of(n));
  }
  return p;
}

inline std::size_t parse_index(const YAML::Node& entry, const std::string& key) {
  const YAML::Node n = yaml::required(entry, key);
  const auto v = yaml::as<long long>(n, key);
  if (v < 1) throw Error(ErrorCode::IndexOutOfRange, key + " must be >= 1 (indices are 1-based)", yaml::line_of(n));
  return static_cast<std::size_t>(v - 1);
}

inline VfiSpec parse_entry(const YAML::Node& e) {
  yaml::require_map(e, "VFI entry");
  const auto type_name = yaml::get<std::string>(e, "vfi_type");
  VfiSpec spec;
  spec.line = yaml::line_of(e);
  if (type_name == "environment_to_robot") {
    yaml::check_keys(e, {"vfi_type", "cs_entity_environment", "cs_entity_robot", "entity_environment_primitive_type",
                         "entity_robot_primitive_type", "robot_index", "joint_index", "safe_distance", "direction",
                         "gain"});
    spec.type = VfiType::EnvironmentToRobot;
    const Shape env_shape = parse_shape(yaml::required(e, "entity_environment_primitive_type"),
                                        "entity_environment_primitive_type");
    const Shape robot_shape =
        parse_shape(yaml::required(e, "entity_robot_primitive_type"), "entity_robot_primitive_type");
    const std::size_t robot = parse_index(e, "robot_index");
    const std::size_t joint = parse_index(e, "joint_index");
    spec.first = parse_entity(yaml::required(e, "cs_entity_robot"), robot_shape, Attachment::robot(robot, joint));
    spec.second = parse_entity(yaml::required(e, "cs_entity_environment"), env_shape, Attachment::environment());
  } else if (type_name == "robot_to_robot") {
    yaml::check_keys(e, {"vfi_type", "cs_entity_one", "cs_entity_two", "entity_one_primitive_type",
                         "entity_two_primitive_type", "robot_index_one", "robot_index_two", "joint_index_one",
                         "joint_index_two", "safe_distance", "direction", "gain"});
    spec.type = VfiType::RobotToRobot;
    const Shape one = parse_shape(yaml::required(e, "entity_one_primitive_type"), "entity_one_primitive_type");
    const Shape two = parse_shape(yaml::required(e, "entity_two_primitive_type"), "entity_two_primitive_type");
    spec.first = parse_entity(yaml::required(e, "cs_entity_one"), one,
                              Attachment::robot(parse_index(e, "robot_index_one"), parse_index(e, "joint_index_one")));
    spec.second = parse_entity(yaml::required(e, "cs_entity_two"), two,
                               Attachment::robot(parse_index(e, "robot_index_two"), parse_index(e, "joint_index_two")));
    if (spec.first.attachment.branch == spec.second.attachment.branch) {
      throw Error(ErrorCode::ParseError, "robot_to_robot entry must reference two different robots", spec.line);
    }
  } else {
    throw Error(ErrorCode::ParseError, "vfi_type must be environment_to_robot or robot_to_robot, got '" +
                                           type_name + "'",
                yaml::line_of(e["vfi_type"]));
  }

  if (!is_supported_pair(spec.first.shape, spec.second.shape)) {
    throw Error(ErrorCode::UnsupportedPair,
                std::string(to_string(spec.first.shape)) + "-" + std::string(to_string(spec.second.shape)), spec.line);
  }

  const YAML::Node sd = yaml::required(e, "safe_distance");
  spec.safe_distance = yaml::as<double>(sd, "safe_distance");
  if (!(spec.safe_distance > 0.0)) {
    throw Error(ErrorCode::ParseError, "safe_distance must be positive", yaml::line_of(sd));
  }
  const YAML::Node dir = yaml::required(e, "direction");
  const auto dir_name = yaml::as<std::string>(dir, "direction");
  if (dir_name == "keepout") {
    spec.direction = VfiDirection::Keepout;
  } else if (dir_name == "keepin") {
    spec.direction = VfiDirection::Keepin;
  } else {
    throw Error(ErrorCode::ParseError, "direction must be keepout or keepin, got '" + dir_name + "'",
                yaml::line_of(dir));
  }
  if (e["gain"]) {
    const double g = yaml::as<double>(e["gain"], "gain");
    if (!(g > 0.0)) throw Error(ErrorCode::ParseError, "gain must be positive", yaml::line_of(e["gain"]));
    spec.gain = g;
  }
  return spec;
}

inline std::vector<YAML::Node> entries_of(const std::string& text) {
  const YAML::Node root = yaml::load(text);
  std::vector<YAML::Node> out;
  if (!root || root.IsNull()) return out;
  if (!root.IsSequence()) throw Error(ErrorCode::ParseError, "VFI file must be a YAML list", yaml::line_of(root));
  for (const auto& e : root) out.push_back(e);
  return out;
}

}  // namespace detail

/// Checks robot and joint indices against a concrete system.
inline void check_against(const VfiSpec& spec, const RobotSystem& system) {
  for (const Primitive* p : {&spec.first, &spec.second}) {
    if (p->attachment.kind != Attachment::Kind::Robot) continue;
    if (p->attachment.branch >= system.branch_count()) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "robot index " + std::to_string(p->attachment.branch + 1) + " but the system has " +
                      std::to_string(system.branch_count()) + " robots",
                  spec.line);
    }
    const auto dof = system.branches[p->attachment.branch].dof();
    if (p->attachment.joint >= dof) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "joint index " + std::to_string(p->attachment.joint + 1) + " but robot " +
                      std::to_string(p->attachment.branch + 1) + " has " + std::to_string(dof) + " joints",
                  spec.line);
    }
  }
}

/// Parses a VFI file. Throws on the first invalid entry; when `system` is
/// given, indices are also checked against it.
inline std::vector<VfiSpec> parse_vfi_config(const std::string& text, const RobotSystem* system = nullptr) {
  std::vector<VfiSpec> specs;
  for (const auto& e : detail::entries_of(text)) {
    specs.push_back(detail::parse_entry(e));
    if (system) check_against(specs.back(), *system);
  }
  return specs;
}

struct LintEntry {
  std::size_t index = 0;
  int line = 0;
  bool ok = true;
  std::string message;
};

struct LintReport {
  std::vector<LintEntry> entries;
  std::optional<Error> document_error;

  bool ok() const {
    if (document_error) return false;
    for (const auto& e : entries)
      if (!e.ok) return false;
    return true;
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.ok ? 1 : 0;
    return n;
  }
};

/// Validates every entry independently so that all problems are reported.
inline LintReport lint_vfi_config(const std::string& text, const RobotSystem* system = nullptr) {
  LintReport report;
  std::vector<YAML::Node> entries;
  try {
    entries = detail::entries_of(text);
  } catch (const Error& e) {
    report.document_error = e;
    return report;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    LintEntry le{i, yaml::line_of(entries[i]), true, {}};
    try {
      const VfiSpec spec = detail::parse_entry(entries[i]);
      if (system) check_against(spec, *system);
    } catch (const Error& e) {
      le.ok = false;
      le.message = e.what();
      if (e.line() > 0) le.line = e.line();
    }
    report.entries.push_back(le);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Constraint assembly

struct ConstraintRow {
  Eigen::RowVectorXd coefficients;  // over the stacked system velocity
  double bound = 0.0;
  double distance = 0.0;
};

/// Builds the inequality row for one VFI at the system state `q` (stacked).
inline ConstraintRow build_constraint(const VfiSpec& spec, const RobotSystem& system, const VecX& q,
                                      double default_gain = kDefaultVfiGain) {
  check_against(spec, system);
  const auto qs = system.split(q);
  const double eta = spec.gain.value_or(default_gain);
  ConstraintRow row;
  row.coefficients = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(system.total_dof()));

  DistanceJacobian dj;
  if (spec.type == VfiType::EnvironmentToRobot) {
    const std::size_t b = spec.first.attachment.branch;
    dj = distance_jacobian_env(system.branches[b], qs[b], spec.first, spec.second);
    row.coefficients.segment(static_cast<Eigen::Index>(system.offset(b)), dj.row.size()) = dj.row;
  } else {
    const std::size_t ba = spec.first.attachment.branch;
    const std::size_t bb = spec.second.attachment.branch;
    dj = distance_jacobian_pair(system.branches[ba], qs[ba], spec.first, system.branches[bb], qs[bb], spec.second);
    const auto na = static_cast<Eigen::Index>(system.branches[ba].dof());
    const auto nb = static_cast<Eigen::Index>(system.branches[bb].dof());
    row.coefficients.segment(static_cast<Eigen::Index>(system.offset(ba)), na) = dj.row.head(na);
    row.coefficients.segment(static_cast<Eigen::Index>(system.offset(bb)), nb) = dj.row.tail(nb);
  }
  row.distance = dj.distance.d;
  if (spec.direction == VfiDirection::Keepout) {
    row.coefficients = -row.coefficients;
    row.bound = eta * (row.distance - spec.safe_distance);
  } else {
    row.bound = eta * (spec.safe_distance - row.distance);
  }
  return row;
}

enum class RowKind { PositionLower, PositionUpper, VelocityLower, VelocityUpper, Vfi };

constexpr std::string_view to_string(RowKind k) {
  switch (k) {
    case RowKind::PositionLower: return "position_lower";
    case RowKind::PositionUpper: return "position_upper";
    case RowKind::VelocityLower: return "velocity_lower";
    case RowKind::VelocityUpper: return "velocity_upper";
    case RowKind::Vfi: return "vfi";
  }
  return "?";
}

struct RowOrigin {
  RowKind kind = RowKind::Vfi;
  std::size_t branch = 0;  // limit rows and single-branch VFIs
  std::size_t joint = 0;   // limit rows, index within the branch
  std::size_t vfi = 0;     // VFI rows, index into the spec list
};

/// Single-branch rows (W_s, w_s) and pairwise rows (W_p, w_p), both over the
/// stacked system velocity. Every W_s row touches exactly one branch.
struct ConstraintSet {
  Eigen::MatrixXd Ws;
  Eigen::VectorXd ws;
  Eigen::MatrixXd Wp;
  Eigen::VectorXd wp;
  std::vector<RowOrigin> single_origin;
  std::vector<RowOrigin> pair_origin;
  /// Current distance of each VFI, indexed like the spec list.
  std::vector<double> vfi_distance;

  std::size_t vfi_row_count() const {
    std::size_t n = pair_origin.size();
    for (const auto& o : single_origin) n += o.kind == RowKind::Vfi ? 1 : 0;
    return n;
  }
};

struct ConstraintGains {
  double vfi = kDefaultVfiGain;
  double joint_limit = kDefaultJointLimitGain;
};

inline ConstraintSet assemble(const std::vector<VfiSpec>& specs, const RobotSystem& system, const VecX& q,
                              ConstraintGains gains = {}) {
  const auto total = static_cast<Eigen::Index>(system.total_dof());
  if (q.size() != total) throw Error(ErrorCode::DimensionMismatch, "assemble: system joint vector size");

  std::vector<Eigen::RowVectorXd> s_rows;
  std::vector<double> s_bounds;
  ConstraintSet set;
  set.vfi_distance.assign(specs.size(), 0.0);

  std::vector<ConstraintRow> vfi_rows;
  vfi_rows.reserve(specs.size());
  for (const auto& spec : specs) vfi_rows.push_back(build_constraint(spec, system, q, gains.vfi));

  for (std::size_t b = 0; b < system.branch_count(); ++b) {
    const auto off = static_cast<Eigen::Index>(system.offset(b));
    const auto links = system.branches[b].links();
    for (std::size_t k = 0; k < links.size(); ++k) {
      const auto col = off + static_cast<Eigen::Index>(k);
      const JointDesc& jd = links[k].joint;
      const double qk = q[col];
      auto push = [&](double sign, double bound, RowKind kind) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(total);
        r[col] = sign;
        s_rows.push_back(std::move(r));
        s_bounds.push_back(bound);
        set.single_origin.push_back({kind, b, k, 0});
      };
      // qdot >= eta_q (q_min - q)  and  qdot <= eta_q (q_max - q)
      push(-1.0, gains.joint_limit * (qk - jd.q_min), RowKind::PositionLower);
      push(1.0, gains.joint_limit * (jd.q_max - qk), RowKind::PositionUpper);
      push(-1.0, jd.velocity_limit, RowKind::VelocityLower);
      push(1.0, jd.velocity_limit, RowKind::VelocityUpper);
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].type != VfiType::EnvironmentToRobot || specs[i].first.attachment.branch != b) continue;
      s_rows.push_back(vfi_rows[i].coefficients);
      s_bounds.push_back(vfi_rows[i].bound);
      set.single_origin.push_back({RowKind::Vfi, b, 0, i});
    }
  }

  std::vector<std::size_t> pair_idx;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    set.vfi_distance[i] = vfi_rows[i].distance;
    if (specs[i].type == VfiType::RobotToRobot) pair_idx.push_back(i);
  }

  set.Ws.resize(static_cast<Eigen::Index>(s_rows.size()), total);
  set.ws.resize(static_cast<Eigen::Index>(s_rows.size()));
  for (std::size_t r = 0; r < s_rows.size(); ++r) {
    set.Ws.row(static_cast<Eigen::Index>(r)) = s_rows[r];
    set.ws[static_cast<Eigen::Index>(r)] = s_bounds[r];
  }
  set.Wp.resize(static_cast<Eigen::Index>(pair_idx.size()), total);
  set.wp.resize(static_cast<Eigen::Index>(pair_idx.size()));
  for (std::size_t r = 0; r < pair_idx.size(); ++r) {
    const auto i = pair_idx[r];
    set.Wp.row(static_cast<Eigen::Index>(r)) = vfi_rows[i].coefficients;
    set.wp[static_cast<Eigen::Index>(r)] = vfi_rows[i].bound;
    set.pair_origin.push_back({RowKind::Vfi, specs[i].first.attachment.branch, 0, i});
  }
  return set;
}

}  // namespace railkit
