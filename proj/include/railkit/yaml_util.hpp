#pragma once

// Small helpers shared by the YAML readers: strict key sets, typed reads with
// line numbers in every error, and the pose value schema
//   { translation: [x, y, z], rotation: [w, x, y, z] }   or   { ..., rpy: [r, p, y] }

#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include <yaml-cpp/yaml.h>

#include "railkit/error.hpp"
#include "railkit/pose.hpp"

namespace railkit::yaml {

inline int line_of(const YAML::Node& n) { return n.Mark().line + 1; }

inline YAML::Node load(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorCode::ParseError, e.msg, e.mark.line + 1);
  }
}

inline void require_map(const YAML::Node& n, std::string_view what) {
  if (!n.IsMap()) throw Error(ErrorCode::ParseError, std::string(what) + " must be a mapping", line_of(n));
}

inline void check_keys(const YAML::Node& n, std::initializer_list<std::string_view> allowed) {
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::UnknownKey, key, line_of(kv.first));
  }
}

inline YAML::Node required(const YAML::Node& n, const std::string& key) {
  const YAML::Node v = n[key];
  if (!v) throw Error(ErrorCode::MissingField, key, line_of(n));
  return v;
}

template <typename T>
T as(const YAML::Node& n, std::string_view what) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorCode::ParseError, "bad value for " + std::string(what), line_of(n));
  }
}

template <typename T>
T get(const YAML::Node& n, const std::string& key) {
  return as<T>(required(n, key), key);
}

template <typename T>
T get_or(const YAML::Node& n, const std::string& key, T fallback) {
  const YAML::Node v = n[key];
  return v ? as<T>(v, key) : fallback;
}

inline Eigen::VectorXd vector(const YAML::Node& n, std::string_view what, int size = -1) {
  if (!n.IsSequence() || (size >= 0 && static_cast<int>(n.size()) != size)) {
    throw Error(ErrorCode::ParseError,
                std::string(what) + (size >= 0 ? " must be a list of " + std::to_string(size) + " numbers"
                                               : " must be a list of numbers"),
                line_of(n));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i) v[static_cast<Eigen::Index>(i)] = as<double>(n[i], what);
  return v;
}

inline Vec3 vec3(const YAML::Node& n, std::string_view what) { return vector(n, what, 3); }

/// Rotation from the `rotation` ([w, x, y, z]) or `rpy` key of a map, if any.
inline std::optional<Quaternion> rotation(const YAML::Node& n) {
  if (n["rotation"] && n["rpy"]) {
    throw Error(ErrorCode::ParseError, "pose takes either rotation or rpy, not both", line_of(n));
  }
  if (n["rotation"]) {
    const auto v = vector(n["rotation"], "rotation", 4);
    return Quaternion{v[0], v[1], v[2], v[3]};
  }
  if (n["rpy"]) return from_rpy(vec3(n["rpy"], "rpy"));
  return std::nullopt;
}

inline Pose make_pose(const YAML::Node& n, const Quaternion& r, const Vec3& t) {
  try {
    return from_rotation_translation(r, t);
  } catch (const Error& e) {
    throw Error(e.code(), "pose rotation is not a unit quaternion", line_of(n));
  }
}

inline Pose pose(const YAML::Node& n) {
  if (!n || n.IsNull()) return Pose::identity();
  require_map(n, "pose");
  check_keys(n, {"translation", "rotation", "rpy"});
  const Vec3 t = n["translation"] ? vec3(n["translation"], "translation") : Vec3::Zero();
  return make_pose(n, rotation(n).value_or(Quaternion::identity()), t);
}

}  // namespace railkit::yaml
