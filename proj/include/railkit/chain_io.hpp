#pragma once

// Chain description files. One file describes one branch as an ordered list
// of serial segments:
//
//   name: branch_1
//   note: free text
//   segments:
//     - name: rail
//       base: { translation: [0, 0, 0], rpy: [0, 0, 0] }
//       tool: { translation: [0.5, 0, 0] }
//       joints:
//         - { type: revolute, dh: [theta, d, a, alpha], limits: [lo, hi], velocity_limit: 1.0 }

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "railkit/chain.hpp"
#include "railkit/yaml_util.hpp"

namespace railkit {

inline JointDesc parse_joint(const YAML::Node& n) {
  yaml::require_map(n, "joint");
  yaml::check_keys(n, {"type", "dh", "limits", "velocity_limit"});
  JointDesc j;
  const auto type = yaml::get<std::string>(n, "type");
  if (type == "revolute") {
    j.kind = JointKind::Revolute;
  } else if (type == "prismatic") {
    j.kind = JointKind::Prismatic;
  } else {
    throw Error(ErrorCode::ParseError, "joint type must be revolute or prismatic", yaml::line_of(n));
  }
  const auto dh = yaml::vector(yaml::required(n, "dh"), "dh", 4);
  j.dh = {dh[0], dh[1], dh[2], dh[3]};
  if (n["limits"]) {
    const auto lim = yaml::vector(n["limits"], "limits", 2);
    j.q_min = lim[0];
    j.q_max = lim[1];
  }
  j.velocity_limit = yaml::get_or<double>(n, "velocity_limit", j.velocity_limit);
  return j;
}

inline SerialChain parse_segment(const YAML::Node& n) {
  yaml::require_map(n, "segment");
  yaml::check_keys(n, {"name", "base", "tool", "joints"});
  const YAML::Node joints = yaml::required(n, "joints");
  if (!joints.IsSequence()) throw Error(ErrorCode::ParseError, "joints must be a list", yaml::line_of(joints));
  std::vector<JointDesc> js;
  for (const auto& j : joints) js.push_back(parse_joint(j));
  try {
    return SerialChain(yaml::pose(n["base"]), std::move(js), yaml::pose(n["tool"]),
                       yaml::get_or<std::string>(n, "name", ""));
  } catch (const Error& e) {
    if (e.line() > 0) throw;
    throw Error(e.code(), e.message(), yaml::line_of(n));
  }
}

struct ChainFile {
  std::string name;
  CompositeChain chain;
};

inline ChainFile parse_chain(const std::string& text) {
  const YAML::Node root = yaml::load(text);
  yaml::require_map(root, "chain file");
  yaml::check_keys(root, {"name", "note", "segments"});
  const YAML::Node segs = yaml::required(root, "segments");
  if (!segs.IsSequence()) throw Error(ErrorCode::ParseError, "segments must be a list", yaml::line_of(segs));
  std::vector<SerialChain> segments;
  for (const auto& s : segs) segments.push_back(parse_segment(s));
  return {yaml::get_or<std::string>(root, "name", ""), compose(std::move(segments))};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ChainFile load_chain(const std::string& path) {
  try {
    return parse_chain(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message(), e.line());
  }
}

}  // namespace railkit
