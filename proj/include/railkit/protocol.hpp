#pragma once

// Console message schema, version 1. All messages are JSON objects with a
// "type" field. Branch indices on the wire are 1-based.
//
// server -> console
//   hello     { schema, branches, dof[], vfis, snapshot_hz, max_jog_translation, max_jog_rotation }
//   snapshot  { schema, tick, time, status, clutch, scale, latched, breakthrough,
//               branches[{ index, q[], tool[8], target[8], error, gripper_closed, controller }],
//               vfi[{ distance, safe }], markers[{ position[3], tier }], block[8] | null }
//   ack       { request, id? }
//   error     { code, message, id? }
//
// console -> server
//   hello     { schema }
//   acquire   { branch }            release { branch }
//   jog       { branch, frame: "tool" | "base", delta_translation[3], delta_rotation_rpy[3] }
//   clutch    { engaged }           scale   { ratio }
//   grip      { branch, closed }
// Any request may carry an "id", echoed in its reply.

#include <atomic>
#include <functional>
#include <mutex>

#include <nlohmann/json.hpp>

#include "railkit/commands.hpp"
#include "railkit/sim.hpp"

namespace railkit {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kDefaultSnapshotHz = 30.0;
inline constexpr std::uint16_t kGatewayPort = 9870;

using Json = nlohmann::json;

namespace detail {

inline Json vec_json(const auto& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec8 vec8_from(const Json& j) {
  Vec8 v;
  for (int i = 0; i < 8; ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

}  // namespace detail

inline Json hello_message(const RobotSystem& system, std::size_t vfis, double snapshot_hz) {
  Json dof = Json::array();
  for (const auto& b : system.branches) dof.push_back(b.dof());
  return {{"type", "hello"},
          {"schema", kSchemaVersion},
          {"branches", system.branch_count()},
          {"dof", dof},
          {"vfis", vfis},
          {"snapshot_hz", snapshot_hz},
          {"max_jog_translation", kMaxJogTranslation},
          {"max_jog_rotation", kMaxJogRotation}};
}

/// `holders[b]` is true when the receiving session controls branch b.
inline Json snapshot_message(const Snapshot& s, const std::vector<bool>& holders = {}) {
  Json branches = Json::array();
  for (std::size_t b = 0; b < s.branches.size(); ++b) {
    const auto& v = s.branches[b];
    branches.push_back({{"index", b + 1},
                        {"q", detail::vec_json(v.q)},
                        {"tool", detail::vec_json(to_vec8(v.tool))},
                        {"target", detail::vec_json(to_vec8(v.target))},
                        {"error", v.error},
                        {"gripper_closed", v.gripper_closed},
                        {"controller", b < holders.size() && holders[b]}});
  }
  Json vfi = Json::array();
  for (std::size_t i = 0; i < s.vfi_distance.size(); ++i) {
    vfi.push_back({{"distance", s.vfi_distance[i]}, {"safe", s.vfi_safe[i]}});
  }
  Json markers = Json::array();
  for (const auto& m : s.markers) markers.push_back({{"position", detail::vec_json(m.position)}, {"tier", m.tier}});
  return {{"type", "snapshot"},
          {"schema", kSchemaVersion},
          {"tick", s.tick},
          {"time", s.t},
          {"status", to_string(s.status)},
          {"clutch", s.clutch},
          {"scale", s.scale},
          {"latched", s.latched},
          {"breakthrough", s.breakthrough},
          {"branches", branches},
          {"vfi", vfi},
          {"markers", markers},
          {"block", s.block ? detail::vec_json(to_vec8(*s.block)) : Json(nullptr)}};
}

/// Inverse of snapshot_message, for consoles and tests.
inline Snapshot parse_snapshot(const Json& j) {
  try {
    if (j.at("type") != "snapshot") throw Error(ErrorCode::UnknownType, "not a snapshot");
    if (j.at("schema") != kSchemaVersion) throw Error(ErrorCode::SchemaMismatch, "snapshot schema");
    Snapshot s;
    s.tick = j.at("tick").get<std::size_t>();
    s.t = j.at("time").get<double>();
    const auto status = j.at("status").get<std::string>();
    for (QpStatus st : {QpStatus::Optimal, QpStatus::Infeasible, QpStatus::MaxIter}) {
      if (to_string(st) == status) s.status = st;
    }
    s.clutch = j.at("clutch").get<bool>();
    s.scale = j.at("scale").get<double>();
    s.latched = j.at("latched").get<bool>();
    s.breakthrough = j.at("breakthrough").get<bool>();
    for (const auto& b : j.at("branches")) {
      BranchView v;
      const auto q = b.at("q").get<std::vector<double>>();
      v.q = Eigen::Map<const VecX>(q.data(), static_cast<Eigen::Index>(q.size()));
      v.tool = from_vec8(detail::vec8_from(b.at("tool")));
      v.target = from_vec8(detail::vec8_from(b.at("target")));
      v.error = b.at("error").get<double>();
      v.gripper_closed = b.at("gripper_closed").get<bool>();
      s.branches.push_back(std::move(v));
    }
    for (const auto& v : j.at("vfi")) {
      s.vfi_distance.push_back(v.at("distance").get<double>());
      s.vfi_safe.push_back(v.at("safe").get<double>());
    }
    for (const auto& m : j.at("markers")) {
      const auto p = m.at("position").get<std::vector<double>>();
      s.markers.push_back({Vec3(p.at(0), p.at(1), p.at(2)), m.at("tier").get<int>(), 0});
    }
    if (!j.at("block").is_null()) s.block = from_vec8(detail::vec8_from(j.at("block")));
    return s;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedMessage, e.what());
  }
}

inline Json error_message(ErrorCode code, const std::string& message, const Json& id = nullptr) {
  Json j{{"type", "error"}, {"code", to_string(code)}, {"message", message}};
  if (!id.is_null()) j["id"] = id;
  return j;
}

inline Json ack_message(const std::string& request, const Json& id = nullptr) {
  Json j{{"type", "ack"}, {"request", request}};
  if (!id.is_null()) j["id"] = id;
  return j;
}

// ---------------------------------------------------------------------------
// Requests

struct HelloRequest {
  int schema = kSchemaVersion;
};
struct AcquireRequest {
  std::size_t branch = 0;
};
struct ReleaseRequest {
  std::size_t branch = 0;
};

using Request = std::variant<HelloRequest, AcquireRequest, ReleaseRequest, JogCommand, ClutchCommand, ScaleCommand,
                             GripCommand>;

namespace detail {

inline void check_fields(const Json& j, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (key == "type" || key == "id") continue;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::MalformedMessage, "unexpected field '" + key + "'");
    }
  }
}

inline const Json& field(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::MalformedMessage, std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) throw Error(ErrorCode::MalformedMessage, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

inline bool boolean(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_boolean()) throw Error(ErrorCode::MalformedMessage, std::string("'") + key + "' must be a boolean");
  return v.get<bool>();
}

inline Vec3 triple(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_array() || v.size() != 3) {
    throw Error(ErrorCode::MalformedMessage, std::string("'") + key + "' must be an array of 3 numbers");
  }
  Vec3 out;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) {
      throw Error(ErrorCode::MalformedMessage, std::string("'") + key + "' must be an array of 3 numbers");
    }
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

/// 1-based wire index to 0-based branch, checked against the system.
inline std::size_t branch(const Json& j, std::size_t branch_count) {
  const Json& v = field(j, "branch");
  if (!v.is_number_integer()) throw Error(ErrorCode::MalformedMessage, "'branch' must be an integer");
  const auto b = v.get<long long>();
  if (b < 1 || static_cast<unsigned long long>(b) > branch_count) {
    throw Error(ErrorCode::UnknownBranch, "branch " + std::to_string(b) + " does not exist");
  }
  return static_cast<std::size_t>(b - 1);
}

}  // namespace detail

/// Parses and validates one console message. Throws Error with
/// MalformedMessage, UnknownType, UnknownBranch or DeltaOutOfBounds.
inline Request parse_request(const Json& j, std::size_t branch_count) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedMessage, "message must be a JSON object");
  const Json& type_field = detail::field(j, "type");
  if (!type_field.is_string()) throw Error(ErrorCode::MalformedMessage, "'type' must be a string");
  const auto type = type_field.get<std::string>();
  if (type == "hello") {
    detail::check_fields(j, {"schema"});
    const Json& v = detail::field(j, "schema");
    if (!v.is_number_integer()) throw Error(ErrorCode::MalformedMessage, "'schema' must be an integer");
    return HelloRequest{v.get<int>()};
  }
  if (type == "acquire") {
    detail::check_fields(j, {"branch"});
    return AcquireRequest{detail::branch(j, branch_count)};
  }
  if (type == "release") {
    detail::check_fields(j, {"branch"});
    return ReleaseRequest{detail::branch(j, branch_count)};
  }
  if (type == "jog") {
    detail::check_fields(j, {"branch", "frame", "delta_translation", "delta_rotation_rpy"});
    JogCommand c;
    c.branch = detail::branch(j, branch_count);
    const Json& frame = detail::field(j, "frame");
    if (frame == "tool") {
      c.frame = JogFrame::Tool;
    } else if (frame == "base") {
      c.frame = JogFrame::Base;
    } else {
      throw Error(ErrorCode::MalformedMessage, "'frame' must be \"tool\" or \"base\"");
    }
    c.delta_translation = detail::triple(j, "delta_translation");
    c.delta_rotation_rpy = detail::triple(j, "delta_rotation_rpy");
    check_jog(c, branch_count);
    return c;
  }
  if (type == "clutch") {
    detail::check_fields(j, {"engaged"});
    return ClutchCommand{detail::boolean(j, "engaged")};
  }
  if (type == "scale") {
    detail::check_fields(j, {"ratio"});
    const double r = detail::number(j, "ratio");
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::MalformedMessage, "'ratio' must be positive");
    return ScaleCommand{r};
  }
  if (type == "grip") {
    detail::check_fields(j, {"branch", "closed"});
    return GripCommand{detail::branch(j, branch_count), detail::boolean(j, "closed")};
  }
  throw Error(ErrorCode::UnknownType, "unknown message type '" + type + "'");
}

inline Json command_json(const Command& c, const Json& id = nullptr) {
  Json j = std::visit(
      [](const auto& cmd) -> Json {
        using T = std::decay_t<decltype(cmd)>;
        if constexpr (std::is_same_v<T, JogCommand>) {
          return {{"type", "jog"},
                  {"branch", cmd.branch + 1},
                  {"frame", cmd.frame == JogFrame::Tool ? "tool" : "base"},
                  {"delta_translation", detail::vec_json(cmd.delta_translation)},
                  {"delta_rotation_rpy", detail::vec_json(cmd.delta_rotation_rpy)}};
        } else if constexpr (std::is_same_v<T, ClutchCommand>) {
          return {{"type", "clutch"}, {"engaged", cmd.engaged}};
        } else if constexpr (std::is_same_v<T, ScaleCommand>) {
          return {{"type", "scale"}, {"ratio", cmd.ratio}};
        } else {
          return {{"type", "grip"}, {"branch", cmd.branch + 1}, {"closed", cmd.closed}};
        }
      },
      c);
  if (!id.is_null()) j["id"] = id;
  return j;
}

// ---------------------------------------------------------------------------
// Sessions

/// At most one session controls a branch; everyone else observes it.
class ControlRegistry {
 public:
  explicit ControlRegistry(std::size_t branches) : holder_(branches) {}

  void acquire(std::uint64_t session, std::size_t branch) {
    std::lock_guard lock(mutex_);
    auto& h = holder_.at(branch);
    if (h && *h != session) {
      throw Error(ErrorCode::BranchBusy, "branch " + std::to_string(branch + 1) + " is controlled by another console");
    }
    h = session;
  }

  void release(std::uint64_t session, std::size_t branch) {
    std::lock_guard lock(mutex_);
    auto& h = holder_.at(branch);
    if (h != session) throw Error(ErrorCode::NotController, "branch " + std::to_string(branch + 1) + " is not yours");
    h.reset();
  }

  void release_all(std::uint64_t session) {
    std::lock_guard lock(mutex_);
    for (auto& h : holder_) {
      if (h == session) h.reset();
    }
  }

  bool holds(std::uint64_t session, std::size_t branch) const {
    std::lock_guard lock(mutex_);
    return holder_.at(branch) == session;
  }

  bool holds_any(std::uint64_t session) const {
    std::lock_guard lock(mutex_);
    return std::any_of(holder_.begin(), holder_.end(), [&](const auto& h) { return h == session; });
  }

  std::vector<bool> held_by(std::uint64_t session) const {
    std::lock_guard lock(mutex_);
    std::vector<bool> out;
    for (const auto& h : holder_) out.push_back(h == session);
    return out;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::optional<std::uint64_t>> holder_;
};

/// Turns console messages into simulator commands. Network-free so that the
/// whole request path is testable; the server wraps it.
class GatewayCore {
 public:
  using Post = std::function<void(Command)>;

  GatewayCore(RobotSystem system, std::size_t vfis, Post post, double snapshot_hz = kDefaultSnapshotHz)
      : system_(std::move(system)),
        vfis_(vfis),
        post_(std::move(post)),
        snapshot_hz_(snapshot_hz),
        registry_(system_.branch_count()) {}

  std::uint64_t open_session() { return next_session_++; }
  void close_session(std::uint64_t session) { registry_.release_all(session); }

  Json hello() const { return hello_message(system_, vfis_, snapshot_hz_); }
  double snapshot_hz() const { return snapshot_hz_; }
  const ControlRegistry& registry() const { return registry_; }

  /// One reply per message: ack or error. Never throws.
  Json handle(std::uint64_t session, std::string_view text) {
    Json id = nullptr;
    try {
      const Json j = Json::parse(text);
      if (j.is_object() && j.contains("id")) id = j["id"];
      const Request r = parse_request(j, system_.branch_count());
      return std::visit([&](const auto& req) { return apply(session, req, id); }, r);
    } catch (const Json::exception& e) {
      return error_message(ErrorCode::MalformedMessage, e.what(), id);
    } catch (const Error& e) {
      return error_message(e.code(), e.message(), id);
    }
  }

 private:
  Json apply(std::uint64_t, const HelloRequest& r, const Json& id) {
    if (r.schema != kSchemaVersion) {
      return error_message(ErrorCode::SchemaMismatch,
                           "server speaks schema " + std::to_string(kSchemaVersion) + ", console " +
                               std::to_string(r.schema),
                           id);
    }
    return ack_message("hello", id);
  }

  Json apply(std::uint64_t session, const AcquireRequest& r, const Json& id) {
    registry_.acquire(session, r.branch);
    return ack_message("acquire", id);
  }

  Json apply(std::uint64_t session, const ReleaseRequest& r, const Json& id) {
    registry_.release(session, r.branch);
    return ack_message("release", id);
  }

  Json apply(std::uint64_t session, const JogCommand& c, const Json& id) {
    registry_.acquire(session, c.branch);
    post_(c);
    return ack_message("jog", id);
  }

  Json apply(std::uint64_t session, const GripCommand& c, const Json& id) {
    registry_.acquire(session, c.branch);
    post_(c);
    return ack_message("grip", id);
  }

  Json apply(std::uint64_t session, const ClutchCommand& c, const Json& id) {
    if (!registry_.holds_any(session)) throw Error(ErrorCode::NotController, "observers cannot clutch");
    post_(c);
    return ack_message("clutch", id);
  }

  Json apply(std::uint64_t session, const ScaleCommand& c, const Json& id) {
    if (!registry_.holds_any(session)) throw Error(ErrorCode::NotController, "observers cannot change the scale");
    post_(c);
    return ack_message("scale", id);
  }

  RobotSystem system_;
  std::size_t vfis_;
  Post post_;
  double snapshot_hz_;
  ControlRegistry registry_;
  std::atomic<std::uint64_t> next_session_ = 1;
};

}  // namespace railkit
