#pragma once

// Operator-side datagrams and the follower-side session that turns master
// poses into follower targets.
//
// Wire layout, little-endian, 90 bytes:
//
//   off  size  field
//    0    4    magic "AISP" (41 49 53 50)
//    4    1    version (1)
//    5    1    flags: bit0 clutch engaged, bit1 gripper closed
//    6    4    seq (u32)
//   10    8    timestamp_us (u64)
//   18   64    pose, 8 x f64 in Vec8 order
//   82    8    gripper_aperture (f64, 0..1)

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "railkit/chain_io.hpp"
#include "railkit/pose.hpp"
#include "railkit/yaml_util.hpp"

namespace railkit {

inline constexpr std::size_t kPacketSize = 90;
inline constexpr std::array<std::uint8_t, 4> kPacketMagic{0x41, 0x49, 0x53, 0x50};
inline constexpr std::uint8_t kPacketVersion = 1;
inline constexpr double kPacketUnitTolerance = 1e-6;
inline constexpr std::uint16_t kFollowerBasePort = 9871;

inline constexpr std::uint8_t kFlagClutch = 0x01;
inline constexpr std::uint8_t kFlagGripperClosed = 0x02;

using PacketBytes = std::array<std::uint8_t, kPacketSize>;

struct OperatorPacket {
  std::uint8_t flags = 0;
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  Pose pose = Pose::identity();
  double gripper_aperture = 0.0;

  bool clutch() const { return flags & kFlagClutch; }
  bool gripper_closed() const { return flags & kFlagGripperClosed; }

  bool operator==(const OperatorPacket&) const = default;
};

namespace detail {

template <typename T>
void put_le(std::uint8_t* out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[i]) << (8 * i);
  return v;
}

inline void put_f64(std::uint8_t* out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(const std::uint8_t* in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

inline bool aperture_ok(double a) { return a >= 0.0 && a <= 1.0; }

}  // namespace detail

inline PacketBytes encode(const OperatorPacket& p) {
  if (!is_unit(p.pose, kPacketUnitTolerance)) throw Error(ErrorCode::NonUnitPose, "packet pose is not unit");
  if (!detail::aperture_ok(p.gripper_aperture)) {
    throw Error(ErrorCode::ApertureOutOfRange, "gripper aperture must lie in [0, 1]");
  }
  PacketBytes out{};
  std::copy(kPacketMagic.begin(), kPacketMagic.end(), out.begin());
  out[4] = kPacketVersion;
  out[5] = p.flags;
  detail::put_le(out.data() + 6, p.seq);
  detail::put_le(out.data() + 10, p.timestamp_us);
  const Vec8 v = to_vec8(p.pose);
  for (int i = 0; i < 8; ++i) detail::put_f64(out.data() + 18 + 8 * i, v[i]);
  detail::put_f64(out.data() + 82, p.gripper_aperture);
  return out;
}

inline OperatorPacket decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kPacketSize) {
    throw Error(ErrorCode::BadLength, "expected " + std::to_string(kPacketSize) + " bytes, got " +
                                          std::to_string(bytes.size()));
  }
  if (!std::equal(kPacketMagic.begin(), kPacketMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "bad packet magic");
  }
  if (bytes[4] != kPacketVersion) throw Error(ErrorCode::BadVersion, "unsupported version " + std::to_string(bytes[4]));
  OperatorPacket p;
  p.flags = bytes[5];
  p.seq = detail::get_le<std::uint32_t>(bytes.data() + 6);
  p.timestamp_us = detail::get_le<std::uint64_t>(bytes.data() + 10);
  Vec8 v;
  for (int i = 0; i < 8; ++i) v[i] = detail::get_f64(bytes.data() + 18 + 8 * i);
  p.pose = from_vec8(v);
  if (!is_unit(p.pose, kPacketUnitTolerance)) throw Error(ErrorCode::NonUnitPose, "packet pose is not unit");
  p.gripper_aperture = detail::get_f64(bytes.data() + 82);
  if (!detail::aperture_ok(p.gripper_aperture)) {
    throw Error(ErrorCode::ApertureOutOfRange, "gripper aperture must lie in [0, 1]");
  }
  return p;
}

/// Follower-side mapping from master poses to a follower target.
///
/// Unclutched: t_F = t_F0 + (t_M - t_M0) / scale and r_F = (r_M r_M0^*) r_F0,
/// with the anchors (M0, F0) captured on the first packet and at every
/// clutch release or scale change. Clutched: the target holds and the master
/// anchor follows the master.
class TeleopSession {
 public:
  explicit TeleopSession(double scale = 3.0) { set_scale(scale); }

  void reset(const Pose& follower) {
    follower_anchor_ = follower;
    target_ = follower;
    master_anchor_.reset();
    last_master_.reset();
    last_seq_.reset();
    clutch_ = false;
  }

  double scale() const { return scale_; }

  void set_scale(double scale) {
    if (!(scale > 0.0)) throw Error(ErrorCode::ParseError, "scale must be positive");
    scale_ = scale;
    reanchor();
  }

  bool clutched() const { return clutch_; }
  bool gripper_closed() const { return gripper_closed_; }
  std::optional<std::uint32_t> last_seq() const { return last_seq_; }
  bool anchored() const { return follower_anchor_.has_value(); }

  const Pose& target() const {
    if (!target_) throw Error(ErrorCode::NoAnchor, "session has no follower anchor");
    return *target_;
  }

  /// Maps one master sample. Returns the new follower target.
  Pose map(const Pose& master, bool clutch) {
    if (!follower_anchor_) throw Error(ErrorCode::NoAnchor, "session has no follower anchor");
    if (!master_anchor_) master_anchor_ = master;
    last_master_ = master;
    if (clutch) {
      master_anchor_ = master;
    } else {
      if (clutch_) {
        // Release: continue from where the target was held.
        master_anchor_ = master;
        follower_anchor_ = target_;
      }
      const auto [rm0, tm0] = decompose(*master_anchor_);
      const auto [rf0, tf0] = decompose(*follower_anchor_);
      const auto [rm, tm] = decompose(master);
      const Vec3 t = tf0 + (tm - tm0) / scale_;
      target_ = from_rotation_translation(rm * conj(rm0) * rf0, t);
    }
    clutch_ = clutch;
    return *target_;
  }

  /// Applies a packet unless it is older than the newest one seen.
  bool accept(const OperatorPacket& p) {
    if (last_seq_ && p.seq <= *last_seq_) return false;
    last_seq_ = p.seq;
    gripper_closed_ = p.gripper_closed();
    map(p.pose, p.clutch());
    return true;
  }

 private:
  void reanchor() {
    if (last_master_ && target_) {
      master_anchor_ = last_master_;
      follower_anchor_ = target_;
    }
  }

  double scale_ = 3.0;
  bool clutch_ = false;
  bool gripper_closed_ = false;
  std::optional<Pose> master_anchor_;
  std::optional<Pose> follower_anchor_;
  std::optional<Pose> target_;
  std::optional<Pose> last_master_;
  std::optional<std::uint32_t> last_seq_;
};

/// Single-slot mailbox: writers overwrite, readers take a copy of the latest.
template <typename T>
class LatestValue {
 public:
  void put(T v) {
    std::lock_guard lock(mutex_);
    value_ = std::move(v);
    ++version_;
  }

  std::optional<T> get() const {
    std::lock_guard lock(mutex_);
    return value_;
  }

  std::uint64_t version() const {
    std::lock_guard lock(mutex_);
    return version_;
  }

 private:
  mutable std::mutex mutex_;
  std::optional<T> value_;
  std::uint64_t version_ = 0;
};

// ---------------------------------------------------------------------------
// Operator scripts: timed master waypoints, held until the next one.
//
//   rate_hz: 100
//   duration: 2.0          # optional, defaults to the last waypoint time
//   waypoints:
//     - { t: 0.0, translation: [0, 0, 0] }
//     - { t: 0.5, translation: [0.003, 0, 0], rotation: [1, 0, 0, 0] }
//     - { t: 1.0, clutch: true }
//     - { t: 1.5, clutch: false, gripper: closed, aperture: 0.0 }
//
// Fields omitted from a waypoint keep their previous value.

struct ScriptWaypoint {
  double t = 0.0;
  Pose pose = Pose::identity();
  bool clutch = false;
  bool gripper_closed = false;
  double aperture = 1.0;
};

struct OperatorScript {
  double rate_hz = 100.0;
  double duration = 0.0;
  std::vector<ScriptWaypoint> waypoints;
};

struct TimedPacket {
  double t = 0.0;
  OperatorPacket packet;
};

inline OperatorScript parse_operator_script(const std::string& text) {
  const YAML::Node root = yaml::load(text);
  yaml::require_map(root, "operator script");
  yaml::check_keys(root, {"rate_hz", "duration", "waypoints"});
  OperatorScript s;
  s.rate_hz = yaml::get_or<double>(root, "rate_hz", 100.0);
  if (!(s.rate_hz > 0.0)) throw Error(ErrorCode::ParseError, "rate_hz must be positive", yaml::line_of(root));
  const YAML::Node wps = yaml::required(root, "waypoints");
  if (!wps.IsSequence()) throw Error(ErrorCode::ParseError, "waypoints must be a list", yaml::line_of(wps));
  ScriptWaypoint cur;
  double last_t = -1.0;
  for (const auto& w : wps) {
    yaml::require_map(w, "waypoint");
    yaml::check_keys(w, {"t", "translation", "rotation", "rpy", "clutch", "gripper", "aperture"});
    cur.t = yaml::get<double>(w, "t");
    if (!(cur.t > last_t)) throw Error(ErrorCode::ParseError, "waypoint times must increase", yaml::line_of(w));
    last_t = cur.t;
    if (w["translation"] || w["rotation"] || w["rpy"]) {
      auto [r, t] = decompose(cur.pose);
      if (w["translation"]) t = yaml::vec3(w["translation"], "translation");
      r = yaml::rotation(w).value_or(r);
      cur.pose = yaml::make_pose(w, r, t);
    }
    if (w["clutch"]) cur.clutch = yaml::as<bool>(w["clutch"], "clutch");
    if (w["gripper"]) {
      const auto g = yaml::as<std::string>(w["gripper"], "gripper");
      if (g != "open" && g != "closed") {
        throw Error(ErrorCode::ParseError, "gripper must be open or closed", yaml::line_of(w["gripper"]));
      }
      cur.gripper_closed = g == "closed";
    }
    if (w["aperture"]) cur.aperture = yaml::as<double>(w["aperture"], "aperture");
    s.waypoints.push_back(cur);
  }
  if (s.waypoints.empty()) throw Error(ErrorCode::MissingField, "script has no waypoints", yaml::line_of(wps));
  s.duration = yaml::get_or<double>(root, "duration", s.waypoints.back().t);
  return s;
}

inline OperatorScript load_operator_script(const std::string& path) { return parse_operator_script(read_file(path)); }

/// The packet stream a script produces: one packet every 1/rate_hz seconds
/// from t = 0 through the duration, seq counting from 1.
inline std::vector<TimedPacket> script_packets(const OperatorScript& s) {
  std::vector<TimedPacket> out;
  const auto count = static_cast<std::uint32_t>(std::floor(s.duration * s.rate_hz + 1e-9)) + 1;
  std::size_t w = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    const double t = k / s.rate_hz;
    while (w + 1 < s.waypoints.size() && s.waypoints[w + 1].t <= t + 1e-12) ++w;
    const ScriptWaypoint& wp = s.waypoints[w];
    OperatorPacket p;
    p.seq = k + 1;
    p.timestamp_us = static_cast<std::uint64_t>(std::llround(t * 1e6));
    p.pose = wp.pose;
    p.flags = static_cast<std::uint8_t>((wp.clutch ? kFlagClutch : 0) | (wp.gripper_closed ? kFlagGripperClosed : 0));
    p.gripper_aperture = wp.aperture;
    out.push_back({t, p});
  }
  return out;
}

}  // namespace railkit
