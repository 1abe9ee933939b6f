#pragma once

// Console commands that steer branch targets.

#include <cmath>
#include <string>
#include <variant>

#include "railkit/pose.hpp"

namespace railkit {

inline constexpr double kMaxJogTranslation = 0.010;  // m per message
inline constexpr double kMaxJogRotation = 0.1;       // rad per message

enum class JogFrame { Tool, Base };

struct JogCommand {
  std::size_t branch = 0;
  JogFrame frame = JogFrame::Tool;
  Vec3 delta_translation = Vec3::Zero();
  Vec3 delta_rotation_rpy = Vec3::Zero();
};

struct ClutchCommand {
  bool engaged = false;
};

struct ScaleCommand {
  double ratio = 3.0;
};

struct GripCommand {
  std::size_t branch = 0;
  bool closed = false;
};

using Command = std::variant<JogCommand, ClutchCommand, ScaleCommand, GripCommand>;

inline void check_jog(const JogCommand& cmd, std::size_t branch_count) {
  if (cmd.branch >= branch_count) {
    throw Error(ErrorCode::UnknownBranch, "branch " + std::to_string(cmd.branch + 1) + " does not exist");
  }
  const double t = cmd.delta_translation.norm();
  const double r = cmd.delta_rotation_rpy.norm();
  if (!(t <= kMaxJogTranslation)) throw Error(ErrorCode::DeltaOutOfBounds, "translation delta exceeds 10 mm");
  if (!(r <= kMaxJogRotation)) throw Error(ErrorCode::DeltaOutOfBounds, "rotation delta exceeds 0.1 rad");
}

/// New target after a jog. Tool-frame jogs right-compose the delta, base-frame
/// jogs left-compose it; translation is divided by the motion scale.
inline Pose apply_jog(const Pose& target, const JogCommand& cmd, double scale, bool clutched) {
  if (clutched) return target;
  const Pose delta = from_rotation_translation(from_rpy(cmd.delta_rotation_rpy), cmd.delta_translation / scale);
  return cmd.frame == JogFrame::Tool ? target * delta : delta * target;
}

}  // namespace railkit
