#pragma once

// Deterministic kinematic simulator: scenario files, task objects (grasp latch,
// drill markers, oval trajectories), the tick loop and per-tick trace records.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <variant>

#include "railkit/chain_io.hpp"
#include "railkit/commands.hpp"
#include "railkit/controller.hpp"
#include "railkit/teleop.hpp"
#include "railkit/vfi.hpp"

namespace railkit {

inline constexpr double kGraspThreshold = 0.005;
inline constexpr double kMarkDepth = 1e-4;
inline constexpr double kBreakDepth = 5e-4;

// ---------------------------------------------------------------------------
// Task objects

struct Block {
  Pose pose = Pose::identity();
  std::size_t branch = 0;  // the branch whose tool grasps it
};

struct GraspState {
  bool latched = false;
  Pose relative = Pose::identity();  // conj(tool) * block while latched
  int episodes = 0;
};

/// Latches when the gripper is closed within `threshold` of the block, carries
/// the block rigidly while latched and drops it where it is on release.
inline void grasp_update(GraspState& g, Block& block, const Pose& tool, bool closed,
                         double threshold = kGraspThreshold) {
  if (!closed) {
    g.latched = false;
    return;
  }
  if (!g.latched) {
    if ((translation_of(tool) - translation_of(block.pose)).norm() >= threshold) return;
    g.latched = true;
    g.relative = conj(tool) * block.pose;
    ++g.episodes;
  }
  block.pose = tool * g.relative;
}

struct Shell {
  Vec3 center = Vec3::Zero();
  double radius = 0.05;
  std::size_t branch = 0;  // the drilling branch
  double mark_depth = kMarkDepth;
  double break_depth = kBreakDepth;
};

struct Marker {
  Vec3 position = Vec3::Zero();
  int tier = 1;
  std::size_t tick = 0;
};

inline double penetration_depth(const Shell& s, const Vec3& tip) {
  return std::max(0.0, s.radius - (tip - s.center).norm());
}

/// Appends at most one marker for this tick. Returns its tier, 0 for none.
inline int drill_update(std::vector<Marker>& markers, const Shell& s, const Vec3& tip, std::size_t tick) {
  const double depth = penetration_depth(s, tip);
  if (!(depth > s.mark_depth)) return 0;
  const int tier = depth > s.break_depth ? 2 : 1;
  const Vec3 off = tip - s.center;
  const Vec3 dir = off.norm() > 0.0 ? Vec3(off.normalized()) : Vec3::UnitZ();
  markers.push_back({s.center + s.radius * dir, tier, tick});
  return tier;
}

struct OvalParams {
  Pose center = Pose::identity();  // tool pose at the ellipse center; z is the approach axis
  double a = 0.004;
  double b = 0.003;
  double period = 4.0;
  double depth = 0.0;  // along the approach axis
};

/// x_d(t) = center * translation(a cos(2 pi t / T), b sin(2 pi t / T), depth).
inline Pose oval_trajectory(double t, const OvalParams& p) {
  if (!(p.period > 0.0)) throw Error(ErrorCode::ParseError, "oval period must be positive");
  double phase = std::fmod(t, p.period) / p.period;
  if (phase < 0.0) phase += 1.0;
  const double angle = 2.0 * std::numbers::pi * phase;
  return p.center * from_translation({p.a * std::cos(angle), p.b * std::sin(angle), p.depth});
}

// ---------------------------------------------------------------------------
// Scenario

struct HoldTarget {};

struct PoseTarget {
  Pose pose;
};

struct Waypoint {
  double t = 0.0;
  std::optional<Pose> pose;     // absolute
  std::optional<Vec3> offset;   // relative to the initial tool position
  std::optional<bool> gripper;  // closed?
};

struct WaypointTarget {
  std::vector<Waypoint> points;
};

struct OvalTarget {
  OvalParams params;
  double start = 0.0;  // phase 0 is held until this time
};

struct OperatorTarget {
  std::string script_path;
  std::vector<TimedPacket> packets;
  double scale = 3.0;
};

using TargetSource = std::variant<HoldTarget, PoseTarget, WaypointTarget, OvalTarget, OperatorTarget>;

struct BranchSetup {
  std::string chain_path;
  CompositeChain chain;
  VecX q0;
  TargetSource target = HoldTarget{};
};

struct Peg {
  Vec3 position = Vec3::Zero();
  double radius = 0.002;
};

struct Scenario {
  std::string name = "scenario";
  double dt = 0.004;
  double duration = 1.0;
  std::uint64_t seed = 0;
  double initial_jitter = 0.0;  // rad or m, uniform per joint
  double target_jitter = 0.0;   // m, uniform per axis on pose targets
  std::string vfi_path;
  std::vector<VfiSpec> vfis;
  ControllerConfig controller;
  std::vector<BranchSetup> branches;
  std::optional<Block> block;
  std::optional<Shell> shell;
  std::vector<Peg> pegs;
  double grasp_threshold = kGraspThreshold;

  RobotSystem system() const {
    RobotSystem s;
    for (const auto& b : branches) s.branches.push_back(b.chain);
    return s;
  }

  std::size_t ticks() const { return static_cast<std::size_t>(std::llround(duration / dt)); }
};

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& rel) {
  const std::filesystem::path p(rel);
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

inline std::optional<bool> parse_gripper(const YAML::Node& n) {
  if (!n) return std::nullopt;
  const auto g = yaml::as<std::string>(n, "gripper");
  if (g != "open" && g != "closed") throw Error(ErrorCode::ParseError, "gripper must be open or closed", yaml::line_of(n));
  return g == "closed";
}

inline TargetSource parse_target(const YAML::Node& n, const std::filesystem::path& base) {
  if (!n) return HoldTarget{};
  yaml::require_map(n, "target");
  const auto kind = yaml::get<std::string>(n, "kind");
  if (kind == "hold") {
    yaml::check_keys(n, {"kind"});
    return HoldTarget{};
  }
  if (kind == "pose") {
    yaml::check_keys(n, {"kind", "pose"});
    return PoseTarget{yaml::pose(yaml::required(n, "pose"))};
  }
  if (kind == "waypoints") {
    yaml::check_keys(n, {"kind", "points"});
    WaypointTarget w;
    double last = -1.0;
    for (const auto& p : yaml::required(n, "points")) {
      yaml::require_map(p, "waypoint");
      yaml::check_keys(p, {"t", "pose", "offset", "gripper"});
      Waypoint wp;
      wp.t = yaml::get<double>(p, "t");
      if (!(wp.t > last)) throw Error(ErrorCode::ParseError, "waypoint times must increase", yaml::line_of(p));
      last = wp.t;
      if (p["pose"] && p["offset"]) {
        throw Error(ErrorCode::ParseError, "waypoint takes pose or offset, not both", yaml::line_of(p));
      }
      if (p["pose"]) wp.pose = yaml::pose(p["pose"]);
      if (p["offset"]) wp.offset = yaml::vec3(p["offset"], "offset");
      wp.gripper = parse_gripper(p["gripper"]);
      w.points.push_back(wp);
    }
    return w;
  }
  if (kind == "oval") {
    yaml::check_keys(n, {"kind", "center", "a", "b", "period", "depth", "start"});
    OvalTarget o;
    o.params.center = yaml::pose(yaml::required(n, "center"));
    o.params.a = yaml::get<double>(n, "a");
    o.params.b = yaml::get<double>(n, "b");
    o.params.period = yaml::get<double>(n, "period");
    o.params.depth = yaml::get_or<double>(n, "depth", 0.0);
    o.start = yaml::get_or<double>(n, "start", 0.0);
    if (!(o.params.period > 0.0)) throw Error(ErrorCode::ParseError, "oval period must be positive", yaml::line_of(n));
    return o;
  }
  if (kind == "operator") {
    yaml::check_keys(n, {"kind", "script", "scale"});
    OperatorTarget o;
    o.script_path = resolve(base, yaml::get<std::string>(n, "script"));
    o.scale = yaml::get_or<double>(n, "scale", 3.0);
    if (!(o.scale > 0.0)) throw Error(ErrorCode::ParseError, "scale must be positive", yaml::line_of(n));
    o.packets = script_packets(load_operator_script(o.script_path));
    return o;
  }
  throw Error(ErrorCode::ParseError, "unknown target kind '" + kind + "'", yaml::line_of(n));
}

}  // namespace detail

/// Parses a scenario. Relative paths resolve against `base_dir`.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  const YAML::Node root = yaml::load(text);
  yaml::require_map(root, "scenario");
  yaml::check_keys(root, {"name", "dt", "duration", "seed", "initial_jitter", "target_jitter", "vfi", "controller",
                          "branches", "block", "shell", "pegs", "grasp_threshold"});
  Scenario s;
  s.name = yaml::get_or<std::string>(root, "name", "scenario");
  s.dt = yaml::get_or<double>(root, "dt", 0.004);
  s.duration = yaml::get_or<double>(root, "duration", 1.0);
  s.seed = yaml::get_or<std::uint64_t>(root, "seed", 0);
  s.initial_jitter = yaml::get_or<double>(root, "initial_jitter", 0.0);
  s.target_jitter = yaml::get_or<double>(root, "target_jitter", 0.0);
  s.grasp_threshold = yaml::get_or<double>(root, "grasp_threshold", kGraspThreshold);
  if (!(s.dt > 0.0)) throw Error(ErrorCode::ParseError, "dt must be positive", yaml::line_of(root["dt"]));
  if (!(s.duration >= 0.0)) {
    throw Error(ErrorCode::ParseError, "duration must be non-negative", yaml::line_of(root["duration"]));
  }

  if (const YAML::Node c = root["controller"]) {
    yaml::require_map(c, "controller");
    yaml::check_keys(c, {"task_gain", "damping", "vfi_gain", "joint_limit_gain"});
    s.controller.task_gain = yaml::get_or<double>(c, "task_gain", s.controller.task_gain);
    s.controller.damping = yaml::get_or<double>(c, "damping", s.controller.damping);
    s.controller.constraint_gains.vfi = yaml::get_or<double>(c, "vfi_gain", s.controller.constraint_gains.vfi);
    s.controller.constraint_gains.joint_limit =
        yaml::get_or<double>(c, "joint_limit_gain", s.controller.constraint_gains.joint_limit);
  }
  s.controller.dt = s.dt;

  const YAML::Node branches = yaml::required(root, "branches");
  if (!branches.IsSequence() || branches.size() == 0) {
    throw Error(ErrorCode::ParseError, "branches must be a non-empty list", yaml::line_of(branches));
  }
  for (const auto& b : branches) {
    yaml::require_map(b, "branch");
    yaml::check_keys(b, {"chain", "q0", "target"});
    BranchSetup setup;
    setup.chain_path = detail::resolve(base_dir, yaml::get<std::string>(b, "chain"));
    setup.chain = load_chain(setup.chain_path).chain;
    const auto dof = static_cast<int>(setup.chain.dof());
    setup.q0 = b["q0"] ? VecX(yaml::vector(b["q0"], "q0", dof)) : VecX(VecX::Zero(dof));
    setup.target = detail::parse_target(b["target"], base_dir);
    s.branches.push_back(std::move(setup));
  }

  if (root["vfi"]) {
    s.vfi_path = detail::resolve(base_dir, yaml::get<std::string>(root, "vfi"));
  }

  if (const YAML::Node n = root["block"]) {
    yaml::require_map(n, "block");
    yaml::check_keys(n, {"pose", "branch"});
    Block blk{yaml::pose(n["pose"]), 0};
    const auto br = yaml::get<long long>(n, "branch");
    if (br < 1 || static_cast<std::size_t>(br) > s.branches.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "block branch out of range", yaml::line_of(n["branch"]));
    }
    blk.branch = static_cast<std::size_t>(br - 1);
    s.block = blk;
  }
  if (const YAML::Node n = root["shell"]) {
    yaml::require_map(n, "shell");
    yaml::check_keys(n, {"center", "radius", "branch", "mark_depth", "break_depth"});
    Shell sh;
    sh.center = yaml::vec3(yaml::required(n, "center"), "center");
    sh.radius = yaml::get<double>(n, "radius");
    const auto br = yaml::get<long long>(n, "branch");
    if (br < 1 || static_cast<std::size_t>(br) > s.branches.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "shell branch out of range", yaml::line_of(n["branch"]));
    }
    sh.branch = static_cast<std::size_t>(br - 1);
    sh.mark_depth = yaml::get_or<double>(n, "mark_depth", kMarkDepth);
    sh.break_depth = yaml::get_or<double>(n, "break_depth", kBreakDepth);
    if (!(sh.radius > 0.0) || !(sh.mark_depth > 0.0) || !(sh.break_depth > sh.mark_depth)) {
      throw Error(ErrorCode::ParseError, "shell needs radius > 0 and 0 < mark_depth < break_depth", yaml::line_of(n));
    }
    s.shell = sh;
  }
  if (const YAML::Node n = root["pegs"]) {
    for (const auto& p : n) {
      yaml::require_map(p, "peg");
      yaml::check_keys(p, {"position", "radius"});
      s.pegs.push_back({yaml::vec3(yaml::required(p, "position"), "position"), yaml::get_or<double>(p, "radius", 0.002)});
    }
  }
  return s;
}

/// Loads a scenario file and the VFI file it references. A non-empty
/// `vfi_override` replaces the scenario's own VFI path.
inline Scenario load_scenario(const std::string& path, const std::string& vfi_override = {}) {
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  Scenario s = parse_scenario(read_file(path), base);
  if (!vfi_override.empty()) s.vfi_path = vfi_override;
  if (!s.vfi_path.empty()) {
    const RobotSystem system = s.system();
    try {
      s.vfis = parse_vfi_config(read_file(s.vfi_path), &system);
    } catch (const Error& e) {
      throw Error(e.code(), s.vfi_path + ": " + e.message(), e.line());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Simulation

struct TraceRecord {
  std::size_t tick = 0;
  double t = 0.0;
  VecX q;
  std::vector<double> vfi;
  QpStatus status = QpStatus::Optimal;
  std::vector<double> errors;
  bool latched = false;
  std::size_t markers = 0;
  bool breakthrough = false;
};

struct BranchView {
  VecX q;
  Pose tool;
  Pose target;
  double error = 0.0;
  bool gripper_closed = false;
};

/// Everything a console needs, taken from one tick.
struct Snapshot {
  std::size_t tick = 0;
  double t = 0.0;
  std::vector<BranchView> branches;
  std::vector<double> vfi_distance;
  std::vector<double> vfi_safe;
  std::vector<Marker> markers;
  std::optional<Pose> block;
  bool latched = false;
  bool breakthrough = false;
  bool clutch = false;
  double scale = 3.0;
  QpStatus status = QpStatus::Optimal;
};

struct RunSummary {
  std::size_t ticks = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min over VFIs and ticks of the signed slack
  std::size_t worst_vfi = 0;
  std::vector<double> final_errors;
  std::size_t non_optimal = 0;
  int max_qp_iterations = 0;
  std::size_t markers = 0;
  bool breakthrough = false;
  int grasp_episodes = 0;
  double max_latch_drift = 0.0;
};

class Simulator {
 public:
  explicit Simulator(Scenario scenario)
      : scenario_(std::move(scenario)), system_(scenario_.system()), controller_(scenario_.controller) {
    reset();
  }

  const Scenario& scenario() const { return scenario_; }
  const RobotSystem& system() const { return system_; }
  const VecX& q() const { return q_; }
  std::size_t tick() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * scenario_.dt; }
  const std::vector<Marker>& markers() const { return markers_; }
  const std::optional<Block>& block() const { return block_; }
  const GraspState& grasp() const { return grasp_; }
  const RunSummary& summary() const { return summary_; }
  bool finished() const { return tick_ > scenario_.ticks(); }

  void reset() {
    std::mt19937_64 rng(scenario_.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<VecX> qs;
    for (const auto& b : scenario_.branches) {
      VecX q = b.q0;
      if (scenario_.initial_jitter > 0.0) {
        for (Eigen::Index i = 0; i < q.size(); ++i) q[i] += scenario_.initial_jitter * unit(rng);
      }
      qs.push_back(clamp_joints(b.chain, q));
    }
    q_ = system_.stack(qs);
    initial_tools_.clear();
    for (std::size_t b = 0; b < system_.branch_count(); ++b) initial_tools_.push_back(fk(system_.branches[b], qs[b]));

    jitter_.assign(system_.branch_count(), Vec3::Zero());
    if (scenario_.target_jitter > 0.0) {
      for (auto& j : jitter_) j = scenario_.target_jitter * Vec3(unit(rng), unit(rng), unit(rng));
    }

    targets_ = initial_tools_;
    gripper_.assign(system_.branch_count(), false);
    live_.assign(system_.branch_count(), false);
    sessions_.clear();
    next_packet_.assign(system_.branch_count(), 0);
    for (std::size_t b = 0; b < system_.branch_count(); ++b) {
      double scale = 3.0;
      if (const auto* op = std::get_if<OperatorTarget>(&scenario_.branches[b].target)) scale = op->scale;
      sessions_.emplace_back(scale);
      sessions_.back().reset(initial_tools_[b]);
    }
    block_ = scenario_.block;
    grasp_ = {};
    markers_.clear();
    breakthrough_ = false;
    tick_ = 0;
    summary_ = {};
    last_output_ = {};
    clutch_ = false;
    console_scale_ = 3.0;
  }

  /// Thread-safe: queued commands are applied at the start of the next tick.
  void post(Command c) {
    std::lock_guard lock(inbox_mutex_);
    inbox_.push_back(std::move(c));
  }

  /// Live operator packets for a branch (e.g. from a UDP receiver).
  void attach_operator(std::size_t branch, std::shared_ptr<LatestValue<OperatorPacket>> box, double scale) {
    if (branch >= system_.branch_count()) throw Error(ErrorCode::UnknownBranch, "no such branch");
    live_boxes_.resize(system_.branch_count());
    live_boxes_[branch] = std::move(box);
    sessions_[branch].set_scale(scale);
    live_[branch] = true;
  }

  /// Advances one tick and returns its trace record. Record k describes the
  /// state at t = k dt; the state is then integrated unless k is the last tick.
  TraceRecord step() {
    const double t = time();
    drain_inbox();
    update_targets(t);

    const auto qs = system_.split(q_);
    std::vector<Pose> tools;
    for (std::size_t b = 0; b < system_.branch_count(); ++b) tools.push_back(fk(system_.branches[b], qs[b]));
    update_objects(tools);

    const ConstraintSet constraints = assemble(scenario_.vfis, system_, q_, scenario_.controller.constraint_gains);
    std::vector<std::optional<ControlTask>> tasks;
    for (std::size_t b = 0; b < system_.branch_count(); ++b) {
      tasks.push_back(ControlTask{b, targets_[b], scenario_.controller.task_gain, scenario_.controller.damping});
    }
    last_output_ = controller_.step(system_, q_, tasks, constraints);

    TraceRecord rec;
    rec.tick = tick_;
    rec.t = t;
    rec.q = q_;
    rec.vfi = constraints.vfi_distance;
    rec.status = last_output_.status;
    rec.errors = last_output_.error_norms;
    rec.latched = grasp_.latched;
    rec.markers = markers_.size();
    rec.breakthrough = breakthrough_;
    account(rec);
    publish(rec, tools);

    if (tick_ < scenario_.ticks()) q_ = integrate_step(system_, q_, last_output_.u, scenario_.dt);
    ++tick_;
    return rec;
  }

  /// Runs to the end, handing every record to `sink`.
  template <typename Sink>
  RunSummary run(Sink&& sink) {
    while (!finished()) sink(step());
    return summary_;
  }

  /// Latest published snapshot; safe to call from other threads.
  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }

 private:
  void drain_inbox() {
    std::vector<Command> pending;
    {
      std::lock_guard lock(inbox_mutex_);
      pending.swap(inbox_);
    }
    for (const auto& c : pending) {
      if (const auto* jog = std::get_if<JogCommand>(&c)) {
        if (jog->branch >= system_.branch_count()) continue;
        live_[jog->branch] = true;
        targets_[jog->branch] = apply_jog(targets_[jog->branch], *jog, console_scale_, clutch_);
      } else if (const auto* cl = std::get_if<ClutchCommand>(&c)) {
        clutch_ = cl->engaged;
      } else if (const auto* sc = std::get_if<ScaleCommand>(&c)) {
        if (sc->ratio > 0.0) console_scale_ = sc->ratio;
      } else if (const auto* g = std::get_if<GripCommand>(&c)) {
        if (g->branch < system_.branch_count()) gripper_[g->branch] = g->closed;
      }
    }
  }

  void update_targets(double t) {
    for (std::size_t b = 0; b < system_.branch_count(); ++b) {
      if (b < live_boxes_.size() && live_boxes_[b]) {
        if (const auto p = live_boxes_[b]->get()) {
          if (sessions_[b].accept(*p)) {
            targets_[b] = sessions_[b].target();
            gripper_[b] = p->gripper_closed();
          }
        }
        continue;
      }
      if (live_[b]) continue;
      std::visit([&](const auto& src) { apply_source(b, src, t); }, scenario_.branches[b].target);
    }
  }

  Pose jittered(std::size_t b, const Pose& p) const {
    if (jitter_[b].isZero()) return p;
    return from_translation(jitter_[b]) * p;
  }

  void apply_source(std::size_t, const HoldTarget&, double) {}

  void apply_source(std::size_t b, const PoseTarget& src, double) { targets_[b] = jittered(b, src.pose); }

  void apply_source(std::size_t b, const WaypointTarget& src, double t) {
    const Waypoint* current = nullptr;
    for (const auto& w : src.points) {
      if (w.t <= t + 1e-12) current = &w;
    }
    if (!current) return;
    Pose p = targets_[b];
    if (current->pose) {
      p = *current->pose;
    } else if (current->offset) {
      p = from_translation(*current->offset) * initial_tools_[b];
    }
    targets_[b] = jittered(b, p);
    if (current->gripper) gripper_[b] = *current->gripper;
  }

  void apply_source(std::size_t b, const OvalTarget& src, double t) {
    targets_[b] = jittered(b, oval_trajectory(std::max(0.0, t - src.start), src.params));
  }

  void apply_source(std::size_t b, const OperatorTarget& src, double t) {
    auto& k = next_packet_[b];
    while (k < src.packets.size() && src.packets[k].t <= t + 1e-12) {
      if (sessions_[b].accept(src.packets[k].packet)) {
        targets_[b] = sessions_[b].target();
        gripper_[b] = src.packets[k].packet.gripper_closed();
      }
      ++k;
    }
  }

  void update_objects(const std::vector<Pose>& tools) {
    if (block_) {
      grasp_update(grasp_, *block_, tools[block_->branch], gripper_[block_->branch], scenario_.grasp_threshold);
      if (grasp_.latched) {
        const Vec8 drift = to_vec8(conj(tools[block_->branch]) * block_->pose) - to_vec8(grasp_.relative);
        summary_.max_latch_drift = std::max(summary_.max_latch_drift, drift.cwiseAbs().maxCoeff());
      }
      summary_.grasp_episodes = grasp_.episodes;
    }
    if (scenario_.shell) {
      const Shell& sh = *scenario_.shell;
      const int tier = drill_update(markers_, sh, translation_of(tools[sh.branch]), tick_);
      if (tier == 2) breakthrough_ = true;
    }
  }

  void account(const TraceRecord& rec) {
    summary_.ticks = rec.tick + 1;
    for (std::size_t i = 0; i < scenario_.vfis.size(); ++i) {
      const auto& v = scenario_.vfis[i];
      const double slack =
          v.direction == VfiDirection::Keepout ? rec.vfi[i] - v.safe_distance : v.safe_distance - rec.vfi[i];
      if (slack < summary_.worst_margin) {
        summary_.worst_margin = slack;
        summary_.worst_vfi = i;
      }
    }
    summary_.final_errors = rec.errors;
    if (rec.status != QpStatus::Optimal) ++summary_.non_optimal;
    summary_.max_qp_iterations = std::max(summary_.max_qp_iterations, last_output_.qp_iterations);
    summary_.markers = rec.markers;
    summary_.breakthrough = rec.breakthrough;
  }

  void publish(const TraceRecord& rec, const std::vector<Pose>& tools) {
    auto snap = std::make_shared<Snapshot>();
    snap->tick = rec.tick;
    snap->t = rec.t;
    const auto qs = system_.split(rec.q);
    for (std::size_t b = 0; b < system_.branch_count(); ++b) {
      snap->branches.push_back({qs[b], tools[b], targets_[b], rec.errors[b], gripper_[b]});
    }
    snap->vfi_distance = rec.vfi;
    for (const auto& v : scenario_.vfis) snap->vfi_safe.push_back(v.safe_distance);
    snap->markers = markers_;
    if (block_) snap->block = block_->pose;
    snap->latched = grasp_.latched;
    snap->breakthrough = breakthrough_;
    snap->clutch = clutch_;
    snap->scale = console_scale_;
    snap->status = rec.status;
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
  }

  Scenario scenario_;
  RobotSystem system_;
  CentralizedController controller_;

  VecX q_;
  std::size_t tick_ = 0;
  std::vector<Pose> initial_tools_;
  std::vector<Vec3> jitter_;
  std::vector<Pose> targets_;
  std::vector<bool> gripper_;
  std::vector<bool> live_;
  std::vector<TeleopSession> sessions_;
  std::vector<std::size_t> next_packet_;
  std::vector<std::shared_ptr<LatestValue<OperatorPacket>>> live_boxes_;
  std::optional<Block> block_;
  GraspState grasp_;
  std::vector<Marker> markers_;
  bool breakthrough_ = false;
  bool clutch_ = false;
  double console_scale_ = 3.0;
  ControlOutput last_output_;
  RunSummary summary_;

  std::mutex inbox_mutex_;
  std::vector<Command> inbox_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace railkit
