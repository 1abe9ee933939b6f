// railkit: run scenarios, replay traces, lint VFI files, emulate an operator
// and serve the console gateway.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "railkit/gateway.hpp"
#include "railkit/trace.hpp"
#include "railkit/udp.hpp"

using namespace railkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_interrupted = false;

void on_signal(int) { g_interrupted = true; }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("railkit");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("RAILKIT_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      spdlog::warn("RAILKIT_LOG='{}' is not a level (trace, debug, info, warn, error, critical, off)", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

Scenario load(const std::string& path, const std::string& vfi, std::optional<double> duration,
              std::optional<std::uint64_t> seed) {
  Scenario s = load_scenario(path, vfi);
  if (duration) {
    if (!(*duration >= 0.0)) throw Error(ErrorCode::ParseError, "--duration must be non-negative");
    s.duration = *duration;
  }
  if (seed) s.seed = *seed;
  spdlog::info("scenario '{}': {} branches, {} DoF, {} VFIs, {} ticks", s.name, s.branches.size(),
               s.system().total_dof(), s.vfis.size(), s.ticks() + 1);
  return s;
}

void print_summary(std::ostream& out, const Scenario& s, const RunSummary& sum) {
  out << "scenario " << s.name << ": " << sum.ticks << " ticks at dt " << s.dt << " s\n";
  if (s.vfis.empty()) {
    out << "worst VFI margin: n/a (no VFIs)\n";
  } else {
    out << "worst VFI margin: " << sum.worst_margin << " m (vfi_" << sum.worst_vfi << ", line "
        << s.vfis[sum.worst_vfi].line << ")\n";
  }
  out << "final errors:";
  for (std::size_t b = 0; b < sum.final_errors.size(); ++b) out << " b" << b + 1 << "=" << sum.final_errors[b];
  out << "\nsolver: " << sum.non_optimal << " non-optimal ticks, max " << sum.max_qp_iterations << " iterations\n";
  if (s.shell) out << "markers: " << sum.markers << ", breakthrough: " << (sum.breakthrough ? "yes" : "no") << "\n";
  if (s.block) out << "grasp episodes: " << sum.grasp_episodes << ", max latch drift " << sum.max_latch_drift << "\n";
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string scenario;
  std::string vfi;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  std::string trace;
  std::string markers;
};

int cmd_run(const RunArgs& a) {
  const Scenario s = load(a.scenario, a.vfi, a.duration, a.seed);
  Simulator sim(s);
  std::ofstream file;
  std::optional<TraceWriter> writer;
  if (!a.trace.empty()) {
    file.open(a.trace, std::ios::binary);
    if (!file) throw Error(ErrorCode::Io, "cannot write " + a.trace);
    writer.emplace(file, layout_of(s));
  }
  const RunSummary sum = sim.run([&](const TraceRecord& r) {
    if (writer) writer->write(r);
    if (r.status != QpStatus::Optimal) spdlog::warn("tick {}: solver {}, holding still", r.tick, to_string(r.status));
  });
  print_summary(std::cout, s, sum);
  if (writer) {
    file.close();
    if (!file) throw Error(ErrorCode::Io, "cannot write " + a.trace);
    std::cout << "trace: " << a.trace << " (" << sum.ticks << " rows)\n";
  }
  if (!a.markers.empty()) {
    std::ofstream m(a.markers);
    if (!m) throw Error(ErrorCode::Io, "cannot write " + a.markers);
    write_markers(m, sim.markers());
    std::cout << "markers: " << a.markers << " (" << sim.markers().size() << " points)\n";
  }
  return kExitOk;
}

// --- replay ----------------------------------------------------------------

struct ReplayArgs {
  std::string trace;
  double speed = 0.0;
  std::string against;
  std::string vfi;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_replay(const ReplayArgs& a) {
  const Trace trace = read_trace_file(a.trace);
  std::ofstream file;
  std::optional<TraceWriter> writer;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw Error(ErrorCode::Io, "cannot write " + a.out);
    writer.emplace(file, trace.layout);
  }
  std::size_t n = 0;
  replay(trace, a.speed, [&](const TraceRecord& r) {
    if (writer) writer->write(r);
    if (g_interrupted) throw Error(ErrorCode::Io, "interrupted");
    ++n;
  });
  std::cout << "replayed " << n << " records";
  if (n > 0) std::cout << ", t = " << trace.records.front().t << " .. " << trace.records.back().t << " s";
  std::cout << "\n";
  if (a.against.empty()) return kExitOk;

  const Scenario s = load(a.against, a.vfi, std::nullopt, a.seed);
  Simulator sim(s);
  Trace live{layout_of(s), {}};
  sim.run([&](const TraceRecord& r) { live.records.push_back(r); });
  const TraceDiff d = diff(trace, live);
  if (d.identical) {
    std::cout << "identical to re-simulation\n";
    return kExitOk;
  }
  std::cout << "differs from re-simulation at tick " << *d.first_tick << ": " << d.reason
            << " (max |delta| = " << d.max_abs << ")\n";
  return kExitDomain;
}

// --- vfi-lint --------------------------------------------------------------

struct LintArgs {
  std::string path;
  std::vector<std::string> chains;
  std::string scenario;
};

int cmd_lint(const LintArgs& a) {
  std::optional<RobotSystem> system;
  if (!a.scenario.empty()) {
    system = load_scenario(a.scenario).system();
  } else if (!a.chains.empty()) {
    system.emplace();
    for (const auto& c : a.chains) system->branches.push_back(load_chain(c).chain);
  }
  const LintReport report = lint_vfi_config(read_file(a.path), system ? &*system : nullptr);
  if (report.document_error) {
    std::cout << a.path << ":" << report.document_error->line() << ": " << report.document_error->what() << "\n";
    return kExitDomain;
  }
  for (const auto& e : report.entries) {
    std::cout << a.path << ":" << e.line << ": entry " << e.index + 1 << ": " << (e.ok ? "ok" : e.message) << "\n";
  }
  if (report.entries.empty()) spdlog::warn("{} holds no VFI entries", a.path);
  if (!system) spdlog::info("no chains given; robot and joint indices were not checked");
  if (!report.ok()) {
    std::cout << report.entries.size() - report.valid_count() << " of " << report.entries.size()
              << " entries invalid\n";
    return kExitDomain;
  }
  std::cout << report.entries.size() << " constraints\n";
  return kExitOk;
}

// --- operator-emulate ------------------------------------------------------

struct EmulateArgs {
  std::size_t branch = 1;
  std::optional<std::uint16_t> port;
  std::string host = "127.0.0.1";
  std::string script;
  double timeout = 1.0;
};

int cmd_emulate(const EmulateArgs& a) {
  const OperatorScript script = load_operator_script(a.script);
  const auto port = a.port ? *a.port : static_cast<std::uint16_t>(kFollowerBasePort + a.branch - 1);
  spdlog::info("streaming {} at {} Hz to {}:{}", a.script, script.rate_hz, a.host, port);
  UdpSender sender(a.host, port);
  const StreamStats stats = stream_script(sender, script, &g_interrupted, a.timeout);
  if (stats.unreachable) {
    std::cerr << "error: " << a.host << ":" << port << " refused packets for " << a.timeout << " s\n";
    return kExitDomain;
  }
  if (stats.refused > 0) spdlog::warn("{} of {} packets refused", stats.refused, stats.sent);
  std::cout << "sent " << stats.sent << " packets to " << a.host << ":" << port << "\n";
  return kExitOk;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  std::string scenario;
  std::string vfi;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  std::uint16_t port = kGatewayPort;
  double hz = kDefaultSnapshotHz;
  double speed = 1.0;
  std::vector<std::size_t> operator_branches;
  double operator_scale = 3.0;
  std::string trace;
};

int cmd_serve(const ServeArgs& a) {
  const Scenario s = load(a.scenario, a.vfi, a.duration, a.seed);
  Simulator sim(s);
  std::vector<std::unique_ptr<UdpReceiver>> receivers;
  for (std::size_t b : a.operator_branches) {
    if (b < 1 || b > s.branches.size()) {
      throw Error(ErrorCode::UnknownBranch, "--operator-branch " + std::to_string(b) + " does not exist");
    }
    auto box = std::make_shared<LatestValue<OperatorPacket>>();
    sim.attach_operator(b - 1, box, a.operator_scale);
    const auto port = static_cast<std::uint16_t>(kFollowerBasePort + b - 1);
    receivers.push_back(std::make_unique<UdpReceiver>(
        port, [box](const OperatorPacket& p) { box->put(p); },
        [](const Error& e) { spdlog::debug("dropped datagram: {}", e.what()); }));
    std::cout << "branch " << b << " listens for operator packets on udp " << port << "\n";
  }

  GatewayCore core(sim.system(), s.vfis.size(), [&](Command c) { sim.post(std::move(c)); }, a.hz);
  GatewayServer server(core, [&] { return sim.snapshot(); }, a.port);
  std::cout << "gateway on ws://127.0.0.1:" << server.port() << "/ at " << a.hz << " Hz" << std::endl;

  // The trace is written from the records the loop produces, on this thread.
  std::ofstream file;
  std::optional<TraceWriter> writer;
  if (!a.trace.empty()) {
    file.open(a.trace, std::ios::binary);
    if (!file) throw Error(ErrorCode::Io, "cannot write " + a.trace);
    writer.emplace(file, layout_of(s));
  }
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  while (!g_interrupted && !sim.finished()) {
    const double t = static_cast<double>(sim.tick()) * s.dt / a.speed;
    std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(t)));
    const TraceRecord r = sim.step();
    if (writer) writer->write(r);
  }
  server.stop();
  print_summary(std::cout, s, sim.summary());
  if (writer) std::cout << "trace: " << a.trace << " (" << sim.summary().ticks << " rows)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"railkit: multi-branch kinematic control, simulation and teleoperation tools", "railkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "railkit 1.0");
  app.footer("Exit codes: 0 success, 1 domain error, 2 usage error. RAILKIT_LOG sets log verbosity.");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write its trace");
  run_cmd->add_option("--scenario", run.scenario, "Scenario YAML file")->required();
  run_cmd->add_option("--vfi", run.vfi, "VFI file replacing the scenario's own");
  run_cmd->add_option("--duration", run.duration, "Simulated seconds, overrides the scenario");
  run_cmd->add_option("--trace", run.trace, "Trace CSV to write");
  run_cmd->add_option("--seed", run.seed, "Random seed, overrides the scenario");
  run_cmd->add_option("--markers", run.markers, "Marker point list CSV to write");

  ReplayArgs rep;
  auto* rep_cmd = app.add_subcommand("replay", "Replay a trace, optionally diffing it against a re-simulation");
  rep_cmd->add_option("--trace", rep.trace, "Trace CSV to replay")->required();
  rep_cmd->add_option("--speed", rep.speed, "Wall-clock speed factor, 0 for as fast as possible")
      ->check(CLI::NonNegativeNumber);
  rep_cmd->add_option("--against", rep.against, "Scenario to re-simulate and diff against");
  rep_cmd->add_option("--vfi", rep.vfi, "VFI file for the re-simulation");
  rep_cmd->add_option("--seed", rep.seed, "Seed for the re-simulation");
  rep_cmd->add_option("--out", rep.out, "Write the replayed stream to this CSV");

  LintArgs lint;
  auto* lint_cmd = app.add_subcommand("vfi-lint", "Validate a VFI configuration file");
  lint_cmd->add_option("path", lint.path, "VFI YAML file")->required();
  lint_cmd->add_option("--chain", lint.chains, "Branch chain files in robot-index order, to check indices");
  lint_cmd->add_option("--scenario", lint.scenario, "Take the branch chains from this scenario");

  EmulateArgs emu;
  auto* emu_cmd = app.add_subcommand("operator-emulate", "Stream a scripted master over UDP");
  emu_cmd->add_option("--branch", emu.branch, "Follower branch (1-based); picks the default port")
      ->check(CLI::PositiveNumber);
  emu_cmd->add_option("--port", emu.port, "UDP port, default 9870 + branch");
  emu_cmd->add_option("--host", emu.host, "Follower host")->capture_default_str();
  emu_cmd->add_option("--script", emu.script, "Operator script YAML")->required();
  emu_cmd->add_option("--timeout", emu.timeout, "Seconds of refused packets before giving up")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  ServeArgs srv;
  auto* srv_cmd = app.add_subcommand("serve", "Run a scenario in real time behind the console gateway");
  srv_cmd->add_option("--scenario", srv.scenario, "Scenario YAML file")->required();
  srv_cmd->add_option("--vfi", srv.vfi, "VFI file replacing the scenario's own");
  srv_cmd->add_option("--duration", srv.duration, "Simulated seconds, overrides the scenario");
  srv_cmd->add_option("--seed", srv.seed, "Random seed, overrides the scenario");
  srv_cmd->add_option("--port", srv.port, "Websocket port")->capture_default_str();
  srv_cmd->add_option("--hz", srv.hz, "Snapshot rate per console")->capture_default_str()->check(CLI::PositiveNumber);
  srv_cmd->add_option("--speed", srv.speed, "Simulation speed relative to wall clock")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  srv_cmd->add_option("--operator-branch", srv.operator_branches,
                      "Branch (1-based) driven by UDP operator packets on port 9870 + branch");
  srv_cmd->add_option("--operator-scale", srv.operator_scale, "Master:follower translation scale")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  srv_cmd->add_option("--trace", srv.trace, "Trace CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*rep_cmd) return cmd_replay(rep);
    if (*lint_cmd) return cmd_lint(lint);
    if (*emu_cmd) return cmd_emulate(emu);
    if (*srv_cmd) return cmd_serve(srv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what();
    if (e.line() > 0) std::cerr << " (line " << e.line() << ")";
    std::cerr << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
