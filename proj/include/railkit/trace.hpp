#pragma once

// Per-tick CSV traces.
//
//   # railkit-trace 1
//   tick,t,q_0,...,vfi_0,...,status,err_0,...,latched,markers,breakthrough
//
// Doubles are written in shortest round-trip form, so a trace read back
// compares bit-equal with the run that produced it.

#include <charconv>
#include <chrono>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include "railkit/sim.hpp"

namespace railkit {

inline constexpr std::string_view kTraceMagic = "# railkit-trace 1";

struct TraceLayout {
  std::size_t dof = 0;
  std::size_t vfis = 0;
  std::size_t branches = 0;

  std::string header() const {
    std::string h = "tick,t";
    for (std::size_t i = 0; i < dof; ++i) h += ",q_" + std::to_string(i);
    for (std::size_t i = 0; i < vfis; ++i) h += ",vfi_" + std::to_string(i);
    h += ",status";
    for (std::size_t i = 0; i < branches; ++i) h += ",err_" + std::to_string(i);
    h += ",latched,markers,breakthrough";
    return h;
  }

  std::size_t columns() const { return 2 + dof + vfis + 1 + branches + 3; }
};

inline TraceLayout layout_of(const Scenario& s) {
  const RobotSystem system = s.system();
  return {system.total_dof(), s.vfis.size(), system.branch_count()};
}

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

inline std::optional<QpStatus> parse_status(std::string_view s) {
  for (QpStatus st : {QpStatus::Optimal, QpStatus::Infeasible, QpStatus::MaxIter}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

}  // namespace detail

class TraceWriter {
 public:
  TraceWriter(std::ostream& out, TraceLayout layout) : out_(out), layout_(layout) {
    out_ << kTraceMagic << '\n' << layout_.header() << '\n';
  }

  void write(const TraceRecord& r) {
    if (static_cast<std::size_t>(r.q.size()) != layout_.dof || r.vfi.size() != layout_.vfis ||
        r.errors.size() != layout_.branches) {
      throw Error(ErrorCode::DimensionMismatch, "trace record does not match the trace layout");
    }
    std::string line = std::to_string(r.tick);
    line += ',';
    detail::append_double(line, r.t);
    for (Eigen::Index i = 0; i < r.q.size(); ++i) {
      line += ',';
      detail::append_double(line, r.q[i]);
    }
    for (double d : r.vfi) {
      line += ',';
      detail::append_double(line, d);
    }
    line += ',';
    line += to_string(r.status);
    for (double e : r.errors) {
      line += ',';
      detail::append_double(line, e);
    }
    line += r.latched ? ",1," : ",0,";
    line += std::to_string(r.markers);
    line += r.breakthrough ? ",1\n" : ",0\n";
    out_ << line;
  }

 private:
  std::ostream& out_;
  TraceLayout layout_;
};

struct Trace {
  TraceLayout layout;
  std::vector<TraceRecord> records;
};

inline Trace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceMagic) {
    throw Error(ErrorCode::SchemaMismatch, "missing '" + std::string(kTraceMagic) + "' line", 1);
  }
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaMismatch, "missing header", 2);

  Trace trace;
  std::size_t dof = 0, vfis = 0, branches = 0;
  for (const auto col : detail::split_csv(line)) {
    if (col.starts_with("q_")) ++dof;
    if (col.starts_with("vfi_")) ++vfis;
    if (col.starts_with("err_")) ++branches;
  }
  trace.layout = {dof, vfis, branches};
  if (trace.layout.header() != line) throw Error(ErrorCode::SchemaMismatch, "unexpected header", 2);

  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = detail::split_csv(line);
    const auto corrupt = [&](const std::string& why) { return Error(ErrorCode::CorruptRow, why, line_no); };
    if (cols.size() != trace.layout.columns()) {
      throw corrupt("expected " + std::to_string(trace.layout.columns()) + " columns, got " +
                    std::to_string(cols.size()));
    }
    TraceRecord r;
    std::size_t c = 0;
    const auto number = [&](auto& out) {
      if (!detail::parse_number(cols[c], out)) throw corrupt("bad value '" + std::string(cols[c]) + "'");
      ++c;
    };
    number(r.tick);
    number(r.t);
    r.q.resize(static_cast<Eigen::Index>(dof));
    for (std::size_t i = 0; i < dof; ++i) number(r.q[static_cast<Eigen::Index>(i)]);
    r.vfi.resize(vfis);
    for (auto& d : r.vfi) number(d);
    const auto status = detail::parse_status(cols[c]);
    if (!status) throw corrupt("bad status '" + std::string(cols[c]) + "'");
    r.status = *status;
    ++c;
    r.errors.resize(branches);
    for (auto& e : r.errors) number(e);
    int latched = 0, broke = 0;
    number(latched);
    number(r.markers);
    number(broke);
    if ((latched != 0 && latched != 1) || (broke != 0 && broke != 1)) throw corrupt("flags must be 0 or 1");
    r.latched = latched == 1;
    r.breakthrough = broke == 1;
    trace.records.push_back(std::move(r));
  }
  return trace;
}

inline Trace read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return read_trace(in);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message(), e.line());
  }
}

struct TraceDiff {
  bool identical = true;
  std::optional<std::size_t> first_tick;  // first record that differs
  double max_abs = 0.0;                   // over numeric columns present in both
  std::string reason;
};

inline TraceDiff diff(const Trace& a, const Trace& b) {
  TraceDiff d;
  if (a.layout.header() != b.layout.header()) {
    d.identical = false;
    d.first_tick = 0;
    d.reason = "layouts differ";
    return d;
  }
  const auto mark = [&](std::size_t tick, const char* why) {
    if (d.identical) {
      d.identical = false;
      d.first_tick = tick;
      d.reason = why;
    }
  };
  const auto widen = [&](double x, double y) {
    const double e = std::abs(x - y);
    d.max_abs = std::max(d.max_abs, std::isnan(e) ? std::numeric_limits<double>::infinity() : e);
  };
  const std::size_t n = std::min(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto& x = a.records[k];
    const auto& y = b.records[k];
    const double before = d.max_abs;
    widen(x.t, y.t);
    for (Eigen::Index i = 0; i < x.q.size(); ++i) widen(x.q[i], y.q[i]);
    for (std::size_t i = 0; i < x.vfi.size(); ++i) widen(x.vfi[i], y.vfi[i]);
    for (std::size_t i = 0; i < x.errors.size(); ++i) widen(x.errors[i], y.errors[i]);
    const bool same_numbers = x.t == y.t && x.q == y.q && x.vfi == y.vfi && x.errors == y.errors;
    if (!same_numbers || d.max_abs != before) mark(x.tick, "values differ");
    if (x.tick != y.tick || x.status != y.status || x.latched != y.latched || x.markers != y.markers ||
        x.breakthrough != y.breakthrough) {
      mark(x.tick, "discrete columns differ");
    }
  }
  if (a.records.size() != b.records.size()) mark(n, "record counts differ");
  return d;
}

/// Hands every record to `sink`, paced so that record k is delivered at
/// wall time t_k / speed after the start. speed <= 0 disables pacing.
template <typename Sink>
void replay(const Trace& trace, double speed, Sink&& sink) {
  const auto start = std::chrono::steady_clock::now();
  const double t0 = trace.records.empty() ? 0.0 : trace.records.front().t;
  for (const auto& r : trace.records) {
    if (speed > 0.0) {
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>((r.t - t0) / speed)));
    }
    sink(r);
  }
}

/// Marker point list: x,y,z,tier,tick.
inline void write_markers(std::ostream& out, const std::vector<Marker>& markers) {
  out << "x,y,z,tier,tick\n";
  for (const auto& m : markers) {
    std::string line;
    for (int i = 0; i < 3; ++i) {
      detail::append_double(line, m.position[i]);
      line += ',';
    }
    line += std::to_string(m.tier) + ',' + std::to_string(m.tick) + '\n';
    out << line;
  }
}

}  // namespace railkit
