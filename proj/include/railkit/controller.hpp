#pragma once

// Centralized kinematic controller. Each tick solves
//
//   min_u  sum_i F_i(q_i, x_d,i)   s.t.  W_s u <= w_s,  W_p u <= w_p
//
// over the stacked joint velocities of every branch, with the per-branch
// pose-tracking objective
//
//   F_i(u_i) = || N_i u_i + eta e_i ||^2 + lambda^2 || u_i ||^2,
//   e_i = vec8(x_i conj(x_d,i) - 1),   N_i = d vec8(x_i conj(x_d,i)) / d q_i.

#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "railkit/chain.hpp"
#include "railkit/qp.hpp"
#include "railkit/system.hpp"
#include "railkit/vfi.hpp"

namespace railkit {

struct ControlTask {
  std::size_t branch = 0;
  Pose target = Pose::identity();
  double gain = 10.0;     // 1/s
  double damping = 0.05;  // dimensionless
};

struct ControllerConfig {
  double dt = 0.004;  // s
  double task_gain = 10.0;
  double damping = 0.05;
  ConstraintGains constraint_gains;
  QpOptions qp;
  /// Positive factor applied to every H_i and f_i; does not move the minimizer.
  double objective_scale = 1.0;
};

struct TaskObjective {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Vec8 error = Vec8::Zero();
};

/// Chooses between x_d and -x_d (same pose) so that the error is measured
/// along the short path.
inline Pose nearest_cover(const Pose& current, const Pose& target) {
  const Pose z = current * conj(target);
  return z.primary.w < 0.0 ? -target : target;
}

inline Vec8 pose_error(const Pose& current, const Pose& target) {
  Vec8 e = to_vec8(current * conj(nearest_cover(current, target)));
  e[0] -= 1.0;
  return e;
}

template <KinematicChain C>
TaskObjective task_objective(const C& chain, const VecX& q, const ControlTask& task) {
  if (!is_unit(task.target)) {
    throw Error(ErrorCode::NonUnitTarget, "target of branch " + std::to_string(task.branch) + " is not a unit pose");
  }
  const Pose x = fk(chain, q);
  const Pose target = nearest_cover(x, task.target);
  const Pose target_conj = conj(target);
  Vec8 e = to_vec8(x * target_conj);
  e[0] -= 1.0;
  const Eigen::Matrix<double, 8, Eigen::Dynamic> n = hamilton_minus(target_conj) * pose_jacobian(chain, q);
  const auto dof = static_cast<Eigen::Index>(chain.dof());
  TaskObjective out;
  out.H = 2.0 * (n.transpose() * n + task.damping * task.damping * Eigen::MatrixXd::Identity(dof, dof));
  out.f = 2.0 * task.gain * n.transpose() * e;
  out.error = e;
  return out;
}

struct ControlOutput {
  Eigen::VectorXd u;
  std::vector<double> error_norms;
  std::vector<double> vfi_distance;
  double min_vfi_distance = std::numeric_limits<double>::infinity();
  QpStatus status = QpStatus::Optimal;
  int qp_iterations = 0;
};

class CentralizedController {
 public:
  explicit CentralizedController(ControllerConfig config = {}) : config_(config), solver_(config.qp) {}

  const ControllerConfig& config() const { return config_; }

  ControlTask hold_task(const RobotSystem& system, const std::vector<VecX>& qs, std::size_t b) const {
    return {b, fk(system.branches[b], qs[b]), config_.task_gain, config_.damping};
  }

  /// Assembles the QP for one tick. `tasks` has one optional entry per branch;
  /// branches without a task hold their current pose.
  QpProblem build_problem(const RobotSystem& system, const VecX& q, const std::vector<std::optional<ControlTask>>& tasks,
                          const ConstraintSet& constraints, std::vector<double>* error_norms = nullptr) const {
    if (tasks.size() != system.branch_count()) {
      throw Error(ErrorCode::DimensionMismatch, "expected one task slot per branch");
    }
    const auto total = static_cast<Eigen::Index>(system.total_dof());
    const auto qs = system.split(q);
    QpProblem p;
    p.H = Eigen::MatrixXd::Zero(total, total);
    p.f = Eigen::VectorXd::Zero(total);
    if (error_norms) error_norms->assign(system.branch_count(), 0.0);
    for (std::size_t b = 0; b < system.branch_count(); ++b) {
      const ControlTask task = tasks[b] ? *tasks[b] : hold_task(system, qs, b);
      const TaskObjective obj = task_objective(system.branches[b], qs[b], task);
      const auto off = static_cast<Eigen::Index>(system.offset(b));
      const auto n = static_cast<Eigen::Index>(system.branches[b].dof());
      p.H.block(off, off, n, n) = config_.objective_scale * obj.H;
      p.f.segment(off, n) = config_.objective_scale * obj.f;
      if (error_norms) (*error_norms)[b] = obj.error.norm();
    }
    const auto ms = constraints.Ws.rows();
    const auto mp = constraints.Wp.rows();
    p.A.resize(ms + mp, total);
    p.b.resize(ms + mp);
    if (ms > 0) {
      p.A.topRows(ms) = constraints.Ws;
      p.b.head(ms) = constraints.ws;
    }
    if (mp > 0) {
      p.A.bottomRows(mp) = constraints.Wp;
      p.b.tail(mp) = constraints.wp;
    }
    return p;
  }

  ControlOutput step(const RobotSystem& system, const VecX& q, const std::vector<std::optional<ControlTask>>& tasks,
                     const ConstraintSet& constraints) {
    ControlOutput out;
    const QpProblem p = build_problem(system, q, tasks, constraints, &out.error_norms);
    const QpSolution s = solver_.solve(p);
    out.status = s.status;
    out.qp_iterations = s.iterations;
    // Anything but an optimal solution freezes the platform for this tick.
    out.u = s.status == QpStatus::Optimal ? s.u : Eigen::VectorXd::Zero(p.H.rows());
    out.vfi_distance = constraints.vfi_distance;
    for (double d : constraints.vfi_distance) out.min_vfi_distance = std::min(out.min_vfi_distance, d);
    return out;
  }

 private:
  ControllerConfig config_;
  QpSolver solver_;
};

inline ControlOutput control_step(const RobotSystem& system, const VecX& q,
                                  const std::vector<std::optional<ControlTask>>& tasks,
                                  const ConstraintSet& constraints, const ControllerConfig& config = {}) {
  CentralizedController controller(config);
  return controller.step(system, q, tasks, constraints);
}

/// q_next = clamp(q + u dt), per branch limits.
inline VecX integrate_step(const RobotSystem& system, const VecX& q, const VecX& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be positive");
  if (q.size() != u.size()) throw Error(ErrorCode::DimensionMismatch, "integrate_step: q and u sizes differ");
  const VecX next = q + u * dt;
  auto parts = system.split(next);
  for (std::size_t b = 0; b < parts.size(); ++b) parts[b] = clamp_joints(system.branches[b], parts[b]);
  return system.stack(parts);
}

}  // namespace railkit
