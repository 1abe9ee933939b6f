#pragma once

// Dense strictly convex QP:  min 1/2 u'Hu + f'u  s.t.  Au <= b.
//
// Solved with the dual active-set method of Goldfarb and Idnani. It starts at
// the unconstrained minimizer and adds violated constraints one at a time,
// dropping active constraints whose multipliers would turn negative. Because
// the dual stays feasible throughout, an empty step set while a constraint is
// still violated proves the primal problem infeasible.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "railkit/error.hpp"

namespace railkit {

struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

enum class QpStatus { Optimal, Infeasible, MaxIter };

constexpr std::string_view to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIter: return "max_iter";
  }
  return "?";
}

struct QpSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd multipliers;  // one per row of A, >= 0
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  std::vector<int> active;
};

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
};

inline KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
  const auto n = p.H.rows();
  const auto m = p.A.rows();
  if (s.u.size() != n || s.multipliers.size() != m || p.f.size() != n || p.b.size() != m ||
      (m > 0 && p.A.cols() != n)) {
    throw Error(ErrorCode::DimensionMismatch, "kkt_residuals: inconsistent sizes");
  }
  KktResiduals r;
  Eigen::VectorXd grad = p.H * s.u + p.f;
  if (m > 0) grad += p.A.transpose() * s.multipliers;
  r.stationarity = n > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (m > 0) {
    const Eigen::VectorXd slack = p.A * s.u - p.b;
    r.primal = std::max(0.0, slack.maxCoeff());
    r.complementarity = s.multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff();
  }
  return r;
}

struct QpOptions {
  int max_iterations = 200;
  /// A row counts as violated when a'u - b exceeds this times (1 + |b|).
  double feasibility_tolerance = 1e-11;
};

class QpSolver {
 public:
  explicit QpSolver(QpOptions options = {}) : options_(options) {}

  QpSolution solve(const QpProblem& p) {
    check(p);
    const Eigen::Index m = p.A.rows();

    llt_.compute(p.H);
    if (llt_.info() != Eigen::Success) {
      throw Error(ErrorCode::NotPositiveDefinite, "Cholesky factorization of H failed");
    }

    QpSolution sol;
    sol.u = -llt_.solve(p.f);
    sol.multipliers = Eigen::VectorXd::Zero(m);
    active_.clear();
    lambda_.clear();
    if (m == 0) return sol;

    int iterations = 0;
    while (true) {
      const int p_idx = most_violated(p, sol.u);
      if (p_idx < 0) break;

      // Normal in the ">=" convention used by the method: -a_p' u >= -b_p.
      const Eigen::VectorXd np = -p.A.row(p_idx).transpose();
      double lambda_p = 0.0;
      bool added = false;
      while (!added) {
        if (iterations >= options_.max_iterations) {
          finish(p, sol, iterations, QpStatus::MaxIter);
          return sol;
        }
        ++iterations;

        Eigen::VectorXd z;
        Eigen::VectorXd r;
        step_direction(p, np, z, r);

        // Largest dual step before an active multiplier hits zero.
        double t1 = std::numeric_limits<double>::infinity();
        std::size_t block = 0;
        for (std::size_t k = 0; k < active_.size(); ++k) {
          if (r[static_cast<Eigen::Index>(k)] > 0.0) {
            const double t = lambda_[k] / r[static_cast<Eigen::Index>(k)];
            if (t < t1) {
              t1 = t;
              block = k;
            }
          }
        }

        const double curvature = z.dot(np);
        const double reference = np.dot(llt_.solve(np));
        const bool dependent = !(curvature > 1e-14 * std::max(reference, 1e-300));
        const double violation = np.dot(sol.u) + p.b[p_idx];  // < 0 while violated

        if (dependent) {
          if (!std::isfinite(t1)) {
            finish(p, sol, iterations, QpStatus::Infeasible);
            return sol;
          }
          for (std::size_t k = 0; k < active_.size(); ++k) lambda_[k] -= t1 * r[static_cast<Eigen::Index>(k)];
          lambda_p += t1;
          drop(block);
          continue;
        }

        const double t2 = -violation / curvature;
        const double t = std::min(t1, t2);
        sol.u += t * z;
        for (std::size_t k = 0; k < active_.size(); ++k) lambda_[k] -= t * r[static_cast<Eigen::Index>(k)];
        lambda_p += t;
        if (t2 <= t1) {
          active_.push_back(p_idx);
          lambda_.push_back(lambda_p);
          added = true;
        } else {
          drop(block);
        }
      }
    }

    polish(p, sol);
    finish(p, sol, iterations, QpStatus::Optimal);
    return sol;
  }

  const QpOptions& options() const { return options_; }

 private:
  static void check(const QpProblem& p) {
    const Eigen::Index n = p.H.rows();
    if (p.H.cols() != n || p.f.size() != n || p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != n)) {
      throw Error(ErrorCode::DimensionMismatch, "QP blocks have inconsistent sizes");
    }
    const double scale = std::max(1.0, n > 0 ? p.H.cwiseAbs().maxCoeff() : 1.0);
    if (n > 0 && (p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw Error(ErrorCode::NotPositiveDefinite, "H is not symmetric");
    }
  }

  int most_violated(const QpProblem& p, const Eigen::VectorXd& u) const {
    int worst = -1;
    double worst_value = 0.0;
    const Eigen::VectorXd excess = p.A * u - p.b;
    for (Eigen::Index j = 0; j < excess.size(); ++j) {
      if (std::find(active_.begin(), active_.end(), static_cast<int>(j)) != active_.end()) continue;
      const double tol = options_.feasibility_tolerance * (1.0 + std::abs(p.b[j]));
      if (excess[j] > tol && excess[j] > worst_value) {
        worst_value = excess[j];
        worst = static_cast<int>(j);
      }
    }
    return worst;
  }

  Eigen::MatrixXd active_normals(const QpProblem& p) const {
    Eigen::MatrixXd normals(p.H.rows(), static_cast<Eigen::Index>(active_.size()));
    for (std::size_t k = 0; k < active_.size(); ++k) {
      normals.col(static_cast<Eigen::Index>(k)) = -p.A.row(active_[k]).transpose();
    }
    return normals;
  }

  // z: primal direction, r: rate at which active multipliers decrease.
  void step_direction(const QpProblem& p, const Eigen::VectorXd& np, Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    const Eigen::VectorXd hinv_np = llt_.solve(np);
    if (active_.empty()) {
      z = hinv_np;
      r.resize(0);
      return;
    }
    const Eigen::MatrixXd normals = active_normals(p);
    const Eigen::MatrixXd hinv_normals = llt_.solve(normals);
    const Eigen::MatrixXd gram = normals.transpose() * hinv_normals;
    r = gram.ldlt().solve(normals.transpose() * hinv_np);
    z = hinv_np - hinv_normals * r;
  }

  void drop(std::size_t k) {
    active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(k));
    lambda_.erase(lambda_.begin() + static_cast<std::ptrdiff_t>(k));
  }

  // Re-solve the equality-constrained problem on the final active set to wipe
  // out drift accumulated over the incremental updates.
  void polish(const QpProblem& p, QpSolution& sol) {
    if (active_.empty()) {
      sol.u = -llt_.solve(p.f);
      return;
    }
    const Eigen::MatrixXd normals = active_normals(p);
    const Eigen::MatrixXd hinv_normals = llt_.solve(normals);
    const Eigen::MatrixXd gram = normals.transpose() * hinv_normals;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(active_.size()));
    for (std::size_t k = 0; k < active_.size(); ++k) rhs[static_cast<Eigen::Index>(k)] = -p.b[active_[k]];
    const Eigen::VectorXd hinv_f = llt_.solve(p.f);
    const Eigen::VectorXd lambda = gram.ldlt().solve(rhs + normals.transpose() * hinv_f);
    if (!lambda.allFinite() || lambda.minCoeff() < 0.0) return;
    sol.u = hinv_normals * lambda - hinv_f;
    for (std::size_t k = 0; k < active_.size(); ++k) lambda_[k] = lambda[static_cast<Eigen::Index>(k)];
  }

  void finish(const QpProblem& p, QpSolution& sol, int iterations, QpStatus status) const {
    sol.status = status;
    sol.iterations = iterations;
    sol.multipliers = Eigen::VectorXd::Zero(p.A.rows());
    sol.active = active_;
    for (std::size_t k = 0; k < active_.size(); ++k) sol.multipliers[active_[k]] = lambda_[k];
  }

  QpOptions options_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::vector<int> active_;
  std::vector<double> lambda_;
};

inline QpSolution solve(const QpProblem& p, QpOptions options = {}) { return QpSolver(options).solve(p); }

/// Plain-text dump of a problem, for offline debugging:
///   railkit-qp 1
///   H <n> <n>      followed by n rows
///   f <n>          followed by one row
///   A <m> <n>      followed by m rows
///   b <m>          followed by one row
inline void write_dump(std::ostream& out, const QpProblem& p) {
  auto rows = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
      out << '\n';
    }
  };
  const auto old_precision = out.precision(17);
  out << "railkit-qp 1\n";
  out << "H " << p.H.rows() << ' ' << p.H.cols() << '\n';
  rows(p.H);
  out << "f " << p.f.size() << '\n';
  rows(p.f.transpose());
  out << "A " << p.A.rows() << ' ' << p.A.cols() << '\n';
  rows(p.A);
  out << "b " << p.b.size() << '\n';
  rows(p.b.transpose());
  out.precision(old_precision);
}

inline QpProblem read_dump(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) {
      throw Error(ErrorCode::ParseError, "qp dump: expected '" + word + "', got '" + got + "'");
    }
  };
  auto read_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(in >> m(i, j))) throw Error(ErrorCode::ParseError, "qp dump: truncated matrix");
    return m;
  };
  expect("railkit-qp");
  expect("1");
  QpProblem p;
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  expect("H");
  in >> r >> c;
  p.H = read_matrix(r, c);
  expect("f");
  in >> r;
  p.f = read_matrix(r, 1);
  expect("A");
  in >> r >> c;
  p.A = read_matrix(r, c);
  expect("b");
  in >> r;
  p.b = read_matrix(r, 1);
  return p;
}

}  // namespace railkit
