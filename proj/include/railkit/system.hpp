#pragma once

#include <numeric>
#include <vector>

#include "railkit/chain.hpp"

namespace railkit {

/// All branches of the platform. Branch joint vectors are stacked in branch
/// order to form the system joint vector.
struct RobotSystem {
  std::vector<CompositeChain> branches;

  std::size_t branch_count() const { return branches.size(); }

  std::size_t total_dof() const {
    return std::accumulate(branches.begin(), branches.end(), std::size_t{0},
                           [](std::size_t acc, const CompositeChain& c) { return acc + c.dof(); });
  }

  std::size_t offset(std::size_t branch) const {
    std::size_t off = 0;
    for (std::size_t b = 0; b < branch; ++b) off += branches.at(b).dof();
    return off;
  }

  const CompositeChain& branch(std::size_t b) const {
    if (b >= branches.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "branch " + std::to_string(b) + " of " +
                                                  std::to_string(branches.size()));
    }
    return branches[b];
  }

  VecX stack(const std::vector<VecX>& per_branch) const {
    if (per_branch.size() != branches.size()) {
      throw Error(ErrorCode::DimensionMismatch, "expected one joint vector per branch");
    }
    VecX q(static_cast<Eigen::Index>(total_dof()));
    Eigen::Index off = 0;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      if (static_cast<std::size_t>(per_branch[b].size()) != branches[b].dof()) {
        throw Error(ErrorCode::DimensionMismatch, "branch " + std::to_string(b) + " joint vector size");
      }
      q.segment(off, per_branch[b].size()) = per_branch[b];
      off += per_branch[b].size();
    }
    return q;
  }

  std::vector<VecX> split(const VecX& q) const {
    if (static_cast<std::size_t>(q.size()) != total_dof()) {
      throw Error(ErrorCode::DimensionMismatch, "system joint vector size");
    }
    std::vector<VecX> out;
    Eigen::Index off = 0;
    for (const auto& c : branches) {
      const auto n = static_cast<Eigen::Index>(c.dof());
      out.emplace_back(q.segment(off, n));
      off += n;
    }
    return out;
  }
};

}  // namespace railkit
