#pragma once

#include <cstddef>
#include <vector>

#include "detox/core.hpp"

namespace detox {

// Fixed split of workers {0..p-1} into p/r node groups of r workers each.
// Worker ids inside a group are ascending.
struct NodeGroupPartition {
  std::vector<std::vector<int>> groups;
  std::vector<int> group_of;  // worker id -> group index

  int workers() const { return static_cast<int>(group_of.size()); }
  int group_count() const { return static_cast<int>(groups.size()); }
  int group_size() const { return groups.empty() ? 0 : static_cast<int>(groups.front().size()); }

  friend bool operator==(const NodeGroupPartition&, const NodeGroupPartition&) = default;
};

// Filtered votes of one iteration. honest_mask is ground truth and is only
// meaningful in simulation.
struct VoteSet {
  std::vector<GradVec> votes;
  std::vector<bool> honest_mask;
  std::vector<bool> no_majority_mask;

  int q_hat() const {
    int n = 0;
    for (bool h : honest_mask) n += !h;
    return n;
  }
  int p_hat() const { return static_cast<int>(votes.size()); }
};

struct FilterStats {
  int q_hat = 0;
  int p_hat = 0;
  double epsilon_hat = 0.0;
  double delta_inexact = 0.0;  // |G_hat - G|; NaN when no true gradient was supplied

  friend bool operator==(const FilterStats&, const FilterStats&) = default;
};

}  // namespace detox
