#pragma once

// Byzantine worker placement and attack models. Attacks rewrite the outputs
// of Byzantine workers after honest computation and before filtering.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "detox/config.hpp"
#include "detox/core.hpp"
#include "detox/rng.hpp"
#include "detox/types.hpp"

namespace detox {

// Returns the sorted ids of the q Byzantine workers.
//
// random_fixed: a uniform q-subset of the workers.
// adversarial_grouped: whole blocks of (r+1)/2 attackers are packed into
// floor(q / ((r+1)/2)) groups (chosen at random) so each of those groups is
// majority-controlled; the remainder goes into one further group where it
// stays a minority. This is the worst case for the filtering stage and is
// not part of the random-placement model.
inline std::vector<int> place_byzantine(int p, int q, const NodeGroupPartition& partition,
                                        Placement placement, RngStream& rng) {
  if (q < 0 || 2 * q >= p) throw ByzantineRatioError("need 0 <= q < p/2");
  std::vector<int> out;
  if (q == 0) return out;

  if (placement == Placement::random_fixed) {
    std::vector<int> ids(static_cast<std::size_t>(p));
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = 0; i < q; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) +
                            rng.uniform_index(static_cast<std::size_t>(p - i));
      std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    out.assign(ids.begin(), ids.begin() + q);
  } else {
    const int r = partition.group_size();
    const int need = (r + 1) / 2;
    std::vector<int> order(static_cast<std::size_t>(partition.group_count()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    int left = q;
    for (int g : order) {
      if (left == 0) break;
      const int take = std::min(left, need);
      const auto& members = partition.groups[static_cast<std::size_t>(g)];
      out.insert(out.end(), members.begin(), members.begin() + take);
      left -= take;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<bool> byzantine_mask(int p, std::span<const int> ids) {
  std::vector<bool> mask(static_cast<std::size_t>(p), false);
  for (int i : ids) mask[static_cast<std::size_t>(i)] = true;
  return mask;
}

// Applies the attack to a copy of `honest_outputs` (indexed by worker id; the
// entry of a Byzantine worker is the gradient it was assigned). Byzantine
// workers sharing a group always emit identical vectors.
inline std::vector<GradVec> apply_attack(const AttackSpec& attack,
                                         std::span<const GradVec> honest_outputs,
                                         const std::vector<bool>& byzantine,
                                         const NodeGroupPartition& partition) {
  std::vector<GradVec> out(honest_outputs.begin(), honest_outputs.end());
  if (attack.kind == AttackKind::none || honest_outputs.empty()) return out;
  const std::size_t d = honest_outputs.front().size();

  switch (attack.kind) {
    case AttackKind::none: break;

    case AttackKind::reverse_gradient:
      for (std::size_t i = 0; i < out.size(); ++i)
        if (byzantine[i]) out[i] = scaled(honest_outputs[i], -attack.c);
      break;

    case AttackKind::constant:
      for (std::size_t i = 0; i < out.size(); ++i)
        if (byzantine[i]) out[i] = GradVec(d, attack.value);
      break;

    case AttackKind::alie: {
      // One gradient per observed group: every worker of a group holds the same g_j.
      std::vector<const GradVec*> pooled;
      for (std::size_t g = 0; g < partition.groups.size(); ++g) {
        const auto& members = partition.groups[g];
        const bool seen = attack.alie_scope == AlieScope::all ||
                          std::any_of(members.begin(), members.end(),
                                      [&](int w) { return byzantine[static_cast<std::size_t>(w)]; });
        if (seen) pooled.push_back(&honest_outputs[static_cast<std::size_t>(members.front())]);
      }
      if (pooled.empty()) break;
      const double n = static_cast<double>(pooled.size());
      GradVec mu(d, 0.0), var(d, 0.0);
      for (const auto* v : pooled)
        for (std::size_t c = 0; c < d; ++c) mu[c] += (*v)[c];
      for (auto& m : mu) m /= n;
      for (const auto* v : pooled)
        for (std::size_t c = 0; c < d; ++c) {
          const double t = (*v)[c] - mu[c];
          var[c] += t * t;
        }
      GradVec sent(d);
      for (std::size_t c = 0; c < d; ++c) sent[c] = mu[c] + attack.z * std::sqrt(var[c] / n);
      for (std::size_t i = 0; i < out.size(); ++i)
        if (byzantine[i]) out[i] = sent;
      break;
    }
  }
  return out;
}

}  // namespace detox
