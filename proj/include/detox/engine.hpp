#pragma once

// The DETOX pipeline: node grouping, batch assignment, majority-vote
// filtering and hierarchical aggregation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "detox/adversary.hpp"
#include "detox/aggregators.hpp"
#include "detox/config.hpp"
#include "detox/core.hpp"
#include "detox/rng.hpp"
#include "detox/types.hpp"

namespace detox {

struct Assignment {
  NodeGroupPartition partition;
  std::vector<std::vector<std::size_t>> sample_groups;  // S_j, ascending sample index
};

inline NodeGroupPartition partition_nodes(int p, int r, RngStream& rng) {
  if (r < 1 || r % 2 == 0) throw ParityError("r must be a positive odd integer");
  if (p < 1 || p % r != 0)
    throw DivisibilityError("r=" + std::to_string(r) + " does not divide p=" + std::to_string(p));
  std::vector<int> perm(static_cast<std::size_t>(p));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  NodeGroupPartition out;
  out.group_of.assign(static_cast<std::size_t>(p), -1);
  const int groups = p / r;
  out.groups.resize(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    auto& members = out.groups[static_cast<std::size_t>(g)];
    members.assign(perm.begin() + g * r, perm.begin() + (g + 1) * r);
    std::sort(members.begin(), members.end());
    for (int w : members) out.group_of[static_cast<std::size_t>(w)] = g;
  }
  return out;
}

// Splits the batch into p/r random sample groups of r*b/p indices.
inline Assignment assign_batch(std::span<const std::size_t> batch,
                               const NodeGroupPartition& partition, RngStream& rng) {
  const std::size_t p = static_cast<std::size_t>(partition.workers());
  const std::size_t b = batch.size();
  if (p == 0 || b % p != 0)
    throw DivisibilityError("p=" + std::to_string(p) + " does not divide b=" + std::to_string(b));
  const std::size_t groups = static_cast<std::size_t>(partition.group_count());
  const std::size_t size = b / groups;

  std::vector<std::size_t> shuffled(batch.begin(), batch.end());
  rng.shuffle(shuffled);
  Assignment out{partition, {}};
  out.sample_groups.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    auto& s = out.sample_groups[g];
    s.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(g * size),
             shuffled.begin() + static_cast<std::ptrdiff_t>((g + 1) * size));
    std::sort(s.begin(), s.end());
  }
  return out;
}

// Uniform size-b subset of {0..n-1} (no repeats), in draw order.
inline std::vector<std::size_t> draw_batch(std::size_t n, std::size_t b, RngStream& rng) {
  if (b > n) throw BadParameter("batch larger than dataset");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  idx.resize(b);
  return idx;
}

// ---------------------------------------------------------------------------
// filtering
// ---------------------------------------------------------------------------

inline bool bitwise_equal(const GradVec& a, const GradVec& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline std::uint64_t bitwise_hash(const GradVec& v) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h = rng_detail::mix64(h ^ bits);
  }
  return h;
}

struct MajorityResult {
  GradVec vote;
  bool had_majority = false;
};

// Strict majority over bit-identical vectors; the zero vector otherwise.
inline MajorityResult majority_vote(std::span<const GradVec> outputs) {
  const std::size_t d = common_dim(outputs);
  const std::size_t n = outputs.size();
  std::vector<std::uint64_t> hashes(n);
  for (std::size_t i = 0; i < n; ++i) hashes[i] = bitwise_hash(outputs[i]);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j)
      count += hashes[i] == hashes[j] && bitwise_equal(outputs[i], outputs[j]);
    if (2 * count > n) return {outputs[i], true};
    // Anything that can still win must appear later; stop once impossible.
    if (2 * (n - i - 1) <= n) break;
  }
  return {GradVec(d, 0.0), false};
}

// Votes z_j over each node group. `honest_by_group[j]` is the true g_j used to
// label votes; a vote is honest iff it is bit-identical to it.
inline VoteSet filter_votes(std::span<const GradVec> all_outputs,
                            const NodeGroupPartition& partition,
                            std::span<const GradVec> honest_by_group) {
  if (all_outputs.size() != static_cast<std::size_t>(partition.workers()))
    throw DimensionMismatch("expected one output per worker");
  if (honest_by_group.size() != partition.groups.size())
    throw DimensionMismatch("expected one ground-truth gradient per group");
  common_dim(all_outputs);

  VoteSet vs;
  const std::size_t groups = partition.groups.size();
  vs.votes.reserve(groups);
  vs.honest_mask.resize(groups);
  vs.no_majority_mask.resize(groups);
  std::vector<GradVec> members;
  for (std::size_t g = 0; g < groups; ++g) {
    members.clear();
    for (int w : partition.groups[g]) members.push_back(all_outputs[static_cast<std::size_t>(w)]);
    auto mv = majority_vote(members);
    vs.no_majority_mask[g] = !mv.had_majority;
    vs.honest_mask[g] = bitwise_equal(mv.vote, honest_by_group[g]);
    vs.votes.push_back(std::move(mv.vote));
  }
  return vs;
}

// ---------------------------------------------------------------------------
// hierarchical aggregation
// ---------------------------------------------------------------------------

// Random split of the votes into groups of k, agg0 inside each group, agg1
// across the group results. Votes inside a group keep ascending index order.
inline GradVec hier_aggr(std::span<const GradVec> votes, int k, const AggregatorSpec& agg0,
                         const AggregatorSpec& agg1, RngStream& rng) {
  common_dim(votes);
  const std::size_t n = votes.size();
  if (k < 1 || n % static_cast<std::size_t>(k) != 0)
    throw DivisibilityError("k=" + std::to_string(k) + " does not divide the vote count " +
                            std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<GradVec> group_results;
  group_results.reserve(n / kk);
  std::vector<GradVec> group;
  for (std::size_t g = 0; g < n / kk; ++g) {
    std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(g * kk),
                                 order.begin() + static_cast<std::ptrdiff_t>((g + 1) * kk));
    std::sort(ids.begin(), ids.end());
    group.clear();
    for (auto i : ids) group.push_back(votes[i]);
    group_results.push_back(aggregate(agg0, group));
  }
  return aggregate(agg1, group_results);
}

inline GradVec hier_aggr(const VoteSet& votes, int k, const AggregatorSpec& agg0,
                         const AggregatorSpec& agg1, RngStream& rng) {
  return hier_aggr(std::span<const GradVec>(votes.votes), k, agg0, agg1, rng);
}

// ---------------------------------------------------------------------------
// one DETOX iteration
// ---------------------------------------------------------------------------

struct StepResult {
  GradVec model;
  GradVec aggregate;  // G_hat
  FilterStats stats;
  std::vector<std::size_t> batch;  // S_t in draw order
  double aggregation_seconds = 0.0;  // filtering + hier_aggr wall-clock
};

// Runs draw -> assign -> compute -> attack -> filter -> hier_aggr -> update.
//
// `worker_fn(model, samples)` must return the mean gradient over `samples`
// summed in the given (ascending) order; it is called once per worker, so
// replicas agree only if it is deterministic. `byzantine` flags worker ids.
// `step_rng` should be unique to this iteration. When `true_gradient` is given
// stats.delta_inexact records |G_hat - G|.
template <typename WorkerFn>
StepResult detox_step(const GradVec& model, const DetoxConfig& cfg,
                      const NodeGroupPartition& partition, const std::vector<bool>& byzantine,
                      WorkerFn&& worker_fn, std::size_t dataset_size, std::uint64_t t,
                      RngStream step_rng, const GradVec* true_gradient = nullptr) {
  RngStream batch_rng = step_rng.split("batch");
  RngStream assign_rng = step_rng.split("assign");
  RngStream hier_rng = step_rng.split("hier");

  StepResult res;
  res.batch = draw_batch(dataset_size, static_cast<std::size_t>(cfg.b), batch_rng);
  const Assignment asg = assign_batch(res.batch, partition, assign_rng);

  const std::size_t p = static_cast<std::size_t>(cfg.p);
  std::vector<GradVec> honest(p);
  for (std::size_t w = 0; w < p; ++w)
    honest[w] = worker_fn(model, std::span<const std::size_t>(
                                     asg.sample_groups[static_cast<std::size_t>(partition.group_of[w])]));
  std::vector<GradVec> truth_by_group(asg.sample_groups.size());
  for (std::size_t g = 0; g < truth_by_group.size(); ++g)
    truth_by_group[g] = honest[static_cast<std::size_t>(partition.groups[g].front())];

  const auto received = apply_attack(cfg.attack, honest, byzantine, partition);
  require_finite(received);

  const auto t0 = std::chrono::steady_clock::now();
  const VoteSet votes = filter_votes(received, partition, truth_by_group);
  res.aggregate = hier_aggr(votes, cfg.k, cfg.agg0, cfg.agg1, hier_rng);
  res.aggregation_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double eta = cfg.lr_schedule.at(t);
  res.model = model;
  for (std::size_t i = 0; i < res.model.size(); ++i) res.model[i] -= eta * res.aggregate[i];

  res.stats.q_hat = votes.q_hat();
  res.stats.p_hat = votes.p_hat();
  res.stats.epsilon_hat = static_cast<double>(res.stats.q_hat) / res.stats.p_hat;
  res.stats.delta_inexact = true_gradient ? distance(res.aggregate, *true_gradient)
                                          : std::numeric_limits<double>::quiet_NaN();
  return res;
}

}  // namespace detox
