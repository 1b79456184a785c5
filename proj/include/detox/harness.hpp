#pragma once

// End-to-end experiments on synthetic tasks: training runs, the robust
// mean-estimation benchmark, honest-vote variance and aggregation timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detox/adversary.hpp"
#include "detox/aggregators.hpp"
#include "detox/config.hpp"
#include "detox/engine.hpp"
#include "detox/rng.hpp"
#include "detox/tasks.hpp"

namespace detox {

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct IterationRecord {
  int t = 0;
  double loss = 0.0;          // F(w_{t+1})
  double delta = 0.0;         // |G_hat - G(w_t)|
  int q_hat = 0;
  double aggregation_seconds = 0.0;  // zero unless timing was requested
};

struct RunRecord {
  std::vector<IterationRecord> iterations;
  GradVec final_model;
  double initial_loss = 0.0;
  std::vector<int> byzantine;
  NodeGroupPartition partition;

  double final_loss() const { return iterations.empty() ? initial_loss : iterations.back().loss; }
};

struct RunOptions {
  bool time_aggregation = false;
};

// Plain mini-batch SGD: w - eta/|S| sum_{i in S} grad f_i(w), samples summed
// in ascending index order.
inline GradVec plain_sgd_step(const Task& task, const GradVec& w, std::span<const std::size_t> batch,
                              double eta) {
  std::vector<std::size_t> sorted(batch.begin(), batch.end());
  std::sort(sorted.begin(), sorted.end());
  const GradVec g = task.gradient_mean(w, sorted);
  GradVec out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta * g[i];
  return out;
}

// The partition, Byzantine set and per-step randomness all derive from
// cfg.seed, so identical (cfg, task) pairs give identical records. Vanilla
// (non-redundant) training is r = 1 with k = p and agg1 = mean.
inline RunRecord run_training(const DetoxConfig& cfg, const Task& task, RunOptions opts = {}) {
  validate_config(cfg);
  if (task.dim() != cfg.d) throw DimensionMismatch("task dimension differs from cfg.d");
  if (task.size() < static_cast<std::size_t>(cfg.b)) throw BadParameter("dataset smaller than batch");

  RngStream partition_rng = split_rng(cfg.seed, "partition");
  RngStream placement_rng = split_rng(cfg.seed, "placement");
  const RngStream step_root = split_rng(cfg.seed, "steps");

  RunRecord rec;
  rec.partition = partition_nodes(cfg.p, cfg.r, partition_rng);
  rec.byzantine = place_byzantine(cfg.p, cfg.q, rec.partition, cfg.attack.placement, placement_rng);
  const auto mask = byzantine_mask(cfg.p, rec.byzantine);

  auto worker = [&task](const GradVec& w, std::span<const std::size_t> s) {
    return task.gradient_mean(w, s);
  };

  GradVec w = task.initial_model();
  rec.initial_loss = task.loss(w);
  rec.iterations.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int t = 0; t < cfg.iterations; ++t) {
    const GradVec G = task.full_gradient(w);
    StepResult step = detox_step(w, cfg, rec.partition, mask, worker, task.size(),
                                 static_cast<std::uint64_t>(t), step_root.derive(static_cast<std::uint64_t>(t)), &G);
    w = std::move(step.model);
    IterationRecord it;
    it.t = t;
    it.loss = task.loss(w);
    it.delta = step.stats.delta_inexact;
    it.q_hat = step.stats.q_hat;
    if (opts.time_aggregation) it.aggregation_seconds = step.aggregation_seconds;
    rec.iterations.push_back(it);
  }
  rec.final_model = std::move(w);
  return rec;
}

// ---------------------------------------------------------------------------
// honest vote variance
// ---------------------------------------------------------------------------

struct VoteVarianceProbe {
  double empirical = 0.0;  // mean of |z_j - G|^2 over votes and repetitions
  double predicted = 0.0;  // sigma^2 p / (r b), sigma^2 = per-sample total variance
};

// With no attackers, measures how far honest votes scatter around G at w.
inline VoteVarianceProbe honest_vote_variance(const DetoxConfig& cfg, const Task& task,
                                              const GradVec& w, int repetitions,
                                              std::uint64_t seed) {
  validate_config(cfg);
  const GradVec G = task.full_gradient(w);
  RngStream root = split_rng(seed, "vote_variance");
  double acc = 0.0;
  std::size_t count = 0;
  for (int rep = 0; rep < repetitions; ++rep) {
    RngStream rng = root.derive(static_cast<std::uint64_t>(rep));
    const auto part = partition_nodes(cfg.p, cfg.r, rng);
    const auto batch = draw_batch(task.size(), static_cast<std::size_t>(cfg.b), rng);
    const auto asg = assign_batch(batch, part, rng);
    for (const auto& s : asg.sample_groups) {
      acc += sq_distance(task.gradient_mean(w, s), G);
      ++count;
    }
  }
  VoteVarianceProbe out;
  out.empirical = acc / static_cast<double>(count);
  out.predicted = task.gradient_variance(w) * cfg.p / (static_cast<double>(cfg.r) * cfg.b);
  return out;
}

// ---------------------------------------------------------------------------
// robust mean estimation
// ---------------------------------------------------------------------------

enum class Estimator { mean, geo_median, coord_median, detox_geo_median, detox_coord_median };

inline constexpr std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::mean: return "mean";
    case Estimator::geo_median: return "geo_median";
    case Estimator::coord_median: return "coord_median";
    case Estimator::detox_geo_median: return "detox_geo_median";
    case Estimator::detox_coord_median: return "detox_coord_median";
  }
  return "?";
}

inline std::optional<Estimator> estimator_from_string(std::string_view s) {
  for (auto e : {Estimator::mean, Estimator::geo_median, Estimator::coord_median,
                 Estimator::detox_geo_median, Estimator::detox_coord_median})
    if (to_string(e) == s) return e;
  return std::nullopt;
}

inline std::vector<Estimator> default_estimators() {
  return {Estimator::geo_median, Estimator::coord_median, Estimator::detox_geo_median,
          Estimator::detox_coord_median};
}

struct MeanEstimationSpec {
  int d = 50;
  int p = 2100;
  int r = 3;
  int q = 100;
  int k = 5;  // vote-group size for the DETOX estimators (A0 = mean)
  double byz_norm = 100.0;
  std::vector<Estimator> estimators = default_estimators();
  std::uint64_t seed = 0;
  double geo_tol = 1e-8;
  int geo_max_iter = 1000;
};

struct EstimatorError {
  Estimator estimator;
  double error = 0.0;  // |estimate - true mean|, true mean = 0
  int q_hat = 0;       // Byzantine inputs reaching the robust stage
};

// One sample x_i ~ N(0, I_d) per worker slot (b = p). Plain estimators see
// the p worker outputs; DETOX estimators see the p/r majority votes, each
// the mean of its group's r samples. Byzantine workers (the same set for
// both) send byz_norm * (1,...,1)/sqrt(d).
inline std::vector<EstimatorError> mean_estimation_experiment(const MeanEstimationSpec& spec) {
  DetoxConfig cfg;
  cfg.p = spec.p;
  cfg.q = spec.q;
  cfg.r = spec.r;
  cfg.b = spec.p;
  cfg.k = spec.k;
  cfg.d = spec.d;
  validate_config(cfg);
  if (!(spec.byz_norm >= 0.0)) throw BadParameter("byz_norm must be >= 0");

  const MeanEstimationTask task(spec.d, static_cast<std::size_t>(spec.p), split_rng(spec.seed, "samples"));
  RngStream partition_rng = split_rng(spec.seed, "partition");
  RngStream placement_rng = split_rng(spec.seed, "placement");
  RngStream assign_rng = split_rng(spec.seed, "assign");
  RngStream hier_rng = split_rng(spec.seed, "hier");

  const auto part = partition_nodes(spec.p, spec.r, partition_rng);
  const auto byz = place_byzantine(spec.p, spec.q, part, Placement::random_fixed, placement_rng);
  const auto mask = byzantine_mask(spec.p, byz);
  const GradVec attack_vec(static_cast<std::size_t>(spec.d), spec.byz_norm / std::sqrt(static_cast<double>(spec.d)));

  auto sample = [&](std::size_t i) {
    const auto x = task.features(i);
    return GradVec(x.begin(), x.end());
  };

  // plain: worker i holds sample i
  std::vector<GradVec> plain(static_cast<std::size_t>(spec.p));
  for (std::size_t i = 0; i < plain.size(); ++i) plain[i] = mask[i] ? attack_vec : sample(i);

  // DETOX: group j averages its r samples
  std::vector<std::size_t> all(static_cast<std::size_t>(spec.p));
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto asg = assign_batch(all, part, assign_rng);
  std::vector<GradVec> truth(asg.sample_groups.size());
  for (std::size_t g = 0; g < truth.size(); ++g) {
    GradVec m(static_cast<std::size_t>(spec.d), 0.0);
    for (auto i : asg.sample_groups[g]) {
      const auto x = task.features(i);
      for (std::size_t c = 0; c < m.size(); ++c) m[c] += x[c];
    }
    for (auto& v : m) v /= static_cast<double>(asg.sample_groups[g].size());
    truth[g] = std::move(m);
  }
  std::vector<GradVec> outputs(static_cast<std::size_t>(spec.p));
  for (std::size_t w = 0; w < outputs.size(); ++w)
    outputs[w] = mask[w] ? attack_vec : truth[static_cast<std::size_t>(part.group_of[w])];
  const VoteSet votes = filter_votes(outputs, part, truth);

  AggregatorSpec geo{AggregatorKind::geo_median};
  geo.tol = spec.geo_tol;
  geo.max_iter = spec.geo_max_iter;
  const AggregatorSpec coord{AggregatorKind::coord_median};
  const AggregatorSpec avg{AggregatorKind::mean};

  std::vector<EstimatorError> out;
  for (auto e : spec.estimators) {
    GradVec est;
    int qh = spec.q;
    switch (e) {
      case Estimator::mean: est = mean(plain); break;
      case Estimator::geo_median: est = aggregate(geo, plain); break;
      case Estimator::coord_median: est = coord_median(plain); break;
      case Estimator::detox_geo_median: {
        RngStream rng = hier_rng;
        est = hier_aggr(votes, spec.k, avg, geo, rng);
        qh = votes.q_hat();
        break;
      }
      case Estimator::detox_coord_median: {
        RngStream rng = hier_rng;
        est = hier_aggr(votes, spec.k, avg, coord, rng);
        qh = votes.q_hat();
        break;
      }
    }
    out.push_back({e, norm2(est), qh});
  }
  return out;
}

// ---------------------------------------------------------------------------
// aggregation-stage timing
// ---------------------------------------------------------------------------

struct TimingSpec {
  std::vector<int> p_values;
  int d = 100000;
  AggregatorSpec agg{AggregatorKind::bulyan};
  bool detox = false;
  int r = 5;   // DETOX only
  int k = 10;  // DETOX only: vote-group size, held fixed across p
  int reps = 11;
  int warmups = 2;
  std::uint64_t seed = 0;
};

struct TimingRow {
  int p = 0;
  double median_seconds = 0.0;
};

// Median wall-clock of the server-side aggregation stage on random inputs.
// Plain: agg over p vectors. DETOX: majority filtering of p outputs, then
// hier_aggr with agg0 = agg inside groups of k and agg1 = mean.
inline std::vector<TimingRow> timing_probe(const TimingSpec& spec) {
  if (!std::is_sorted(spec.p_values.begin(), spec.p_values.end()))
    throw BadParameter("p_values must be sorted ascending");
  if (spec.reps < 1) throw BadParameter("reps must be >= 1");
  std::vector<TimingRow> rows;
  const AggregatorSpec avg{AggregatorKind::mean};
  for (int p : spec.p_values) {
    RngStream rng = split_rng(spec.seed, "timing").derive(static_cast<std::uint64_t>(p));
    const std::size_t d = static_cast<std::size_t>(spec.d);
    std::vector<GradVec> inputs;
    NodeGroupPartition part;
    std::vector<GradVec> truth;
    if (!spec.detox) {
      inputs.assign(static_cast<std::size_t>(p), GradVec(d));
      for (auto& v : inputs)
        for (auto& x : v) x = rng.normal();
    } else {
      part = partition_nodes(p, spec.r, rng);
      truth.assign(part.groups.size(), GradVec(d));
      for (auto& v : truth)
        for (auto& x : v) x = rng.normal();
      inputs.resize(static_cast<std::size_t>(p));
      for (std::size_t w = 0; w < inputs.size(); ++w)
        inputs[w] = truth[static_cast<std::size_t>(part.group_of[w])];
    }

    std::vector<double> samples;
    double sink = 0.0;
    for (int rep = 0; rep < spec.warmups + spec.reps; ++rep) {
      RngStream hier_rng = rng.derive(static_cast<std::uint64_t>(rep));
      const auto t0 = std::chrono::steady_clock::now();
      GradVec out;
      if (!spec.detox) {
        out = aggregate(spec.agg, inputs);
      } else {
        const VoteSet votes = filter_votes(inputs, part, truth);
        out = hier_aggr(votes, spec.k, spec.agg, avg, hier_rng);
      }
      const auto t1 = std::chrono::steady_clock::now();
      sink += out[0];
      if (rep >= spec.warmups) samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    if (!std::isfinite(sink)) throw Error("timing probe produced a non-finite aggregate");
    std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2),
                     samples.end());
    rows.push_back({p, samples[samples.size() / 2]});
  }
  return rows;
}

}  // namespace detox
