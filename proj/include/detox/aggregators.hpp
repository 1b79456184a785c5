#pragma once

// Robust aggregation rules. All functions are pure: they take a list of
// equal-length vectors and return a new vector, and may be called
// concurrently.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detox/core.hpp"

namespace detox {

enum class AggregatorKind {
  mean,
  coord_median,
  geo_median,
  trimmed_mean,
  krum,
  multi_krum,
  bulyan,
  sign_majority,
};

inline constexpr std::string_view to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::mean: return "mean";
    case AggregatorKind::coord_median: return "coord_median";
    case AggregatorKind::geo_median: return "geo_median";
    case AggregatorKind::trimmed_mean: return "trimmed_mean";
    case AggregatorKind::krum: return "krum";
    case AggregatorKind::multi_krum: return "multi_krum";
    case AggregatorKind::bulyan: return "bulyan";
    case AggregatorKind::sign_majority: return "sign_majority";
  }
  return "?";
}

inline std::optional<AggregatorKind> aggregator_kind_from_string(std::string_view s) {
  for (auto k : {AggregatorKind::mean, AggregatorKind::coord_median, AggregatorKind::geo_median,
                 AggregatorKind::trimmed_mean, AggregatorKind::krum, AggregatorKind::multi_krum,
                 AggregatorKind::bulyan, AggregatorKind::sign_majority})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

// Parameters not used by `kind` are ignored. For bulyan, `inner` names the
// selection rule and shares the remaining parameters (q, m, tol, max_iter).
struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::mean;
  double alpha = 0.25;
  int q = 0;
  int m = 1;
  AggregatorKind inner = AggregatorKind::krum;
  double tol = 1e-8;
  int max_iter = 1000;

  friend bool operator==(const AggregatorSpec&, const AggregatorSpec&) = default;
};

inline void validate(const AggregatorSpec& s) {
  if (!(s.alpha >= 0.0 && s.alpha < 0.5)) throw BadParameter("alpha must lie in [0, 1/2)");
  if (!(s.tol > 0.0)) throw BadParameter("tol must be positive");
  if (s.max_iter < 1) throw BadParameter("max_iter must be >= 1");
  if (s.m < 1) throw BadParameter("m must be >= 1");
  if (s.q < 0) throw BadParameter("q must be >= 0");
  if (s.kind == AggregatorKind::bulyan && s.inner == AggregatorKind::bulyan)
    throw BadParameter("bulyan cannot use itself as the inner rule");
}

// ---------------------------------------------------------------------------
// mean
// ---------------------------------------------------------------------------

inline GradVec mean(std::span<const GradVec> vs) {
  const std::size_t d = common_dim(vs);
  GradVec out(d, 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < d; ++i) out[i] += v[i];
  const double n = static_cast<double>(vs.size());
  for (auto& x : out) x /= n;
  return out;
}

// ---------------------------------------------------------------------------
// coordinate-wise median
// ---------------------------------------------------------------------------

namespace agg_detail {

// Median of `xs` (reordered in place). Even counts give the midpoint of the
// two middle order statistics.
inline double median_inplace(std::span<double> xs) {
  const std::size_t n = xs.size();
  const std::size_t mid = n / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  const double hi = xs[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / 2.0;
}

}  // namespace agg_detail

inline GradVec coord_median(std::span<const GradVec> vs) {
  const std::size_t d = common_dim(vs);
  GradVec out(d);
  std::vector<double> column(vs.size());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < vs.size(); ++j) column[j] = vs[j][i];
    out[i] = agg_detail::median_inplace(column);
  }
  return out;
}

// ---------------------------------------------------------------------------
// geometric median (smoothed Weiszfeld)
// ---------------------------------------------------------------------------

struct GeoMedianResult {
  GradVec point;
  double objective = 0.0;          // sum of Euclidean distances at `point`
  double residual = 0.0;           // length of the final Weiszfeld step
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective of every iterate, starting point first
};

inline constexpr double kWeiszfeldSmoothing = 1e-10;

inline double geo_median_objective(std::span<const GradVec> vs, std::span<const double> x) {
  double s = 0.0;
  for (const auto& v : vs) s += distance(v, x);
  return s;
}

// Starts at the coordinate-wise median and iterates
//   x <- sum_j w_j x_j / sum_j w_j,   w_j = 1 / sqrt(|x - x_j|^2 + nu^2)
// until a step is no longer than `tol`. This is a majorize-minimize scheme for
// sum_j sqrt(|x - x_j|^2 + nu^2), so the smoothed objective never increases.
// When max_iter is exhausted the best iterate seen is returned with
// converged = false.
inline GeoMedianResult geo_median(std::span<const GradVec> vs, double tol = 1e-8,
                                  int max_iter = 1000) {
  const std::size_t d = common_dim(vs);
  if (!(tol > 0.0)) throw BadParameter("geo_median tol must be positive");
  if (max_iter < 1) throw BadParameter("geo_median max_iter must be >= 1");

  constexpr double nu2 = kWeiszfeldSmoothing * kWeiszfeldSmoothing;
  GeoMedianResult res;
  GradVec x = coord_median(vs);
  double obj = geo_median_objective(vs, x);
  res.objective_trace.push_back(obj);
  res.point = x;
  res.objective = obj;
  res.residual = std::numeric_limits<double>::infinity();

  GradVec next(d);
  for (int it = 1; it <= max_iter; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    double wsum = 0.0;
    for (const auto& v : vs) {
      const double w = 1.0 / std::sqrt(sq_distance(v, x) + nu2);
      wsum += w;
      for (std::size_t i = 0; i < d; ++i) next[i] += w * v[i];
    }
    for (auto& c : next) c /= wsum;

    const double step = distance(next, x);
    x.swap(next);
    obj = geo_median_objective(vs, x);
    res.objective_trace.push_back(obj);
    res.iterations = it;
    res.residual = step;
    if (obj <= res.objective) {
      res.objective = obj;
      res.point = x;
    }
    if (step <= tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// trimmed mean
// ---------------------------------------------------------------------------

// ceil(alpha * n), robust to products such as 0.3 * 10 = 3.0000000000000004.
inline std::size_t trim_count(double alpha, std::size_t n) {
  const double raw = alpha * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
}

inline GradVec trimmed_mean(std::span<const GradVec> vs, double alpha) {
  const std::size_t d = common_dim(vs);
  if (!(alpha >= 0.0 && alpha < 0.5)) throw BadParameter("alpha must lie in [0, 1/2)");
  const std::size_t n = vs.size();
  const std::size_t t = trim_count(alpha, n);
  if (2 * t >= n)
    throw TrimTooLarge("trimming " + std::to_string(t) + " per side leaves nothing of " +
                       std::to_string(n));
  if (t == 0) return mean(vs);

  GradVec out(d);
  std::vector<double> column(n);
  const double kept = static_cast<double>(n - 2 * t);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < n; ++j) column[j] = vs[j][i];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (std::size_t j = t; j < n - t; ++j) s += column[j];
    out[i] = s / kept;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Krum family
// ---------------------------------------------------------------------------

namespace agg_detail {

// Row-major n x n matrix of squared Euclidean distances.
inline std::vector<double> pairwise_sq_distances(std::span<const GradVec> vs) {
  const std::size_t n = vs.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = sq_distance(vs[i], vs[j]);
  return dist;
}

// Krum score of every member of `pool` against the other members, using
// `neighbours` nearest squared distances (smallest first).
inline std::vector<double> krum_scores_in_pool(const std::vector<double>& dist, std::size_t n,
                                               std::span<const std::size_t> pool,
                                               std::size_t neighbours) {
  std::vector<double> scores(pool.size());
  std::vector<double> row;
  row.reserve(pool.size());
  for (std::size_t a = 0; a < pool.size(); ++a) {
    row.clear();
    for (std::size_t b = 0; b < pool.size(); ++b)
      if (a != b) row.push_back(dist[pool[a] * n + pool[b]]);
    const std::size_t kk = std::min(neighbours, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(kk), row.end());
    double s = 0.0;
    for (std::size_t t = 0; t < kk; ++t) s += row[t];
    scores[a] = s;
  }
  return scores;
}

inline void require_krum_size(std::size_t n, int q) {
  if (q < 0) throw BadParameter("q must be >= 0");
  if (n < 2 * static_cast<std::size_t>(q) + 3)
    throw TooFewVectors("krum needs n >= 2q+3 (n=" + std::to_string(n) +
                        ", q=" + std::to_string(q) + ")");
}

// Indices ordered by (score, index).
inline std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace agg_detail

// Sum of squared distances from each input to its n-q-2 nearest other inputs.
inline std::vector<double> krum_scores(std::span<const GradVec> vs, int q) {
  common_dim(vs);
  agg_detail::require_krum_size(vs.size(), q);
  const std::size_t n = vs.size();
  const auto dist = agg_detail::pairwise_sq_distances(vs);
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  return agg_detail::krum_scores_in_pool(dist, n, pool, n - static_cast<std::size_t>(q) - 2);
}

inline std::size_t krum_index(std::span<const GradVec> vs, int q) {
  const auto scores = krum_scores(vs, q);
  return agg_detail::rank_by_score(scores).front();
}

inline GradVec krum(std::span<const GradVec> vs, int q) { return vs[krum_index(vs, q)]; }

// Mean of the m inputs with the lowest Krum scores; selected vectors are
// summed in ascending input order.
inline GradVec multi_krum(std::span<const GradVec> vs, int q, int m) {
  const auto scores = krum_scores(vs, q);
  const std::size_t n = vs.size();
  if (m < 1 || static_cast<std::size_t>(m) > n - static_cast<std::size_t>(q) - 2)
    throw BadM("multi_krum needs 1 <= m <= n-q-2 (m=" + std::to_string(m) + ")");
  auto order = agg_detail::rank_by_score(scores);
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());
  std::vector<GradVec> chosen;
  chosen.reserve(order.size());
  for (auto i : order) chosen.push_back(vs[i]);
  return mean(chosen);
}

// ---------------------------------------------------------------------------
// sign majority
// ---------------------------------------------------------------------------

inline GradVec sign_majority(std::span<const GradVec> vs) {
  const std::size_t d = common_dim(vs);
  GradVec out(d);
  for (std::size_t i = 0; i < d; ++i) {
    long long votes = 0;
    for (const auto& v : vs) votes += (v[i] > 0.0) - (v[i] < 0.0);
    out[i] = static_cast<double>((votes > 0) - (votes < 0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bulyan
// ---------------------------------------------------------------------------

inline GradVec aggregate(const AggregatorSpec& spec, std::span<const GradVec> vs);

namespace agg_detail {

// Mean of the `beta` values closest to the median of `column`. Candidates are
// ranked by distance to the median, ties resolved toward the smaller value.
inline double mean_around_median(std::span<double> column, std::size_t beta) {
  std::sort(column.begin(), column.end());
  const std::size_t n = column.size();
  const double med = n % 2 == 1 ? column[n / 2] : (column[n / 2 - 1] + column[n / 2]) / 2.0;
  // Closest values form a contiguous window of the sorted column; grow it
  // outward from the median.
  std::size_t lo = n / 2, hi = n / 2;  // half-open [lo, hi)
  double s = 0.0;
  for (std::size_t taken = 0; taken < beta; ++taken) {
    const bool can_left = lo > 0;
    const bool can_right = hi < n;
    bool take_left;
    if (!can_right) take_left = true;
    else if (!can_left) take_left = false;
    else take_left = (med - column[lo - 1]) <= (column[hi] - med);
    if (take_left) s += column[--lo];
    else s += column[hi++];
  }
  return s / static_cast<double>(beta);
}

}  // namespace agg_detail

// Selection: apply `inner` n-2q times, each time moving the chosen vector out
// of the pool. With a Krum inner rule the pairwise distances are computed once
// and the neighbour count shrinks with the pool (pool-q-2, floored at 0). Any
// other inner rule picks the pool member closest to the rule's output.
// Aggregation: per coordinate, average the n-4q selected values closest to
// the coordinate-wise median of the selection.
inline GradVec bulyan(std::span<const GradVec> vs, int q,
                      const AggregatorSpec& inner = AggregatorSpec{AggregatorKind::krum}) {
  const std::size_t d = common_dim(vs);
  if (q < 0) throw BadParameter("q must be >= 0");
  const std::size_t n = vs.size();
  const std::size_t qq = static_cast<std::size_t>(q);
  if (n < 4 * qq + 3)
    throw TooFewVectors("bulyan needs n >= 4q+3 (n=" + std::to_string(n) + ", q=" +
                        std::to_string(q) + ")");
  if (inner.kind == AggregatorKind::bulyan) throw BadParameter("bulyan cannot nest itself");

  const std::size_t theta = n - 2 * qq;
  const std::size_t beta = n - 4 * qq;

  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> selected;
  selected.reserve(theta);

  const bool krum_inner = inner.kind == AggregatorKind::krum;
  std::vector<double> dist;
  if (krum_inner) dist = agg_detail::pairwise_sq_distances(vs);

  while (selected.size() < theta) {
    std::size_t pick = 0;  // position within pool
    if (krum_inner) {
      const std::size_t nb = pool.size() > qq + 2 ? pool.size() - qq - 2 : 0;
      const auto scores = agg_detail::krum_scores_in_pool(dist, n, pool, nb);
      pick = agg_detail::rank_by_score(scores).front();
    } else {
      std::vector<GradVec> members;
      members.reserve(pool.size());
      for (auto i : pool) members.push_back(vs[i]);
      AggregatorSpec in = inner;
      in.q = q;
      const GradVec target = aggregate(in, members);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < pool.size(); ++a) {
        const double dd = sq_distance(vs[pool[a]], target);
        if (dd < best) {
          best = dd;
          pick = a;
        }
      }
    }
    selected.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }

  GradVec out(d);
  std::vector<double> column(theta);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < theta; ++j) column[j] = vs[selected[j]][i];
    out[i] = agg_detail::mean_around_median(column, beta);
  }
  return out;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline GradVec aggregate(const AggregatorSpec& spec, std::span<const GradVec> vs) {
  switch (spec.kind) {
    case AggregatorKind::mean: return mean(vs);
    case AggregatorKind::coord_median: return coord_median(vs);
    case AggregatorKind::geo_median: return geo_median(vs, spec.tol, spec.max_iter).point;
    case AggregatorKind::trimmed_mean: return trimmed_mean(vs, spec.alpha);
    case AggregatorKind::krum: return krum(vs, spec.q);
    case AggregatorKind::multi_krum: return multi_krum(vs, spec.q, spec.m);
    case AggregatorKind::bulyan: {
      AggregatorSpec inner = spec;
      inner.kind = spec.inner;
      return bulyan(vs, spec.q, inner);
    }
    case AggregatorKind::sign_majority: return sign_majority(vs);
  }
  throw BadParameter("unknown aggregator kind");
}

}  // namespace detox
