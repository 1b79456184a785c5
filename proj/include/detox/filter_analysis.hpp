#pragma once

// Exact and Monte Carlo analysis of the majority-vote filtering stage, and
// calculators for the bounds on the number of surviving Byzantine votes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "detox/core.hpp"
#include "detox/rng.hpp"

namespace detox {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

// C(n, k) with C(n, k) = 0 for k > n or k < 0.
inline BigInt binomial(long long n, long long k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  BigInt out = 1;
  for (long long i = 1; i <= k; ++i) {
    out *= n - k + i;
    out /= i;
  }
  return out;
}

namespace analysis_detail {

inline void require_groups(int p, int q, int r) {
  if (r < 1 || r % 2 == 0) throw ParityError("r must be a positive odd integer");
  if (p < 1 || p % r != 0)
    throw DivisibilityError("r=" + std::to_string(r) + " does not divide p=" + std::to_string(p));
  if (q < 0 || q > p) throw BadParameter("need 0 <= q <= p");
}

}  // namespace analysis_detail

// E[q_hat] over a uniformly random partition:
//   (p/r) * sum_{i=0}^{(r-1)/2} C(q, r-i) C(p-q, i) / C(p, r)
inline BigRational exact_expected_qhat_rational(int p, int q, int r) {
  analysis_detail::require_groups(p, q, r);
  BigInt num = 0;
  for (int i = 0; i <= (r - 1) / 2; ++i) num += binomial(q, r - i) * binomial(p - q, i);
  return BigRational(num * (p / r), binomial(p, r));
}

inline double exact_expected_qhat(int p, int q, int r) {
  return exact_expected_qhat_rational(p, q, r).convert_to<double>();
}

// Probability that a single node group is Byzantine-majority.
inline double group_capture_probability(int p, int q, int r) {
  return (exact_expected_qhat_rational(p, q, r) / (p / r)).convert_to<double>();
}

// 2q (40 eps (1-eps))^((r-1)/2) / r, valid for r > 3, p >= 2r, eps < 1/40.
inline double theorem1_bound(int p, int q, int r) {
  if (r <= 3) throw PreconditionViolated("theorem1_bound requires r > 3 (r=" + std::to_string(r) + ")");
  if (p < 2 * r) throw PreconditionViolated("theorem1_bound requires p >= 2r");
  const double eps = static_cast<double>(q) / p;
  if (!(eps < 1.0 / 40.0))
    throw PreconditionViolated("theorem1_bound requires eps = q/p < 1/40 (eps=" +
                               std::to_string(eps) + ")");
  return 2.0 * q * std::pow(40.0 * eps * (1.0 - eps), (r - 1) / 2.0) / r;
}

inline bool theorem1_applies(int p, int q, int r) {
  return r > 3 && p >= 2 * r && static_cast<double>(q) / p < 1.0 / 40.0;
}

// q eps (4 - 2 eps) / 3, the r = 3 bound.
inline double r3_bound(int q, double epsilon) { return q * epsilon * (4.0 - 2.0 * epsilon) / 3.0; }

inline bool r3_applies(int p, int q, int r) {
  return r == 3 && p >= 6 && 2 * q < p;
}

// 1 + 2 ln(1/delta). delta = 1/2 is accepted as the closed end of the range.
inline double corollary_threshold(double delta) {
  if (!(delta > 0.0 && delta <= 0.5)) throw BadDelta("delta must lie in (0, 1/2]");
  return 1.0 + 2.0 * std::log(1.0 / delta);
}

// eps <= 1/80 and r >= 3 + 2 log2(q).
inline bool corollary_applies(int p, int q, int r) {
  const double eps = static_cast<double>(q) / p;
  if (!(eps <= 1.0 / 80.0)) return false;
  return q == 0 || r >= 3.0 + 2.0 * std::log2(static_cast<double>(q));
}

// (1 / (1 + theta/2))^(E[q_hat] theta / 2)
inline double tail_bound(int p, int q, int r, double theta) {
  if (!(theta > 0.0)) throw BadParameter("theta must be positive");
  const double e = exact_expected_qhat(p, q, r);
  return std::pow(1.0 / (1.0 + theta / 2.0), e * theta / 2.0);
}

enum class RateKind { trimmed_mean, iterative_filtering };

// Order terms with unit constants and logarithmic factors dropped:
//   trimmed mean         d x            -> d / n with DETOX
//   iterative filtering  sqrt(x)+sqrt(d/n) -> sqrt(d / n) with DETOX
// Qualitative only; no constants are known.
inline double convergence_rate_bounds(RateKind kind, int d, int n, double x, bool with_detox) {
  if (d < 1 || n < 1) throw BadParameter("need d >= 1 and n >= 1");
  if (!(x >= 0.0 && x < 0.5)) throw BadParameter("x must lie in [0, 1/2)");
  const double dn = static_cast<double>(d) / n;
  if (kind == RateKind::trimmed_mean) return with_detox ? dn : d * x;
  return with_detox ? std::sqrt(dn) : std::sqrt(x) + std::sqrt(dn);
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

struct QhatDistribution {
  int p = 0, q = 0, r = 0;
  std::uint64_t trials = 0;
  std::vector<std::uint64_t> histogram;  // histogram[v] = #trials with q_hat == v
  double mean = 0.0;
  double std_error = 0.0;
  // Joint and marginal capture frequencies of node groups 0 and 1.
  std::uint64_t first_captured = 0, second_captured = 0, both_captured = 0;

  double prob_greater(double threshold) const {
    std::uint64_t c = 0;
    for (std::size_t v = 0; v < histogram.size(); ++v)
      if (static_cast<double>(v) > threshold) c += histogram[v];
    return static_cast<double>(c) / static_cast<double>(trials);
  }
  double prob_at_least(double threshold) const {
    std::uint64_t c = 0;
    for (std::size_t v = 0; v < histogram.size(); ++v)
      if (static_cast<double>(v) >= threshold) c += histogram[v];
    return static_cast<double>(c) / static_cast<double>(trials);
  }
};

namespace analysis_detail {

struct McPartial {
  std::vector<std::uint64_t> histogram;
  std::uint64_t first = 0, second = 0, both = 0;
};

// Byzantine workers are ids 0..q-1; each trial seats them uniformly among
// the p seats of a fresh random partition (seat s lies in group s / r).
inline McPartial run_trials(int p, int q, int r, RngStream base, std::uint64_t begin,
                            std::uint64_t end) {
  const int groups = p / r;
  McPartial out;
  out.histogram.assign(static_cast<std::size_t>(groups) + 1, 0);
  std::vector<int> seats(static_cast<std::size_t>(p));
  std::vector<int> count(static_cast<std::size_t>(groups));
  for (std::uint64_t t = begin; t < end; ++t) {
    RngStream rng = base.derive(t);
    for (int i = 0; i < p; ++i) seats[static_cast<std::size_t>(i)] = i;
    std::fill(count.begin(), count.end(), 0);
    for (int i = 0; i < q; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) +
                            rng.uniform_index(static_cast<std::size_t>(p - i));
      std::swap(seats[static_cast<std::size_t>(i)], seats[j]);
      ++count[static_cast<std::size_t>(seats[static_cast<std::size_t>(i)] / r)];
    }
    int captured = 0;
    for (int c : count) captured += 2 * c > r;
    ++out.histogram[static_cast<std::size_t>(captured)];
    const bool a = 2 * count[0] > r;
    const bool b = groups > 1 && 2 * count[1] > r;
    out.first += a;
    out.second += b;
    out.both += a && b;
  }
  return out;
}

}  // namespace analysis_detail

// Empirical distribution of q_hat. Trial t draws from derive(t) of the seed's
// stream, so results do not depend on `threads`.
inline QhatDistribution monte_carlo_qhat(int p, int q, int r, std::uint64_t trials,
                                         std::uint64_t seed, unsigned threads = 1) {
  analysis_detail::require_groups(p, q, r);
  if (trials < 1) throw BadParameter("trials must be >= 1");
  const RngStream base = split_rng(seed, "monte_carlo_qhat");
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::uint64_t>(trials, 64))));

  std::vector<analysis_detail::McPartial> parts(threads);
  if (threads == 1) {
    parts[0] = analysis_detail::run_trials(p, q, r, base, 0, trials);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      const std::uint64_t lo = trials * w / threads, hi = trials * (w + 1) / threads;
      pool.emplace_back([&, w, lo, hi] { parts[w] = analysis_detail::run_trials(p, q, r, base, lo, hi); });
    }
    for (auto& th : pool) th.join();
  }

  QhatDistribution out;
  out.p = p;
  out.q = q;
  out.r = r;
  out.trials = trials;
  out.histogram.assign(static_cast<std::size_t>(p / r) + 1, 0);
  for (const auto& part : parts) {
    for (std::size_t v = 0; v < out.histogram.size(); ++v) out.histogram[v] += part.histogram[v];
    out.first_captured += part.first;
    out.second_captured += part.second;
    out.both_captured += part.both;
  }
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t v = 0; v < out.histogram.size(); ++v) {
    const double c = static_cast<double>(out.histogram[v]);
    s1 += c * static_cast<double>(v);
    s2 += c * static_cast<double>(v) * static_cast<double>(v);
  }
  const double n = static_cast<double>(trials);
  out.mean = s1 / n;
  const double var = trials > 1 ? std::max(0.0, (s2 - n * out.mean * out.mean) / (n - 1.0)) : 0.0;
  out.std_error = std::sqrt(var / n);
  return out;
}

// |empirical mean - exact| <= z standard errors (exact match when SE is 0).
inline bool agrees_within_std_errors(const QhatDistribution& mc, double exact, double z = 3.0) {
  const double gap = std::abs(mc.mean - exact);
  if (mc.std_error == 0.0) return gap <= 1e-12 * std::max(1.0, std::abs(exact));
  return gap <= z * mc.std_error;
}

// ---------------------------------------------------------------------------
// Grid reports
// ---------------------------------------------------------------------------

enum class CheckStatus { ok, violated, precondition_skipped };

inline constexpr const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::ok: return "ok";
    case CheckStatus::violated: return "violated";
    case CheckStatus::precondition_skipped: return "precondition_skipped";
  }
  return "?";
}

struct FilterBoundReport {
  int p = 0, q = 0, r = 0;
  double delta = 0.0, theta = 0.0;
  std::uint64_t trials = 0;

  double exact_expectation = 0.0;
  double theorem1_bound = std::numeric_limits<double>::quiet_NaN();
  double r3_bound = std::numeric_limits<double>::quiet_NaN();
  double corollary_threshold = std::numeric_limits<double>::quiet_NaN();
  double tail_bound = std::numeric_limits<double>::quiet_NaN();

  double empirical_mean = 0.0;
  double empirical_std_error = 0.0;
  double empirical_corollary_tail = std::numeric_limits<double>::quiet_NaN();  // P[q_hat > threshold]
  double empirical_tail = std::numeric_limits<double>::quiet_NaN();  // P[q_hat >= E(1+theta)]

  CheckStatus monte_carlo = CheckStatus::precondition_skipped;
  CheckStatus theorem1 = CheckStatus::precondition_skipped;
  CheckStatus r3 = CheckStatus::precondition_skipped;
  CheckStatus corollary = CheckStatus::precondition_skipped;
  CheckStatus tail = CheckStatus::precondition_skipped;

  bool passed() const {
    for (auto s : {monte_carlo, theorem1, r3, corollary, tail})
      if (s == CheckStatus::violated) return false;
    return true;
  }
};

// Fills one report row. `mc` may be null when trials == 0 (exact checks only).
inline FilterBoundReport evaluate_grid_point(int p, int q, int r, double delta, double theta,
                                             const QhatDistribution* mc) {
  FilterBoundReport row;
  row.p = p;
  row.q = q;
  row.r = r;
  row.delta = delta;
  row.theta = theta;
  row.exact_expectation = exact_expected_qhat(p, q, r);
  const double eps = static_cast<double>(q) / p;

  if (theorem1_applies(p, q, r)) {
    row.theorem1_bound = theorem1_bound(p, q, r);
    row.theorem1 = row.exact_expectation <= row.theorem1_bound ? CheckStatus::ok : CheckStatus::violated;
  }
  if (r3_applies(p, q, r)) {
    row.r3_bound = r3_bound(q, eps);
    row.r3 = row.exact_expectation <= row.r3_bound ? CheckStatus::ok : CheckStatus::violated;
  }
  const bool delta_ok = delta > 0.0 && delta <= 0.5;
  if (delta_ok) row.corollary_threshold = corollary_threshold(delta);
  if (theta > 0.0) row.tail_bound = tail_bound(p, q, r, theta);

  if (mc != nullptr) {
    row.trials = mc->trials;
    row.empirical_mean = mc->mean;
    row.empirical_std_error = mc->std_error;
    row.monte_carlo = agrees_within_std_errors(*mc, row.exact_expectation) ? CheckStatus::ok
                                                                           : CheckStatus::violated;
    if (delta_ok) {
      row.empirical_corollary_tail = mc->prob_greater(row.corollary_threshold);
      if (corollary_applies(p, q, r))
        row.corollary = row.empirical_corollary_tail <= delta ? CheckStatus::ok : CheckStatus::violated;
    }
    if (theta > 0.0) {
      row.empirical_tail = mc->prob_at_least(row.exact_expectation * (1.0 + theta));
      if (row.exact_expectation > 0.0)
        row.tail = row.empirical_tail <= row.tail_bound ? CheckStatus::ok : CheckStatus::violated;
    }
  }
  return row;
}

}  // namespace detox
