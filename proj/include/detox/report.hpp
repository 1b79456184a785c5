#pragma once

// Experiment configs and result serialization. JSON is canonical; CSV rows
// are a projection with stable column order. Numbers in CSV use 17
// significant digits so values round-trip.

#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "detox/config.hpp"
#include "detox/filter_analysis.hpp"
#include "detox/harness.hpp"
#include "detox/tasks.hpp"

namespace detox {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_vector(const GradVec& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_double(v[i]);
  }
  return s;
}

// One vector per line, whitespace-separated decimals. Blank lines are
// skipped. Throws ParseError naming the 1-based line, DimensionMismatch when
// lines disagree in length, EmptyInput when no vector is found.
inline std::vector<GradVec> parse_vectors(std::istream& in) {
  std::vector<GradVec> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    GradVec v;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      if (pos == line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
      const std::string tok = line.substr(pos, end - pos);
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw ParseError("line " + std::to_string(no) + ": cannot parse '" + tok + "'");
      if (!std::isfinite(x)) throw ParseError("line " + std::to_string(no) + ": non-finite value '" + tok + "'");
      v.push_back(x);
      pos = end;
    }
    if (v.empty()) continue;
    if (!out.empty() && v.size() != out.front().size())
      throw DimensionMismatch("line " + std::to_string(no) + ": expected " +
                              std::to_string(out.front().size()) + " values, got " +
                              std::to_string(v.size()));
    out.push_back(std::move(v));
  }
  if (out.empty()) throw EmptyInput("no vectors in input");
  return out;
}

// ---------------------------------------------------------------------------
// experiment configs
// ---------------------------------------------------------------------------

inline TaskKind task_kind_from_json(const json& j) {
  const auto s = j.get<std::string>();
  for (auto k : {TaskKind::linear_regression, TaskKind::logistic_regression, TaskKind::mean_estimation})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown task kind '" + s + "'");
}

struct TrainConfig {
  DetoxConfig detox;
  TaskSpec task;  // task.d always equals detox.d
};

inline json to_json(const TaskSpec& t) {
  return json{{"kind", to_string(t.kind)}, {"d", t.d}, {"n", t.n}, {"noise_sigma", t.noise_sigma}, {"seed", t.seed}};
}

inline json to_json(const TrainConfig& c) { return json{{"detox", to_json(c.detox)}, {"task", to_json(c.task)}}; }

// {"detox": DetoxConfig, "task": {"kind", "n", "noise_sigma", "seed"}}.
// The task seed defaults to the run seed.
inline TrainConfig train_config_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "train config");
  reject_unknown(j, {"detox", "task"}, "train config");
  if (!j.contains("detox")) throw ConfigError("missing field 'detox' in train config");
  TrainConfig c;
  c.detox = detox_config_from_json(j.at("detox"));
  c.task.seed = c.detox.seed;
  if (j.contains("task")) {
    const json& t = j.at("task");
    require_object(t, "task");
    reject_unknown(t, {"kind", "n", "noise_sigma", "seed"}, "task");
    if (t.contains("kind")) c.task.kind = task_kind_from_json(t.at("kind"));
    read_opt(t, "n", c.task.n);
    read_opt(t, "noise_sigma", c.task.noise_sigma);
    read_opt(t, "seed", c.task.seed);
  }
  c.task.d = c.detox.d;
  return c;
}

struct FilterGridPoint {
  int p = 0, q = 0, r = 0;
};

// Every point is evaluated at every (delta, theta) pair.
struct FilterGrid {
  std::vector<FilterGridPoint> points;
  std::vector<double> deltas{0.1};
  std::vector<double> thetas{2.0};
  std::uint64_t trials = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline json to_json(const FilterGrid& g) {
  json pts = json::array();
  for (const auto& pt : g.points) pts.push_back(json{{"p", pt.p}, {"q", pt.q}, {"r", pt.r}});
  return json{{"points", pts}, {"delta", g.deltas}, {"theta", g.thetas},
              {"trials", g.trials}, {"seed", g.seed}, {"threads", g.threads}};
}

inline FilterGrid filter_grid_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "filter grid");
  reject_unknown(j, {"points", "delta", "theta", "trials", "seed", "threads"}, "filter grid");
  FilterGrid g;
  if (j.contains("points")) {
    if (!j.at("points").is_array()) throw ConfigError("'points' must be an array");
    for (const auto& pt : j.at("points")) {
      require_object(pt, "grid point");
      reject_unknown(pt, {"p", "q", "r"}, "grid point");
      FilterGridPoint x;
      read_req(pt, "p", x.p, "grid point");
      read_req(pt, "q", x.q, "grid point");
      read_req(pt, "r", x.r, "grid point");
      g.points.push_back(x);
    }
  }
  read_opt(j, "delta", g.deltas);
  read_opt(j, "theta", g.thetas);
  read_opt(j, "trials", g.trials);
  read_opt(j, "seed", g.seed);
  read_opt(j, "threads", g.threads);
  return g;
}

inline json to_json(const MeanEstimationSpec& s) {
  json est = json::array();
  for (auto e : s.estimators) est.push_back(to_string(e));
  return json{{"d", s.d}, {"p", s.p}, {"r", s.r}, {"q", s.q}, {"k", s.k}, {"byz_norm", s.byz_norm},
              {"estimators", est}, {"seed", s.seed}, {"geo_tol", s.geo_tol}, {"geo_max_iter", s.geo_max_iter}};
}

inline MeanEstimationSpec mean_estimation_spec_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "mean-est config");
  reject_unknown(j, {"d", "p", "r", "q", "k", "byz_norm", "estimators", "seed", "geo_tol", "geo_max_iter"},
                 "mean-est config");
  MeanEstimationSpec s;
  read_opt(j, "d", s.d);
  read_opt(j, "p", s.p);
  read_opt(j, "r", s.r);
  read_opt(j, "q", s.q);
  read_opt(j, "k", s.k);
  read_opt(j, "byz_norm", s.byz_norm);
  read_opt(j, "seed", s.seed);
  read_opt(j, "geo_tol", s.geo_tol);
  read_opt(j, "geo_max_iter", s.geo_max_iter);
  if (j.contains("estimators")) {
    std::vector<std::string> names;
    read_opt(j, "estimators", names);
    s.estimators.clear();
    for (const auto& n : names) {
      const auto e = estimator_from_string(n);
      if (!e) throw ConfigError("unknown estimator '" + n + "'");
      s.estimators.push_back(*e);
    }
  }
  return s;
}

inline json to_json(const TimingSpec& s) {
  return json{{"p_values", s.p_values}, {"d", s.d}, {"agg", to_json(s.agg)}, {"detox", s.detox}, {"r", s.r},
              {"k", s.k}, {"reps", s.reps}, {"warmups", s.warmups}, {"seed", s.seed}};
}

inline TimingSpec timing_spec_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "timing config");
  reject_unknown(j, {"p_values", "d", "agg", "detox", "r", "k", "reps", "warmups", "seed"}, "timing config");
  TimingSpec s;
  read_req(j, "p_values", s.p_values, "timing config");
  read_opt(j, "d", s.d);
  if (j.contains("agg")) s.agg = aggregator_spec_from_json(j.at("agg"));
  read_opt(j, "detox", s.detox);
  read_opt(j, "r", s.r);
  read_opt(j, "k", s.k);
  read_opt(j, "reps", s.reps);
  read_opt(j, "warmups", s.warmups);
  read_opt(j, "seed", s.seed);
  return s;
}

struct BoundsQuery {
  RateKind kind = RateKind::trimmed_mean;
  int d = 1;
  int n = 1;
  double x = 0.0;
  bool with_detox = false;
};

inline constexpr std::string_view to_string(RateKind k) {
  return k == RateKind::trimmed_mean ? "trimmed_mean" : "iterative_filtering";
}

inline json to_json(const BoundsQuery& b) {
  return json{{"kind", to_string(b.kind)}, {"d", b.d}, {"n", b.n}, {"x", b.x}, {"with_detox", b.with_detox}};
}

// {"queries": [{"kind", "d", "n", "x", "with_detox"}, ...]}
inline std::vector<BoundsQuery> bounds_queries_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "bounds config");
  reject_unknown(j, {"queries"}, "bounds config");
  std::vector<BoundsQuery> out;
  if (!j.contains("queries")) return out;
  for (const auto& q : j.at("queries")) {
    require_object(q, "bounds query");
    reject_unknown(q, {"kind", "d", "n", "x", "with_detox"}, "bounds query");
    BoundsQuery b;
    std::string kind = "trimmed_mean";
    read_opt(q, "kind", kind);
    if (kind == "trimmed_mean") b.kind = RateKind::trimmed_mean;
    else if (kind == "iterative_filtering") b.kind = RateKind::iterative_filtering;
    else throw ConfigError("unknown bounds kind '" + kind + "'");
    read_req(q, "d", b.d, "bounds query");
    read_opt(q, "n", b.n);
    read_req(q, "x", b.x, "bounds query");
    read_opt(q, "with_detox", b.with_detox);
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// results
// ---------------------------------------------------------------------------

// NaN (a skipped bound) serializes as null.
inline json to_json(const FilterBoundReport& r) {
  auto num = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  return json{{"p", r.p},
              {"q", r.q},
              {"r", r.r},
              {"delta", r.delta},
              {"theta", r.theta},
              {"trials", r.trials},
              {"exact_expectation", r.exact_expectation},
              {"theorem1_bound", num(r.theorem1_bound)},
              {"r3_bound", num(r.r3_bound)},
              {"corollary_threshold", num(r.corollary_threshold)},
              {"tail_bound", num(r.tail_bound)},
              {"empirical_mean", r.empirical_mean},
              {"empirical_std_error", r.empirical_std_error},
              {"empirical_corollary_tail", num(r.empirical_corollary_tail)},
              {"empirical_tail", num(r.empirical_tail)},
              {"monte_carlo", to_string(r.monte_carlo)},
              {"theorem1", to_string(r.theorem1)},
              {"r3", to_string(r.r3)},
              {"corollary", to_string(r.corollary)},
              {"tail", to_string(r.tail)},
              {"passed", r.passed()}};
}

inline const char* filter_csv_header() {
  return "p,q,r,delta,theta,trials,exact_expectation,theorem1_bound,r3_bound,corollary_threshold,"
         "tail_bound,empirical_mean,empirical_std_error,empirical_corollary_tail,empirical_tail,"
         "monte_carlo,theorem1,r3,corollary,tail,passed";
}

// Skipped bounds (NaN) become empty fields.
inline std::string to_csv_row(const FilterBoundReport& r) {
  auto num = [](double x) { return std::isnan(x) ? std::string() : format_double(x); };
  std::ostringstream s;
  s << r.p << ',' << r.q << ',' << r.r << ',' << num(r.delta) << ',' << num(r.theta) << ',' << r.trials << ','
    << num(r.exact_expectation) << ',' << num(r.theorem1_bound) << ',' << num(r.r3_bound) << ','
    << num(r.corollary_threshold) << ',' << num(r.tail_bound) << ',' << num(r.empirical_mean) << ','
    << num(r.empirical_std_error) << ',' << num(r.empirical_corollary_tail) << ',' << num(r.empirical_tail) << ','
    << to_string(r.monte_carlo) << ',' << to_string(r.theorem1) << ',' << to_string(r.r3) << ','
    << to_string(r.corollary) << ',' << to_string(r.tail) << ',' << (r.passed() ? "true" : "false");
  return s.str();
}

// Failed checks of one row, named "<check> at p=..,q=..,r=..,delta=..,theta=..".
inline std::vector<std::string> violations(const FilterBoundReport& r) {
  std::vector<std::string> out;
  const std::string at = " at p=" + std::to_string(r.p) + ",q=" + std::to_string(r.q) + ",r=" +
                         std::to_string(r.r) + ",delta=" + format_double(r.delta) +
                         ",theta=" + format_double(r.theta);
  const std::pair<const char*, CheckStatus> checks[] = {{"monte_carlo", r.monte_carlo},
                                                        {"theorem1", r.theorem1},
                                                        {"r3", r.r3},
                                                        {"corollary", r.corollary},
                                                        {"tail", r.tail}};
  for (const auto& [name, st] : checks)
    if (st == CheckStatus::violated) out.push_back(name + at);
  return out;
}

// Wall-clock fields are left out so that output depends only on the config.
inline json to_json(const IterationRecord& it) {
  return json{{"t", it.t}, {"loss", it.loss}, {"delta", it.delta}, {"q_hat", it.q_hat}};
}

inline const char* iteration_csv_header() { return "t,loss,delta,q_hat"; }

inline std::string to_csv_row(const IterationRecord& it) {
  return std::to_string(it.t) + ',' + format_double(it.loss) + ',' + format_double(it.delta) + ',' +
         std::to_string(it.q_hat);
}

inline json to_json(const EstimatorError& e) {
  return json{{"estimator", to_string(e.estimator)}, {"error", e.error}, {"q_hat", e.q_hat}};
}

inline const char* estimator_csv_header() { return "estimator,error,q_hat"; }

inline std::string to_csv_row(const EstimatorError& e) {
  return std::string(to_string(e.estimator)) + ',' + format_double(e.error) + ',' + std::to_string(e.q_hat);
}

inline json to_json(const TimingRow& t) { return json{{"p", t.p}, {"median_seconds", t.median_seconds}}; }

inline const char* timing_csv_header() { return "p,median_seconds"; }

inline std::string to_csv_row(const TimingRow& t) {
  return std::to_string(t.p) + ',' + format_double(t.median_seconds);
}

}  // namespace detox
