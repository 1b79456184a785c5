// detox_cli: runs filtering analysis, training, mean estimation, timing and
// standalone aggregation from JSON configs.
//
// Exit status: 0 when every declared check passes, 1 when a check fails,
// 2 on usage, config or input errors.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "detox/detox.hpp"

#ifndef DETOX_VERSION
#define DETOX_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace detox;

namespace {

constexpr int kChecksFailed = 1;
constexpr int kUsageError = 2;

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::string format = "json";
};

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
  auto* opt = app->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  if (needs_config) opt->required();
  app->add_option("--out", c.out_dir, "output directory (created if missing)");
  app->add_option("--seed", c.seed, "override the config seed");
  app->add_option("--format", c.format, "csv or json; the JSON summary is always written")
      ->check(CLI::IsMember({"csv", "json"}));
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

json envelope(const char* command, const json& config, std::uint64_t seed) {
  return json{{"command", command}, {"version", DETOX_VERSION}, {"seed", seed}, {"config", config}};
}

// Writes <name>.json always and <name>.csv when asked. The CSV starts with
// a '#' line echoing the summary envelope.
int emit(const Common& c, const std::string& name, json summary, const json& rows, const char* csv_header,
         const std::vector<std::string>& csv_rows, const std::vector<std::string>& failures) {
  summary["failures"] = failures;
  summary["passed"] = failures.empty();
  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  if (c.format == "csv") {
    std::string text = "# " + summary.dump() + "\n" + csv_header + "\n";
    for (const auto& r : csv_rows) text += r + "\n";
    write_file(dir / (name + ".csv"), text);
  }
  summary["rows"] = rows;
  write_file(dir / (name + ".json"), summary.dump(2) + "\n");
  for (const auto& f : failures) std::cerr << "check failed: " << f << "\n";
  return failures.empty() ? 0 : kChecksFailed;
}

template <typename T>
std::pair<json, std::vector<std::string>> project(const std::vector<T>& xs) {
  json rows = json::array();
  std::vector<std::string> csv;
  for (const auto& x : xs) {
    rows.push_back(to_json(x));
    csv.push_back(to_csv_row(x));
  }
  return {rows, csv};
}

// ---- subcommands ---------------------------------------------------------------

int cmd_filter_stats(const Common& c, std::optional<std::uint64_t> trials) {
  json j = load_json(c.config_path);
  if (c.seed) j["seed"] = *c.seed;
  if (trials) j["trials"] = *trials;
  const FilterGrid grid = filter_grid_from_json(j);

  std::vector<FilterBoundReport> rows;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    const auto& pt = grid.points[i];
    std::optional<QhatDistribution> mc;
    if (grid.trials > 0) mc = monte_carlo_qhat(pt.p, pt.q, pt.r, grid.trials, grid.seed + i, grid.threads);
    for (double delta : grid.deltas)
      for (double theta : grid.thetas) {
        rows.push_back(evaluate_grid_point(pt.p, pt.q, pt.r, delta, theta, mc ? &*mc : nullptr));
        for (auto& v : violations(rows.back())) failures.push_back(std::move(v));
      }
  }
  auto [js, csv] = project(rows);
  return emit(c, "filter_stats", envelope("filter-stats", to_json(grid), grid.seed), js, filter_csv_header(),
              csv, failures);
}

int cmd_train(const Common& c) {
  json j = load_json(c.config_path);
  if (c.seed && j.is_object() && j.contains("detox") && j["detox"].is_object()) j["detox"]["seed"] = *c.seed;
  const TrainConfig cfg = train_config_from_json(j);
  const auto task = gen_task(cfg.task);
  const RunRecord rec = run_training(cfg.detox, *task);

  std::vector<std::string> failures;
  if (!std::isfinite(rec.final_loss())) failures.push_back("final loss is not finite");
  json summary = envelope("train", to_json(cfg), cfg.detox.seed);
  summary["initial_loss"] = rec.initial_loss;
  summary["final_loss"] = rec.final_loss();
  summary["final_model"] = rec.final_model;
  summary["byzantine"] = rec.byzantine;
  auto [js, csv] = project(rec.iterations);
  return emit(c, "train", summary, js, iteration_csv_header(), csv, failures);
}

int cmd_mean_est(const Common& c) {
  json j = c.config_path.empty() ? json::object() : load_json(c.config_path);
  if (c.seed) j["seed"] = *c.seed;
  const MeanEstimationSpec spec = mean_estimation_spec_from_json(j);
  const auto rows = mean_estimation_experiment(spec);
  std::vector<std::string> failures;
  for (const auto& r : rows)
    if (!std::isfinite(r.error)) failures.push_back(std::string(to_string(r.estimator)) + " error is not finite");
  auto [js, csv] = project(rows);
  return emit(c, "mean_est", envelope("mean-est", to_json(spec), spec.seed), js, estimator_csv_header(), csv,
              failures);
}

int cmd_timing(const Common& c) {
  json j = load_json(c.config_path);
  if (c.seed) j["seed"] = *c.seed;
  const TimingSpec spec = timing_spec_from_json(j);
  auto [js, csv] = project(timing_probe(spec));
  return emit(c, "timing", envelope("timing", to_json(spec), spec.seed), js, timing_csv_header(), csv, {});
}

struct BoundsRow {
  BoundsQuery query;
  double value;
};

int cmd_bounds(const Common& c) {
  const auto queries = bounds_queries_from_json(load_json(c.config_path));
  json rows = json::array(), cfg = json::array();
  std::vector<std::string> csv;
  for (const auto& q : queries) {
    const double v = convergence_rate_bounds(q.kind, q.d, q.n, q.x, q.with_detox);
    json r = to_json(q);
    cfg.push_back(r);
    r["value"] = v;
    rows.push_back(r);
    csv.push_back(std::string(to_string(q.kind)) + ',' + std::to_string(q.d) + ',' + std::to_string(q.n) + ',' +
                  format_double(q.x) + ',' + (q.with_detox ? "true" : "false") + ',' + format_double(v));
  }
  return emit(c, "bounds", envelope("bounds", json{{"queries", cfg}}, c.seed.value_or(0)), rows,
              "kind,d,n,x,with_detox,value", csv, {});
}

struct AggregateArgs {
  std::string input;
  std::string kind = "mean";
  AggregatorSpec spec;
  std::string inner = "krum";
};

int cmd_aggregate(AggregateArgs a) {
  const auto kind = aggregator_kind_from_string(a.kind);
  const auto inner = aggregator_kind_from_string(a.inner);
  if (!kind) throw ConfigError("unknown aggregator '" + a.kind + "'");
  if (!inner) throw ConfigError("unknown inner aggregator '" + a.inner + "'");
  a.spec.kind = *kind;
  a.spec.inner = *inner;
  validate(a.spec);
  std::vector<GradVec> vs;
  if (a.input == "-") {
    vs = parse_vectors(std::cin);
  } else {
    std::ifstream in(a.input);
    if (!in) throw ConfigError("cannot open input '" + a.input + "'");
    vs = parse_vectors(in);
  }
  std::cout << format_vector(aggregate(a.spec, vs)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DETOX simulation and analysis tools"};
  app.set_version_flag("--version", std::string(DETOX_VERSION));
  app.require_subcommand(1);

  Common common;
  std::optional<std::uint64_t> trials;

  auto* fs_cmd = app.add_subcommand(
      "filter-stats",
      "exact and Monte Carlo checks of majority-vote filtering. Config: {points: [{p,q,r}], delta: [..], "
      "theta: [..], trials, seed, threads}. CSV columns: " + std::string(filter_csv_header()));
  add_common(fs_cmd, common);
  fs_cmd->add_option("--trials", trials, "override the Monte Carlo trial count");

  auto* train_cmd = app.add_subcommand(
      "train", "train on a synthetic task. Config: {detox: DetoxConfig, task: {kind, n, noise_sigma, seed}}. "
               "CSV columns: " + std::string(iteration_csv_header()));
  add_common(train_cmd, common);

  auto* me_cmd = app.add_subcommand(
      "mean-est", "robust mean estimation table. Config: {d, p, r, q, k, byz_norm, estimators, seed, geo_tol, "
                  "geo_max_iter}, all optional. CSV columns: " + std::string(estimator_csv_header()));
  add_common(me_cmd, common, false);

  auto* bounds_cmd = app.add_subcommand(
      "bounds", "order-of-magnitude error rates. Config: {queries: [{kind, d, n, x, with_detox}]}. "
                "CSV columns: kind,d,n,x,with_detox,value");
  add_common(bounds_cmd, common);

  auto* timing_cmd = app.add_subcommand(
      "timing", "aggregation-stage wall-clock. Config: {p_values, d, agg, detox, r, k, reps, warmups, seed}. "
                "Timings vary between runs. CSV columns: " + std::string(timing_csv_header()));
  add_common(timing_cmd, common);

  AggregateArgs agg;
  auto* agg_cmd = app.add_subcommand("aggregate", "aggregate vectors (one per line) and print the result");
  agg_cmd->add_option("--input", agg.input, "vector file, or - for stdin")->required();
  agg_cmd->add_option("--agg", agg.kind, "aggregator kind");
  agg_cmd->add_option("--q", agg.spec.q, "assumed Byzantine count (krum, multi_krum, bulyan)");
  agg_cmd->add_option("--m", agg.spec.m, "vectors averaged by multi_krum");
  agg_cmd->add_option("--alpha", agg.spec.alpha, "trim fraction per side (trimmed_mean)");
  agg_cmd->add_option("--inner", agg.inner, "bulyan selection rule");
  agg_cmd->add_option("--tol", agg.spec.tol, "geo_median tolerance");
  agg_cmd->add_option("--max-iter", agg.spec.max_iter, "geo_median iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (fs_cmd->parsed()) return cmd_filter_stats(common, trials);
    if (train_cmd->parsed()) return cmd_train(common);
    if (me_cmd->parsed()) return cmd_mean_est(common);
    if (bounds_cmd->parsed()) return cmd_bounds(common);
    if (timing_cmd->parsed()) return cmd_timing(common);
    if (agg_cmd->parsed()) return cmd_aggregate(agg);
  } catch (const detox::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}
