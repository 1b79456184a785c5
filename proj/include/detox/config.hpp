#pragma once

// Experiment configuration: the validated DETOX parameters, attack model and
// step-size schedule, plus their JSON form.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "detox/aggregators.hpp"
#include "detox/core.hpp"

namespace detox {

using json = nlohmann::json;

enum class AttackKind { none, reverse_gradient, constant, alie };
enum class Placement { random_fixed, adversarial_grouped };
// Which honest gradients ALIE attackers may pool when estimating mean/std.
enum class AlieScope { byzantine_visible, all };

struct AttackSpec {
  AttackKind kind = AttackKind::none;
  double c = 1.0;
  double value = -1.0;
  double z = 1.0;
  Placement placement = Placement::random_fixed;
  AlieScope alie_scope = AlieScope::byzantine_visible;

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

// eta_t = eta * decay^(t mod period); `constant` ignores decay and period.
struct LrSchedule {
  enum class Kind { constant, geometric_periodic };
  Kind kind = Kind::constant;
  double eta = 0.1;
  double decay = 1.0;
  int period = 1;

  double at(std::uint64_t t) const {
    if (kind == Kind::constant) return eta;
    return eta * std::pow(decay, static_cast<double>(t % static_cast<std::uint64_t>(period)));
  }

  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

struct DetoxConfig {
  int p = 1;           // workers
  int q = 0;           // Byzantine workers
  int r = 1;           // redundancy ratio (odd)
  int b = 1;           // batch size
  int k = 1;           // vote-group size
  int d = 1;           // model dimension
  AggregatorSpec agg0{AggregatorKind::mean};
  AggregatorSpec agg1{AggregatorKind::coord_median};
  AttackSpec attack{};
  LrSchedule lr_schedule{};
  std::uint64_t seed = 0;
  int iterations = 1;

  int votes() const { return p / r; }
  int vote_groups() const { return votes() / k; }
  int sample_group_size() const { return r * b / p; }

  friend bool operator==(const DetoxConfig&, const DetoxConfig&) = default;
};

inline const DetoxConfig& validate_config(const DetoxConfig& cfg) {
  if (cfg.r < 1 || cfg.r % 2 == 0)
    throw ParityError("redundancy ratio r must be a positive odd integer (r=" +
                      std::to_string(cfg.r) + ")");
  if (cfg.p < 1) throw ConfigError("p must be >= 1");
  if (cfg.b < 1) throw ConfigError("b must be >= 1");
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.d < 1) throw ConfigError("d must be >= 1");
  if (cfg.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (cfg.p % cfg.r != 0)
    throw DivisibilityError("r=" + std::to_string(cfg.r) + " does not divide p=" +
                            std::to_string(cfg.p));
  if (cfg.b % cfg.p != 0)
    throw DivisibilityError("p=" + std::to_string(cfg.p) + " does not divide b=" +
                            std::to_string(cfg.b));
  if (cfg.votes() % cfg.k != 0)
    throw DivisibilityError("k=" + std::to_string(cfg.k) + " does not divide p/r=" +
                            std::to_string(cfg.votes()));
  if (cfg.q < 0 || 2 * cfg.q >= cfg.p)
    throw ByzantineRatioError("need 0 <= q < p/2 (p=" + std::to_string(cfg.p) +
                              ", q=" + std::to_string(cfg.q) + ")");
  validate(cfg.agg0);
  validate(cfg.agg1);
  if (!(cfg.attack.c > 0.0)) throw BadParameter("attack c must be positive");
  if (!std::isfinite(cfg.attack.value) || !std::isfinite(cfg.attack.z))
    throw BadParameter("attack value and z must be finite");
  if (cfg.lr_schedule.period < 1) throw BadParameter("lr period must be >= 1");
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace json_detail {

inline void require_object(const json& j, std::string_view what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed,
                           std::string_view what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown field '" + it.key() + "' in " + std::string(what));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
void read_req(const json& j, const char* key, T& out, std::string_view what) {
  if (!j.contains(key))
    throw ConfigError("missing field '" + std::string(key) + "' in " + std::string(what));
  read_opt(j, key, out);
}

}  // namespace json_detail

inline json to_json(const AggregatorSpec& s) {
  return json{{"kind", to_string(s.kind)}, {"alpha", s.alpha},       {"q", s.q},
              {"m", s.m},                  {"inner", to_string(s.inner)}, {"tol", s.tol},
              {"max_iter", s.max_iter}};
}

inline AggregatorSpec aggregator_spec_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "aggregator spec");
  reject_unknown(j, {"kind", "alpha", "q", "m", "inner", "tol", "max_iter"}, "aggregator spec");
  AggregatorSpec s;
  std::string kind, inner = "krum";
  read_req(j, "kind", kind, "aggregator spec");
  read_opt(j, "inner", inner);
  auto k = aggregator_kind_from_string(kind);
  if (!k) throw ConfigError("unknown aggregator kind '" + kind + "'");
  auto in = aggregator_kind_from_string(inner);
  if (!in) throw ConfigError("unknown inner aggregator kind '" + inner + "'");
  s.kind = *k;
  s.inner = *in;
  read_opt(j, "alpha", s.alpha);
  read_opt(j, "q", s.q);
  read_opt(j, "m", s.m);
  read_opt(j, "tol", s.tol);
  read_opt(j, "max_iter", s.max_iter);
  return s;
}

inline constexpr std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::reverse_gradient: return "reverse_gradient";
    case AttackKind::constant: return "constant";
    case AttackKind::alie: return "alie";
  }
  return "?";
}

inline constexpr std::string_view to_string(Placement p) {
  return p == Placement::random_fixed ? "random_fixed" : "adversarial_grouped";
}

inline constexpr std::string_view to_string(AlieScope s) {
  return s == AlieScope::byzantine_visible ? "byzantine_visible" : "all";
}

inline json to_json(const AttackSpec& a) {
  return json{{"kind", to_string(a.kind)}, {"c", a.c},
              {"value", a.value},          {"z", a.z},
              {"placement", to_string(a.placement)}, {"alie_scope", to_string(a.alie_scope)}};
}

inline AttackSpec attack_spec_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "attack spec");
  reject_unknown(j, {"kind", "c", "value", "z", "placement", "alie_scope"}, "attack spec");
  AttackSpec a;
  std::string kind = "none", placement = "random_fixed", scope = "byzantine_visible";
  read_opt(j, "kind", kind);
  read_opt(j, "placement", placement);
  read_opt(j, "alie_scope", scope);
  if (kind == "none") a.kind = AttackKind::none;
  else if (kind == "reverse_gradient") a.kind = AttackKind::reverse_gradient;
  else if (kind == "constant") a.kind = AttackKind::constant;
  else if (kind == "alie") a.kind = AttackKind::alie;
  else throw ConfigError("unknown attack kind '" + kind + "'");
  if (placement == "random_fixed") a.placement = Placement::random_fixed;
  else if (placement == "adversarial_grouped") a.placement = Placement::adversarial_grouped;
  else throw ConfigError("unknown placement '" + placement + "'");
  if (scope == "byzantine_visible") a.alie_scope = AlieScope::byzantine_visible;
  else if (scope == "all") a.alie_scope = AlieScope::all;
  else throw ConfigError("unknown alie_scope '" + scope + "'");
  read_opt(j, "c", a.c);
  read_opt(j, "value", a.value);
  read_opt(j, "z", a.z);
  return a;
}

inline json to_json(const LrSchedule& s) {
  return json{{"kind", s.kind == LrSchedule::Kind::constant ? "constant" : "geometric_periodic"},
              {"eta", s.eta},
              {"decay", s.decay},
              {"period", s.period}};
}

inline LrSchedule lr_schedule_from_json(const json& j) {
  using namespace json_detail;
  require_object(j, "lr_schedule");
  reject_unknown(j, {"kind", "eta", "decay", "period"}, "lr_schedule");
  LrSchedule s;
  std::string kind = "constant";
  read_opt(j, "kind", kind);
  if (kind == "constant") s.kind = LrSchedule::Kind::constant;
  else if (kind == "geometric_periodic") s.kind = LrSchedule::Kind::geometric_periodic;
  else throw ConfigError("unknown lr_schedule kind '" + kind + "'");
  read_opt(j, "eta", s.eta);
  read_opt(j, "decay", s.decay);
  read_opt(j, "period", s.period);
  return s;
}

inline json to_json(const DetoxConfig& c) {
  return json{{"p", c.p},
              {"q", c.q},
              {"r", c.r},
              {"b", c.b},
              {"k", c.k},
              {"d", c.d},
              {"agg0", to_json(c.agg0)},
              {"agg1", to_json(c.agg1)},
              {"attack", to_json(c.attack)},
              {"lr_schedule", to_json(c.lr_schedule)},
              {"seed", c.seed},
              {"iterations", c.iterations}};
}

// Parses and validates. p, q, r, b, k and d are required; the rest default.
inline DetoxConfig detox_config_from_json(const json& j) {
  using namespace json_detail;
  constexpr std::string_view what = "DetoxConfig";
  require_object(j, what);
  reject_unknown(j, {"p", "q", "r", "b", "k", "d", "agg0", "agg1", "attack", "lr_schedule", "seed",
                     "iterations"},
                 what);
  DetoxConfig c;
  read_req(j, "p", c.p, what);
  read_req(j, "q", c.q, what);
  read_req(j, "r", c.r, what);
  read_req(j, "b", c.b, what);
  read_req(j, "k", c.k, what);
  read_req(j, "d", c.d, what);
  if (j.contains("agg0")) c.agg0 = aggregator_spec_from_json(j.at("agg0"));
  if (j.contains("agg1")) c.agg1 = aggregator_spec_from_json(j.at("agg1"));
  if (j.contains("attack")) c.attack = attack_spec_from_json(j.at("attack"));
  if (j.contains("lr_schedule")) c.lr_schedule = lr_schedule_from_json(j.at("lr_schedule"));
  read_opt(j, "seed", c.seed);
  read_opt(j, "iterations", c.iterations);
  validate_config(c);
  return c;
}

}  // namespace detox
