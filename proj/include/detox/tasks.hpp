#pragma once

// Synthetic learning problems with closed-form full gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detox/core.hpp"
#include "detox/rng.hpp"

namespace detox {

enum class TaskKind { linear_regression, logistic_regression, mean_estimation };

inline constexpr std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::linear_regression: return "linear_regression";
    case TaskKind::logistic_regression: return "logistic_regression";
    case TaskKind::mean_estimation: return "mean_estimation";
  }
  return "?";
}

struct TaskSpec {
  TaskKind kind = TaskKind::linear_regression;
  int d = 10;
  int n = 1000;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Empirical risk F(w) = (1/n) sum_i f_i(w) over a generated dataset.
class Task {
 public:
  virtual ~Task() = default;

  std::size_t size() const { return n_; }
  int dim() const { return d_; }
  std::span<const double> features(std::size_t i) const {
    return {x_.data() + i * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
  }
  const GradVec& generating_weights() const { return w_star_; }

  // Mean of per-sample gradients, accumulated in the order given.
  GradVec gradient_mean(const GradVec& w, std::span<const std::size_t> samples) const {
    GradVec g(static_cast<std::size_t>(d_), 0.0);
    for (auto i : samples) accumulate_gradient(w, i, g);
    const double m = static_cast<double>(samples.size());
    for (auto& v : g) v /= m;
    return g;
  }

  GradVec full_gradient(const GradVec& w) const {
    GradVec g(static_cast<std::size_t>(d_), 0.0);
    for (std::size_t i = 0; i < n_; ++i) accumulate_gradient(w, i, g);
    for (auto& v : g) v /= static_cast<double>(n_);
    return g;
  }

  double loss(const GradVec& w) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += sample_loss(w, i);
    return s / static_cast<double>(n_);
  }

  // Total variance of per-sample gradients at w: (1/n) sum_i |grad f_i - G|^2.
  double gradient_variance(const GradVec& w) const {
    const GradVec G = full_gradient(w);
    double s = 0.0;
    GradVec g(static_cast<std::size_t>(d_));
    for (std::size_t i = 0; i < n_; ++i) {
      std::fill(g.begin(), g.end(), 0.0);
      accumulate_gradient(w, i, g);
      s += sq_distance(g, G);
    }
    return s / static_cast<double>(n_);
  }

  GradVec initial_model() const { return GradVec(static_cast<std::size_t>(d_), 0.0); }

  virtual double sample_loss(const GradVec& w, std::size_t i) const = 0;
  // g += grad f_i(w)
  virtual void accumulate_gradient(const GradVec& w, std::size_t i, GradVec& g) const = 0;

 protected:
  Task(int d, std::size_t n) : d_(d), n_(n), x_(n * static_cast<std::size_t>(d)) {}

  double dot_row(const GradVec& w, std::size_t i) const {
    const double* row = x_.data() + i * static_cast<std::size_t>(d_);
    double s = 0.0;
    for (int c = 0; c < d_; ++c) s += row[c] * w[static_cast<std::size_t>(c)];
    return s;
  }

  int d_;
  std::size_t n_;
  std::vector<double> x_;  // row-major n x d
  std::vector<double> y_;
  GradVec w_star_;
};

// f_i(w) = (x_i.w - y_i)^2 / 2, y_i = x_i.w* + sigma * noise.
class LinearRegressionTask final : public Task {
 public:
  LinearRegressionTask(int d, std::size_t n, double noise_sigma, RngStream rng) : Task(d, n) {
    w_star_.resize(static_cast<std::size_t>(d));
    for (auto& v : w_star_) v = rng.normal();
    for (auto& v : x_) v = rng.normal();
    y_.resize(n);
    for (std::size_t i = 0; i < n; ++i) y_[i] = dot_row(w_star_, i) + noise_sigma * rng.normal();
  }

  double sample_loss(const GradVec& w, std::size_t i) const override {
    const double r = dot_row(w, i) - y_[i];
    return 0.5 * r * r;
  }
  void accumulate_gradient(const GradVec& w, std::size_t i, GradVec& g) const override {
    const double r = dot_row(w, i) - y_[i];
    const auto x = features(i);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += r * x[c];
  }
};

// Labels y_i = 1[x_i.w* + sigma * noise > 0] in {0, 1}; f_i is the logistic loss.
class LogisticRegressionTask final : public Task {
 public:
  LogisticRegressionTask(int d, std::size_t n, double noise_sigma, RngStream rng) : Task(d, n) {
    w_star_.resize(static_cast<std::size_t>(d));
    for (auto& v : w_star_) v = rng.normal();
    for (auto& v : x_) v = rng.normal();
    y_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      y_[i] = dot_row(w_star_, i) + noise_sigma * rng.normal() > 0.0 ? 1.0 : 0.0;
  }

  double sample_loss(const GradVec& w, std::size_t i) const override {
    const double m = margin(w, i);
    // log(1 + exp(-m)), stable for large |m|
    return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  void accumulate_gradient(const GradVec& w, std::size_t i, GradVec& g) const override {
    const double s = 2.0 * y_[i] - 1.0;
    const double m = s * dot_row(w, i);
    const double coef = -s / (1.0 + std::exp(m));  // -s * sigmoid(-m)
    const auto x = features(i);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += coef * x[c];
  }

 private:
  double margin(const GradVec& w, std::size_t i) const { return (2.0 * y_[i] - 1.0) * dot_row(w, i); }
};

// Samples x_i ~ N(0, I_d); f_i(w) = |w - x_i|^2 / 2, so grad f_i(w) = w - x_i.
class MeanEstimationTask final : public Task {
 public:
  MeanEstimationTask(int d, std::size_t n, RngStream rng) : Task(d, n) {
    w_star_.assign(static_cast<std::size_t>(d), 0.0);
    for (auto& v : x_) v = rng.normal();
  }

  double sample_loss(const GradVec& w, std::size_t i) const override {
    return 0.5 * sq_distance(w, features(i));
  }
  void accumulate_gradient(const GradVec& w, std::size_t i, GradVec& g) const override {
    const auto x = features(i);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += w[c] - x[c];
  }
};

inline std::unique_ptr<Task> gen_task(const TaskSpec& spec) {
  if (spec.d < 1 || spec.n < 1) throw BadParameter("task needs d >= 1 and n >= 1");
  if (!(spec.noise_sigma >= 0.0)) throw BadParameter("noise_sigma must be >= 0");
  const RngStream rng = split_rng(spec.seed, "task");
  const auto n = static_cast<std::size_t>(spec.n);
  switch (spec.kind) {
    case TaskKind::linear_regression:
      return std::make_unique<LinearRegressionTask>(spec.d, n, spec.noise_sigma, rng);
    case TaskKind::logistic_regression:
      return std::make_unique<LogisticRegressionTask>(spec.d, n, spec.noise_sigma, rng);
    case TaskKind::mean_estimation:
      return std::make_unique<MeanEstimationTask>(spec.d, n, rng);
  }
  throw BadParameter("unknown task kind");
}

}  // namespace detox
