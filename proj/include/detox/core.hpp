#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace detox {

// Dense gradient-space vector. Every aggregation rule consumes and produces these.
using GradVec = std::vector<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DETOX_DEFINE_ERROR(Name)                \
  class Name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
  };

DETOX_DEFINE_ERROR(DivisibilityError)
DETOX_DEFINE_ERROR(ParityError)
DETOX_DEFINE_ERROR(ByzantineRatioError)
DETOX_DEFINE_ERROR(EmptyInput)
DETOX_DEFINE_ERROR(DimensionMismatch)
DETOX_DEFINE_ERROR(NonFiniteInput)
DETOX_DEFINE_ERROR(TrimTooLarge)
DETOX_DEFINE_ERROR(TooFewVectors)
DETOX_DEFINE_ERROR(BadM)
DETOX_DEFINE_ERROR(BadParameter)
DETOX_DEFINE_ERROR(PreconditionViolated)
DETOX_DEFINE_ERROR(BadDelta)
DETOX_DEFINE_ERROR(ConfigError)
DETOX_DEFINE_ERROR(ParseError)

#undef DETOX_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Small vector helpers
// ---------------------------------------------------------------------------

inline std::size_t common_dim(std::span<const GradVec> vs) {
  if (vs.empty()) throw EmptyInput("aggregator received no vectors");
  const std::size_t d = vs.front().size();
  for (const auto& v : vs)
    if (v.size() != d)
      throw DimensionMismatch("expected dimension " + std::to_string(d) + ", got " +
                              std::to_string(v.size()));
  return d;
}

// Rejects NaN/Inf at ingestion.
inline void require_finite(std::span<const GradVec> vs) {
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (double x : vs[i])
      if (!std::isfinite(x)) throw NonFiniteInput("non-finite entry in vector " + std::to_string(i));
}

inline double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(sq_distance(a, b));
}

inline GradVec subtract(const GradVec& a, const GradVec& b) {
  GradVec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline GradVec add(const GradVec& a, const GradVec& b) {
  GradVec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline GradVec scaled(const GradVec& a, double s) {
  GradVec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

}  // namespace detox
