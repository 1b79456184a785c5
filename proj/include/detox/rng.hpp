#pragma once

#include <cstdint>
#include <limits>
#include <cstddef>
#include <string_view>
#include <utility>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace detox {

namespace rng_detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace rng_detail

// Counter-based stream: the n-th output is mix64(key + (n+1) * golden). Child
// streams are keyed by hashing the parent key with a label or an index, so
// any stream can be reproduced from (seed, path) alone, on any platform.
class RngStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit RngStream(std::uint64_t key = 0) : key_(key), counter_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    counter_ += rng_detail::kGolden;
    return rng_detail::mix64(counter_);
  }

  constexpr std::uint64_t key() const { return key_; }

  // Independent child stream named by `label`. Does not advance this stream.
  constexpr RngStream split(std::string_view label) const {
    return RngStream(rng_detail::mix64(key_ ^ rng_detail::mix64(rng_detail::fnv1a(label))));
  }

  // Independent child stream number `index` (e.g. one per trial).
  constexpr RngStream derive(std::uint64_t index) const {
    return RngStream(rng_detail::mix64(key_ + rng_detail::mix64(index + rng_detail::kGolden)));
  }

  std::size_t uniform_index(std::size_t n) {
    boost::random::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(*this);
  }

  double uniform01() { return boost::random::uniform_01<double>()(*this); }

  double normal(double mean = 0.0, double sigma = 1.0) {
    boost::random::normal_distribution<double> dist(mean, sigma);
    return dist(*this);
  }

  // Fisher-Yates; std::shuffle is not portable across standard libraries.
  template <typename RandomAccessRange>
  void shuffle(RandomAccessRange& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      using std::swap;
      swap(xs[i - 1], xs[j]);
    }
  }

  friend constexpr bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

inline RngStream split_rng(std::uint64_t seed, std::string_view stream_label) {
  return RngStream(rng_detail::mix64(seed)).split(stream_label);
}

}  // namespace detox
