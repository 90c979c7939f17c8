#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace gmml {

/// Counter-based random stream. Output i of a stream is a pure function of
/// (key, i), so streams can be split into independent substreams without
/// sharing state. Keys are derived from (seed, purpose tag) so that data
/// generation, batch shuffling and episode sampling never alias.
///
/// All distributions are implemented here rather than through <random>
/// distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed, std::string_view purpose);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }
  std::uint64_t next();

  /// Independent child stream; does not advance this stream.
  Rng substream(std::uint64_t index) const;

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t index(std::uint64_t bound);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace gmml
