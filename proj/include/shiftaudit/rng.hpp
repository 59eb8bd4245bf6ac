#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace shiftaudit {

/// Seeded pseudo-random source with platform-independent output.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// implements the uniform, index and normal transforms locally, because the
/// standard library distributions are implementation-defined. Independent
/// streams are derived from (seed, stream id) so resample r of a bootstrap
/// draws the same numbers regardless of which thread runs it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream `stream_id` of the family rooted at `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::size_t index(std::size_t n);

  /// Standard normal deviate (Box-Muller, second value cached).
  double normal();

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

  /// Identity permutation of [0, n) shuffled.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace shiftaudit
