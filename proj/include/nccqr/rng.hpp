#pragma once

#include <cstdint>
#include <limits>

namespace nccqr {

/// SplitMix64 generator.
///
/// state += 0x9E3779B97F4A7C15; z = state;
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
/// return z ^ (z >> 31);
///
/// uniform() takes the top 53 bits: (next() >> 11) * 2^-53, in [0, 1).
/// normal() is Box-Muller on (1 - uniform(), uniform()), caching the sine
/// branch for the following call. Both transforms are fixed here, so
/// streams do not depend on the standard library's distribution classes.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// Independent sub-seed for a named stream of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Stream tags used when one run seed fans out into several generators.
namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kTest = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kFolds = 6;
}  // namespace stream

}  // namespace nccqr
