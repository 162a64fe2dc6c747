#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace miup {

// splitmix64 finalizer, used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed derivation scheme: every stochastic component receives a child seed
//   derive_seed(root, stream, index) = splitmix64(splitmix64(root ^ mix(stream)) + index)
// so that (root, stream, index) fully determines the stream. Streams are
// small integer tags; indices count worlds, trials, steps, etc.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ splitmix64(stream)) + index);
}

// Stream tags used across the library. Values are arbitrary but fixed.
namespace streams {
constexpr std::uint64_t kInit = 1;      // parameter initialization
constexpr std::uint64_t kEpoch = 2;     // per-epoch batch shuffling
constexpr std::uint64_t kNoise = 3;     // DP noise
constexpr std::uint64_t kWorld = 4;     // per-world experiment streams
constexpr std::uint64_t kTrial = 5;     // per-trial challenge draws
constexpr std::uint64_t kShadow = 6;    // shadow-model construction
constexpr std::uint64_t kData = 7;      // dataset sampling
constexpr std::uint64_t kSelect = 8;    // mixture component selection
constexpr std::uint64_t kBatchCal = 9;  // threshold-calibration draws
}  // namespace streams

// Thin wrapper over a 64-bit Mersenne twister with the handful of draws the
// library needs. All randomness flows through explicit Rng values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  std::int64_t below(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace miup
