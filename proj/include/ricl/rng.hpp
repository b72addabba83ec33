#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace ricl {

/// Stream tags used when deriving substreams. The numeric values are part of
/// the reproducibility contract: changing one changes every trace.
enum class StreamTag : std::uint64_t {
  kTaskSampling = 1,
  kFeatures = 2,
  kVictim = 3,
  kEnvironment = 4,
  kContamination = 5,
  kAttack = 6,
  kTraining = 7,
  kPretrainData = 8,
  kInit = 9,
  kQuery = 10,
  kEvaluation = 11,
  kUniformAttack = 12,
};

/// 64-bit avalanche mix (splitmix64 finalizer).
/// z += 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
/// z = (z ^ z>>27) * 0x94D049BB133111EB; z ^= z>>31.
std::uint64_t mix64(std::uint64_t z);

/// Substream seed = mix64(mix64(mix64(mix64(seed) ^ task) ^ round) ^ tag).
std::uint64_t substream_seed(std::uint64_t experiment_seed, std::uint64_t task_index,
                             std::uint64_t round_index, StreamTag tag);

/// Seeded random stream. The engine is std::mt19937_64, whose output sequence
/// is fixed by the standard; the distribution transforms are implemented here so
/// that traces do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static Rng substream(std::uint64_t experiment_seed, std::uint64_t task_index,
                       std::uint64_t round_index, StreamTag tag) {
    return Rng(substream_seed(experiment_seed, task_index, round_index, tag));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n) by rejection on the top bits.
  std::size_t index(std::size_t n);
  /// Sample from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ricl
