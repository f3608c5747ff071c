#pragma once

// Seedable randomness for the whole workbench.
//
// Every stochastic component draws from an Rng obtained by deriving a child
// seed from the run's root seed. The derivation rule is fixed and documented
// here so that independent streams (per sequence, per ensemble member, per
// cycle, ...) can be reproduced in isolation:
//
//   child = splitmix64(base ^ splitmix64(tag ^ GOLDEN * (index + 1)))
//
// where GOLDEN = 0x9E3779B97F4A7C15. Streams are named by the Stream tag
// below plus an index (sequence number, member id, cycle, ...).

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace camell {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class Stream : std::uint64_t {
  task_structure = 1,  // transition matrix, embeddings, category maps
  sequence = 2,        // per-sequence generation
  seed_selection = 3,  // initial labelled-pool draw
  expert = 4,          // simulated annotator answers, per cycle
  member = 5,          // ensemble member init + shuffling
  estimator = 6,       // confidence-estimator fitting
  noisygen = 7,        // noisy-dataset generation, per cycle
  selection = 8,       // acquisition randomness, per cycle
  bootstrap = 9,       // resampling for confidence intervals
  dev_noise = 10,      // simulated expert answers on the dev split
  run = 11,            // per-seed replication in multi-seed mode
  reference = 12,      // full-data reference model
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::uint64_t index = 0) {
  constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t tag =
      splitmix64(static_cast<std::uint64_t>(stream) ^ (kGolden * (index + 1)));
  return splitmix64(base ^ tag);
}

// Thin wrapper around mt19937_64 with explicit draw primitives. The
// distributions are implemented here rather than via <random> adaptors so a
// stream's consumption is exactly one engine call per draw (two for normals).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;  // modulo guards the uniform()==1-ulp edge
  }

  // Standard normal via Box-Muller, no cached second draw.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

  // Index draw from unnormalised non-negative weights.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace camell
