// SPDX-License-Identifier: Apache-2.0
//
// Seed derivation and random streams.
//
// Every random quantity in a run is drawn from a stream whose seed is
// derive_seed(master, stream, index): a splitmix64 hash chain over the three
// integers. Streams therefore never overlap by construction and any single
// run can be replayed from (master, stream, index) alone.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rnnopt {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream identifiers used by the library. Values are part of the
/// reproducibility contract; do not renumber.
enum class StreamId : std::uint64_t {
  TrainFunction = 1,   // GP sample drawn for a training rollout
  TrainRuntime = 2,    // simulated worker runtimes during training
  Init = 3,            // policy parameter initialisation
  Objective = 4,       // held-out objective instance (harness)
  Optimizer = 5,       // optimizer-internal randomness (harness)
  Validation = 6,      // held-out validation functions
  Runtime = 7,         // simulated worker runtimes at inference
};

constexpr std::uint64_t derive_seed(std::uint64_t master, StreamId stream,
                                    std::uint64_t index = 0) noexcept {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ index);
}

/// 64-bit FNV-1a, used for config hashes in run manifests.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  /// Uniform integer on [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace rnnopt
