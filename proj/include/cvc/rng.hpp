#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cvc {

/// Seeded generator shared by every stochastic step (init, crops, shuffles,
/// patch sampling). Its state is serialized into checkpoints.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// k distinct indices from [0, n), uniformly, via partial Fisher-Yates.
std::vector<int> sample_without_replacement(Rng& rng, int n, int k);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace cvc
