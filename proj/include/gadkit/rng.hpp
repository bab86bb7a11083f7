/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/rng.hpp
 * \brief Counter-based random draws and the categorical sampling kernel.
 *
 *  Every draw is a pure function of (seed, iteration, step, attempt), so a
 *  run resumed from a saved trie replays exactly the draws of an
 *  uninterrupted run.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gadkit/errors.hpp"

namespace gadkit {

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(std::uint64_t iteration, std::uint64_t step, std::uint64_t attempt = 0) const {
    std::uint64_t h = mix(seed_);
    h = mix(h ^ iteration);
    h = mix(h ^ step);
    return mix(h ^ attempt);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform(std::uint64_t iteration, std::uint64_t step, std::uint64_t attempt = 0) const {
    return static_cast<double>(bits(iteration, step, attempt) >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

/*!
 * \brief Categorical draw proportional to non-negative weights, driven by a
 *  single uniform u in [0, 1). Zero-weight indices are never returned.
 * \throws InvariantError when all weights are zero.
 */
inline std::size_t ancestral_step(std::span<const double> weights, double u) {
  double total = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0 || std::isnan(weights[i])) throw InvariantError("negative sampling weight");
    if (weights[i] > 0.0) last_positive = i;
    total += weights[i];
  }
  if (!(total > 0.0)) throw InvariantError("all sampling weights are zero");
  const double target = u * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (weights[i] > 0.0 && target < acc) return i;
  }
  // Rounding can leave target == total; the last positive entry owns that edge.
  return last_positive;
}

/// Same as ancestral_step with weights given as logs (-inf for zero).
inline std::size_t ancestral_step_log(std::span<const double> log_weights, double u) {
  double hi = -INFINITY;
  for (double v : log_weights) hi = v > hi ? v : hi;
  if (hi == -INFINITY) throw InvariantError("all sampling weights are zero");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - hi);
  return ancestral_step(w, u);
}

}  // namespace gadkit
