#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace kmpc {

/// Deterministic random source. All distributions are implemented by hand on
/// top of the mt19937_64 bit stream so sequences are reproducible across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform();

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer on [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller; one spare value is cached per pair.
  double normal();

  double normal(double mean, double stddev);

  /// Mixes a base seed with a path of stream indices so independent streams
  /// (per episode, per purpose) can be re-created without storing generator
  /// state.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace kmpc
