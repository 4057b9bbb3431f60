#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace smered {

/// 64-bit Mersenne Twister with explicit streams.
///
/// The engine is seeded from a std::seed_seq built from the 64-bit seed and a
/// 64-bit stream index, so chain c of a run with seed s uses Rng(s, c). Streams
/// for different (seed, stream) pairs are statistically independent for all
/// practical purposes. Output is deterministic on a given platform; the
/// distribution helpers are built on libstdc++ distributions and are not
/// guaranteed bit-identical across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }
  bool coin() { return (engine_() >> 63) != 0; }

  double gamma(double shape);
  double beta(double a, double b);

  /// Dirichlet draw into `out`. Shapes below one are drawn in log space so
  /// that tiny concentrations never collapse to an all-zero vector.
  void dirichlet(std::span<const double> alpha, std::span<double> out);

  /// Index drawn with probability proportional to `weights` (nonnegative,
  /// positive sum).
  std::size_t categorical(std::span<const double> weights);

  /// Index drawn from an inclusive prefix-sum table (last entry = total).
  std::size_t categorical_cumulative(std::span<const double> cumulative);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace smered
