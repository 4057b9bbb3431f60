#include "smered/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace smered {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : engine_(make_engine(seed, stream)) {}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

double Rng::beta(double a, double b) {
  double x = gamma(a);
  double y = gamma(b);
  if (x + y == 0.0) return a >= b ? 1.0 : 0.0;
  return x / (x + y);
}

void Rng::dirichlet(std::span<const double> alpha, std::span<double> out) {
  if (alpha.size() != out.size() || alpha.empty())
    throw std::invalid_argument("Rng::dirichlet: size mismatch");
  // log G(a) = log G(a + 1) + log(U) / a for a < 1
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < alpha.size(); ++m) {
    double a = alpha[m];
    if (!(a > 0.0)) throw std::invalid_argument("Rng::dirichlet: concentration must be positive");
    double lg;
    if (a < 1.0) {
      double u = uniform();
      while (u == 0.0) u = uniform();
      lg = std::log(gamma(a + 1.0)) + std::log(u) / a;
    } else {
      lg = std::log(gamma(a));
    }
    out[m] = lg;
    max_log = std::max(max_log, lg);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - max_log);
    total += v;
  }
  for (double& v : out) v /= total;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    if (weights[m] <= 0.0) continue;
    acc += weights[m];
    last_positive = m;
    if (u < acc) return m;
  }
  return last_positive;
}

std::size_t Rng::categorical_cumulative(std::span<const double> cumulative) {
  double u = uniform() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace smered
