#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedsim {

namespace detail {

// SplitMix64 step; used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic random stream. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard); every distribution is implemented here
// rather than with <random> distribution classes, whose output is
// implementation-defined and would not reproduce across standard libraries.
//
// Streams are hierarchical: derive(k) yields an independent child stream, so
// per-client / per-round generators never depend on scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    engine_.seed(detail::splitmix64(s));
  }

  // Independent child stream identified by `stream`; pure in (seed, stream).
  Rng derive(std::uint64_t stream) const {
    std::uint64_t s = seed_ ^ (0x632BE59BD9B4E019ULL * (stream + 1));
    std::uint64_t mixed = detail::splitmix64(s);
    mixed = detail::splitmix64(s);  // second round decorrelates nearby streams
    return Rng(mixed);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = 1.0 - uniform();  // (0, 1]
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = 1.0 - uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Dirichlet over the given concentration vector. Entries that fail to draw
  // a positive mass (possible for very small concentrations) stay at zero; an
  // all-zero draw falls back to the normalized concentrations.
  std::vector<double> dirichlet(const std::vector<double>& concentration) {
    std::vector<double> out(concentration.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < concentration.size(); ++i) {
      if (concentration[i] > 0.0) {
        out[i] = gamma(concentration[i]);
        total += out[i];
      }
    }
    if (total <= 0.0) {
      double csum = 0.0;
      for (double a : concentration) csum += a;
      if (csum <= 0.0) return out;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = concentration[i] / csum;
      return out;
    }
    for (double& v : out) v /= total;
    return out;
  }

  // Fisher-Yates; std::shuffle is implementation-defined and not used.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace fedsim
