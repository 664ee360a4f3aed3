#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace wsr {

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Derives an independent stream seed from a base seed and a key path:
// s = mix64(base); for each key k: s = mix64(s ^ mix64(k + 0x9E37...)).
// Used wherever a record, cell or epoch needs its own stream so that
// results do not depend on generation order.
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> keys) noexcept;

// Seeded random source. The engine is mt19937_64, whose output sequence is
// fixed by the standard; the variates below are computed here rather than
// with <random> distributions (whose algorithms are implementation-defined)
// so that runs reproduce across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  bool coin() { return (engine_() >> 63) != 0; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  // Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the
  // U^(1/shape) boost.
  double gamma(double shape);

  // Beta(a, b) = X / (X + Y), X ~ Gamma(a), Y ~ Gamma(b).
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace wsr
