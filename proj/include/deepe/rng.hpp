#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace deepe {

// Seeded generator owned by the caller; there is no global RNG.
//
// The engine is mt19937_64, whose output sequence is fixed by the standard.
// Uniform/normal/integer draws are implemented here instead of using the
// <random> distributions because those are implementation-defined, and the
// manifest promises byte-for-byte reruns.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller; caches the second variate.
  double normal();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Child generator for an independent stream. Does not advance *this.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Fisher-Yates; std::shuffle's exact permutation is not portable.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace deepe
