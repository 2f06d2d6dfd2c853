#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace syntempo {

// Seeded RNG with fully pinned-down derived draws. std::mt19937_64's output
// sequence is specified by the standard; the bounded/real/shuffle helpers
// below avoid std::uniform_*_distribution, whose exact algorithm is
// implementation-defined, so identical seeds give identical streams on any
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound), bound >= 1. Rejection sampling on the
  // low bits keeps the draw exactly uniform.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [-scale, scale).
  double next_symmetric(double scale) {
    return (2.0 * next_unit() - 1.0) * scale;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // n distinct indices drawn uniformly from [0, pool); order is the draw
  // order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n);

  // Generator with a decorrelated seed derived from this one's construction
  // seed; gives each sample / subsystem its own stream.
  Rng fork(std::uint64_t salt) const {
    return Rng(mix64(seed_ ^ mix64(salt ^ 0x9e3779b97f4a7c15ull)));
  }

  std::uint64_t seed() const { return seed_; }

  // SplitMix64 finalizer; also usable as a standalone hash step.
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// FNV-1a over bytes; the base content hash used for strings and tensors.
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t seed = 0xcbf29ce484222325ull);

// Deterministic hash of a string into [0, 1).
double hash_unit(const std::string& s, std::uint64_t seed);

}  // namespace syntempo
