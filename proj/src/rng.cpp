#include "syntempo/rng.hpp"

namespace syntempo {

std::vector<std::size_t> Rng::sample_indices(std::size_t pool, std::size_t n) {
  std::vector<std::size_t> ids(pool);
  for (std::size_t i = 0; i < pool; ++i) ids[i] = i;
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n && i < pool; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(next_below(pool - i));
    std::swap(ids[i], ids[j]);
    out.push_back(ids[i]);
  }
  return out;
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

double hash_unit(const std::string& s, std::uint64_t seed) {
  const std::uint64_t h = Rng::mix64(fnv1a(s.data(), s.size()) ^ seed);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace syntempo
