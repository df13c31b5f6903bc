#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <initializer_list>
#include <random>
#include <string_view>

namespace banditlab {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// 64-bit FNV-1a; used for config hashes and purpose tags.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent seed from a base seed and a list of stream
/// coordinates (policy index, seed index, ...). The purpose tag keeps e.g. the
/// context stream and the policy stream of the same run apart.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose,
                                 std::initializer_list<std::uint64_t> coords = {}) {
  std::uint64_t h = detail::splitmix64(base ^ fnv1a(purpose));
  for (auto c : coords) h = detail::splitmix64(h ^ detail::splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::string_view purpose,
                    std::initializer_list<std::uint64_t> coords = {}) {
  return Rng(derive_seed(base, purpose, coords));
}

/// Uniform real in [0, 1). std::uniform_real_distribution is avoided in
/// places where cross-library bit reproducibility matters.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

/// Box-Muller standard normal.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Draws an index with probability proportional to `weights` (non-negative,
/// positive total).
inline std::size_t draw_weighted(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

}  // namespace banditlab
