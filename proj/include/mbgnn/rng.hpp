#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace mbgnn {

// splitmix64 finalizer. All randomness in the system is derived from this
// mixer so that any draw is a pure function of its key tuple.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Domain tags keep independent consumers of the same root seed decorrelated.
namespace rng_domain {
constexpr std::uint64_t kOwner = 0x01;
constexpr std::uint64_t kSeeds = 0x02;
constexpr std::uint64_t kSample = 0x03;
constexpr std::uint64_t kDropout = 0x04;
constexpr std::uint64_t kWeights = 0x05;
constexpr std::uint64_t kSbm = 0x06;
constexpr std::uint64_t kEval = 0x07;
}  // namespace rng_domain

// Folds a key tuple into a 64-bit stream key.
inline std::uint64_t rng_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t k = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t p : parts) k = mix64(k ^ p);
  return k;
}

// Counter-based stream: draw i is mix64(key ^ mix64(i)), so draws are
// random-access and independent of evaluation order or batching.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}
  RngStream(std::initializer_list<std::uint64_t> parts) : key_(rng_key(parts)) {}

  std::uint64_t at(std::uint64_t i) const { return mix64(key_ ^ mix64(i)); }

  std::uint64_t next_u64() { return at(counter_++); }

  // Uniform in [0, bound). Modulo bias is negligible at desk-scale bounds.
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Standard normal via Box-Muller (uses two draws).
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Seeded Fisher-Yates. Deterministic for a fixed key.
template <typename T>
void shuffle_with_key(std::vector<T>& v, std::uint64_t key) {
  RngStream rng(key);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mbgnn
