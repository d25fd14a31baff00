#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace cbrst {

// Simulation / wall time in integer nanoseconds.
using Nanos = std::int64_t;

constexpr Nanos kMicro = 1'000;
constexpr Nanos kMilli = 1'000'000;
constexpr Nanos kSecond = 1'000'000'000;

using Rng = std::mt19937_64;

// Uniform double in [0,1). Hand-rolled so results are identical across
// standard library implementations (std:: distributions are not portable).
inline double rand_u01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Lemire's multiply-shift; bias is < 2^-64 per
// draw, irrelevant at the sample sizes used here.
inline std::uint64_t rand_below(Rng& rng, std::uint64_t n) {
  using u128 = unsigned __int128;
  return static_cast<std::uint64_t>((static_cast<u128>(rng()) * n) >> 64);
}

// Exponential with the given mean, via inverse transform.
inline double rand_exponential(Rng& rng, double mean) {
  double u = rand_u01(rng);
  return -mean * std::log(1.0 - u);
}

// FNV-1a, used for config hashes and ECMP-style flow hashing.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_mix(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

// Dynamic bitset over packet indices [0, n). Supports the handful of GF(2)
// row operations the codec needs.
class IndexBitmap {
 public:
  IndexBitmap() = default;
  explicit IndexBitmap(std::size_t nbits)
      : nbits_(nbits), words_((nbits + 63) / 64, 0) {}

  std::size_t size() const { return nbits_; }

  void set(std::size_t i) { words_[i >> 6] |= (1ull << (i & 63)); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(1ull << (i & 63)); }
  bool test(std::size_t i) const {
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += std::popcount(w);
    return c;
  }

  bool any() const {
    for (auto w : words_)
      if (w) return true;
    return false;
  }
  bool none() const { return !any(); }

  // Index of the lowest set bit, or -1 when empty.
  int lowest_set() const {
    for (std::size_t w = 0; w < words_.size(); ++w)
      if (words_[w]) return static_cast<int>(w * 64 + std::countr_zero(words_[w]));
    return -1;
  }

  // Lowest set bit at index >= from, or -1.
  int next_set(std::size_t from) const {
    if (from >= nbits_) return -1;
    std::size_t w = from >> 6;
    std::uint64_t masked = words_[w] & (~0ull << (from & 63));
    if (masked) return static_cast<int>(w * 64 + std::countr_zero(masked));
    for (++w; w < words_.size(); ++w)
      if (words_[w]) return static_cast<int>(w * 64 + std::countr_zero(words_[w]));
    return -1;
  }

  IndexBitmap& operator^=(const IndexBitmap& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] ^= o.words_[i];
    return *this;
  }

  bool operator==(const IndexBitmap& o) const = default;

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    out.reserve(count());
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t v = words_[w];
      while (v) {
        out.push_back(w * 64 + std::countr_zero(v));
        v &= v - 1;
      }
    }
    return out;
  }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

 private:
  std::size_t nbits_ = 0;
  std::vector<std::uint64_t> words_;
};

// payload ^= other, sizes must match.
inline void xor_bytes(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src) {
  std::size_t i = 0;
  for (; i + 8 <= dst.size(); i += 8) {
    std::uint64_t a, b;
    __builtin_memcpy(&a, dst.data() + i, 8);
    __builtin_memcpy(&b, src.data() + i, 8);
    a ^= b;
    __builtin_memcpy(dst.data() + i, &a, 8);
  }
  for (; i < dst.size(); ++i) dst[i] ^= src[i];
}

}  // namespace cbrst
