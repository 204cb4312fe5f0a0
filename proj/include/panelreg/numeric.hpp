#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>

namespace panelreg {

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }

  void merge(const CompensatedSum& other) {
    add(other.sum);
    comp += other.comp;
  }

  double value() const { return sum + comp; }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_hash(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t double_bits(double x) { return std::bit_cast<std::uint64_t>(x); }

// Maps a double onto an unsigned integer whose natural order is the IEEE
// total order. Equal images iff equal bit patterns.
inline std::uint64_t total_order_bits(double x) {
  const std::uint64_t b = double_bits(x);
  return (b & 0x8000000000000000ULL) ? ~b : (b | 0x8000000000000000ULL);
}

inline std::uint64_t hash_key(std::span<const double> key) {
  std::uint64_t h = 0x51ed270b27a5e1a3ULL ^ key.size();
  for (double v : key) {
    h = (h ^ double_bits(v)) * 0x9e3779b97f4a7c15ULL;
    h ^= h >> 29;
  }
  return splitmix64(h);
}

inline bool keys_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Lexicographic comparison under total_order_bits.
inline bool key_less(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size() < b.size() ? a.size() : b.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = total_order_bits(a[i]);
    const auto y = total_order_bits(b[i]);
    if (x != y) return x < y;
  }
  return a.size() < b.size();
}

}  // namespace panelreg
