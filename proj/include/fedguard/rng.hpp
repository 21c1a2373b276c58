#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fedguard::rng {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

// FNV-1a over a tag string; used to key derived substreams.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic splitmix64 stream. Substreams derived from the same seed
// with distinct (tag, a, b) tuples are statistically independent, which is
// what makes runs reproducible regardless of worker-thread scheduling.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  static Stream derive(std::uint64_t seed, std::string_view tag,
                       std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = mix64(seed ^ hash_tag(tag));
    s = mix64(s ^ (a + 0x9e3779b97f4a7c15ULL));
    s = mix64(s ^ (b + 0x7f4a7c159e3779b9ULL));
    return Stream(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kTwoPi * u2);
  }

  // Uniform integer in [0, n) via multiply-shift.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Seeded draw of k distinct values from [0, n): the first k entries of a
  // partial Fisher-Yates shuffle.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    const int take = k < n ? k : n;
    for (int i = 0; i < take; ++i) {
      int j = i + static_cast<int>(next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(take));
    return idx;
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  std::uint64_t state_;
};

}  // namespace fedguard::rng
