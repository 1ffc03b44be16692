#ifndef BBADV_RNG_HPP
#define BBADV_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace bbadv {

/// Seeded PRNG wrapper. std::mt19937 itself is fully specified by the
/// standard; the distributions are not, so we implement our own bounded
/// draws to keep every seeded run reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32)};
    gen_.seed(seq);
  }

  std::uint32_t next() { return gen_(); }

  /// Unbiased integer in [0, n) via rejection.
  std::uint32_t below(std::uint32_t n) {
    if (n == 0) return 0;
    const std::uint32_t limit = UINT32_MAX - UINT32_MAX % n;
    std::uint32_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double unit() {
    const std::uint64_t hi = gen_() >> 5;   // 27 bits
    const std::uint64_t lo = gen_() >> 6;   // 26 bits
    return static_cast<double>((hi << 26) | lo) * (1.0 / 9007199254740992.0);
  }

  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

  /// k distinct values from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n,
                                                        std::uint32_t k) {
    if (k > n) k = n;
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::uint32_t> out(k);
    for (std::uint32_t i = 0; i < k; ++i) {
      const std::uint32_t j = i + below(n - i);
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937 gen_;
};

/// splitmix64 finalizer; used to derive independent per-item seeds from a
/// run seed without correlation between neighboring indices.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace bbadv

#endif
