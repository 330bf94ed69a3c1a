#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dgmeval {

// SplitMix64 finalizer; used as the counter-based seed splitter.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for substream `index` of `stream` under `master`. Independent of
// scheduling: any worker can derive any substream directly.
constexpr std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) noexcept {
  return mix64(master ^ mix64(stream * 0x632be59bd9b4e019ULL + mix64(index)));
}

// Stream tags for split_seed.
namespace streams {
inline constexpr std::uint64_t label_map = 1;
inline constexpr std::uint64_t intensity = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t artifact = 4;
inline constexpr std::uint64_t subset = 5;
inline constexpr std::uint64_t bootstrap = 6;
inline constexpr std::uint64_t pairs = 7;
inline constexpr std::uint64_t mean_image = 8;
}  // namespace streams

// Portable generator: mt19937_64 bits with distribution code written here,
// since std:: distributions are implementation-defined.
class rng {
 public:
  explicit rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0,1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform in (0,1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dgmeval
