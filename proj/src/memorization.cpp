#include "dgmeval/memorization.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/parallel.hpp"
#include "dgmeval/rng.hpp"
#include "dgmeval/segmentation.hpp"

namespace dgmeval {

namespace {

// Intersection count over the words listed in `idx`. The popcnt build is
// selected at run time so the library needs no special compile flags.
std::size_t and_count_generic(const std::uint32_t* idx, std::size_t n, const std::uint64_t* a, const std::uint64_t* b) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += static_cast<std::size_t>(std::popcount(a[idx[i]] & b[idx[i]]));
  return c;
}

#if defined(__x86_64__) && defined(__GNUC__)
__attribute__((target("popcnt"))) std::size_t and_count_popcnt(const std::uint32_t* idx, std::size_t n,
                                                                 const std::uint64_t* a, const std::uint64_t* b) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i)
    c += static_cast<std::size_t>(__builtin_popcountll(a[idx[i]] & b[idx[i]]));
  return c;
}

const bool kHavePopcnt = __builtin_cpu_supports("popcnt");
#endif

std::size_t and_count(const std::uint32_t* idx, std::size_t n, const std::uint64_t* a, const std::uint64_t* b) {
#if defined(__x86_64__) && defined(__GNUC__)
  if (kHavePopcnt) return and_count_popcnt(idx, n, a, b);
#endif
  return and_count_generic(idx, n, a, b);
}

}  // namespace

packed_mask pack(const binary_mask& m) {
  packed_mask p;
  p.width = m.width;
  p.height = m.height;
  p.words.assign((m.values.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    if (m.values[i]) p.words[i / 64] |= std::uint64_t{1} << (i % 64);
  for (std::size_t w = 0; w < p.words.size(); ++w) {
    if (!p.words[w]) continue;
    p.nonzero.push_back(static_cast<std::uint32_t>(w));
    p.count += static_cast<std::size_t>(std::popcount(p.words[w]));
  }
  return p;
}

binary_mask unpack(const packed_mask& p) {
  binary_mask m(p.width, p.height);
  for (const auto w : p.nonzero) {
    const std::size_t base = static_cast<std::size_t>(w) * 64;
    for (std::size_t b = 0; b < 64 && base + b < m.values.size(); ++b)
      m.values[base + b] = static_cast<std::uint8_t>((p.words[w] >> b) & 1u);
  }
  return m;
}

double mem_measure(const packed_mask& a, const packed_mask& b) {
  if (a.width != b.width || a.height != b.height) throw argument_error("memorization measure: mask shapes differ");
  if (a.count == 0 || b.count == 0) return 0.0;
  const packed_mask& sparse = a.nonzero.size() <= b.nonzero.size() ? a : b;
  const auto both = and_count(sparse.nonzero.data(), sparse.nonzero.size(), a.words.data(), b.words.data());
  const double v = static_cast<double>(both) / std::sqrt(static_cast<double>(a.count) * static_cast<double>(b.count));
  return std::min(v, 1.0);
}

double mem_measure(const binary_mask& a, const binary_mask& b) {
  if (!a.same_shape(b)) throw argument_error("memorization measure: mask shapes differ");
  return mem_measure(pack(a), pack(b));
}

std::vector<packed_mask> boundary_signatures(std::span<const gray_image> images, unsigned threads) {
  std::vector<packed_mask> out(images.size());
  parallel_for(images.size(), resolve_threads(threads),
               [&](std::size_t i) { out[i] = pack(boundary_mask(segment(images[i]))); });
  return out;
}

memorization_calibration calibrate(std::span<const packed_mask> training, std::size_t subset_n, std::uint64_t seed,
                                   unsigned threads) {
  if (subset_n == 0) throw argument_error("calibration subset must be nonempty");
  if (subset_n >= training.size())
    throw argument_error("calibration needs more than " + std::to_string(subset_n) + " training images, got " +
                         std::to_string(training.size()));
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng gen(split_seed(seed, streams::subset));
  gen.shuffle(order);
  const std::span<const std::size_t> subset(order.data(), subset_n);
  const std::span<const std::size_t> rest(order.data() + subset_n, order.size() - subset_n);

  struct row_stats {
    double sum = 0.0, sum2 = 0.0, max = 0.0;
  };
  std::vector<row_stats> rows(subset_n);
  parallel_for(subset_n, resolve_threads(threads), [&](std::size_t i) {
    row_stats r;
    for (const auto j : rest) {
      const double v = mem_measure(training[subset[i]], training[j]);
      r.sum += v;
      r.sum2 += v * v;
      r.max = std::max(r.max, v);
    }
    rows[i] = r;
  });
  // Sequential reduction keeps the result independent of the thread count.
  double sum = 0.0, sum2 = 0.0, mx = 0.0;
  for (const auto& r : rows) {
    sum += r.sum;
    sum2 += r.sum2;
    mx = std::max(mx, r.max);
  }
  const double n = static_cast<double>(subset.size()) * static_cast<double>(rest.size());
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
  memorization_calibration c;
  c.max = mx;
  c.std = sd;
  c.threshold = std::min(1.0, mx + sd);
  c.subset = subset.size();
  c.reference = rest.size();
  return c;
}

memorization_calibration fixed_calibration(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw argument_error("memorization threshold must lie in [0,1]");
  memorization_calibration c;
  c.threshold = threshold;
  return c;
}

screen_result screen(std::span<const packed_mask> generated, std::span<const packed_mask> training,
                     const memorization_calibration& calib, unsigned threads) {
  screen_result r;
  r.best_match.assign(generated.size(), 0.0);
  parallel_for(generated.size(), resolve_threads(threads), [&](std::size_t i) {
    double best = 0.0;
    for (const auto& t : training) {
      best = std::max(best, mem_measure(generated[i], t));
      if (best >= 1.0) break;
    }
    r.best_match[i] = best;
  });
  for (std::size_t i = 0; i < generated.size(); ++i)
    if (r.best_match[i] > calib.threshold) r.flagged.push_back(i);
  r.memorized_fraction =
      generated.empty() ? 0.0 : static_cast<double>(r.flagged.size()) / static_cast<double>(generated.size());
  return r;
}

}  // namespace dgmeval
