#include "dgmeval/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/features.hpp"
#include "dgmeval/morphology.hpp"
#include "dgmeval/parallel.hpp"
#include "dgmeval/rng.hpp"

namespace dgmeval {

double glandular_fraction(const tissue_masks& masks) {
  const auto b = masks.breast().count();
  return b == 0 ? 0.0 : static_cast<double>(masks.gland.count()) / static_cast<double>(b);
}

double glandular_fraction(const gray_image& image) { return glandular_fraction(segment(image)); }

double glandular_fraction(const label_map& labels) {
  std::size_t g = 0, b = 0;
  for (const auto t : labels.values) {
    b += t != tissue::background;
    g += t == tissue::gland;
  }
  return b == 0 ? 0.0 : static_cast<double>(g) / static_cast<double>(b);
}

breast_class class_rule::classify(double f) const noexcept {
  if (f < cuts[0]) return breast_class::fatty;
  if (f < cuts[1]) return breast_class::scattered;
  if (f < cuts[2]) return breast_class::heterogeneous;
  return breast_class::dense;
}

class_rule calibrate_class_rule(std::span<const double> fractions) {
  if (fractions.size() < kMinClassCalibration)
    throw argument_error("class rule calibration needs at least " + std::to_string(kMinClassCalibration) +
                         " images, got " + std::to_string(fractions.size()));
  std::vector<double> v(fractions.begin(), fractions.end());
  std::sort(v.begin(), v.end());
  class_rule r;
  r.cuts = {quantile_type7(v, 0.1), quantile_type7(v, 0.5), quantile_type7(v, 0.9)};
  if (!(r.cuts[0] > 0.0 && r.cuts[0] < r.cuts[1] && r.cuts[1] < r.cuts[2] && r.cuts[2] < 1.0))
    throw validation_error("glandular fractions are too concentrated to separate four classes");
  return r;
}

std::array<double, 4> class_prevalence(std::span<const double> fractions, const class_rule& rule) {
  std::array<std::size_t, 4> n{};
  for (const double f : fractions) ++n[static_cast<std::size_t>(rule.classify(f))];
  std::array<double, 4> p{};
  if (fractions.empty()) return p;
  for (std::size_t c = 0; c < 4; ++c) p[c] = static_cast<double>(n[c]) / static_cast<double>(fractions.size());
  return p;
}

// ---------------------------------------------------------------------------

image_scan scan_image(const gray_image& image) {
  image_scan s;
  const auto masks = segment(image);
  const auto breast = masks.breast();
  s.convexity_ratio = convexity_perimeter_ratio(breast);
  if (std::isnan(s.convexity_ratio)) s.convexity_ratio = 0.0;
  std::size_t bg = 0, lit = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    if (breast.values[i]) continue;
    ++bg;
    if (image.values[i] != 0) {
      ++lit;
      sum += image.values[i];
    }
  }
  s.background_fraction = bg ? static_cast<double>(lit) / static_cast<double>(bg) : 0.0;
  s.background_mean = lit ? sum / static_cast<double>(lit) : 0.0;
  s.skeleton_components =
      static_cast<double>(label_components(thin(masks.ligament), connectivity::eight).count);
  s.glandular_fraction = glandular_fraction(masks);
  s.boundary = pack(boundary_mask(masks));
  s.ligament = pack(masks.ligament);
  return s;
}

std::vector<image_scan> scan_ensemble(std::span<const gray_image> images, unsigned threads) {
  std::vector<image_scan> out(images.size());
  parallel_for(images.size(), resolve_threads(threads), [&](std::size_t i) { out[i] = scan_image(images[i]); });
  return out;
}

double mask_correlation(const binary_mask& m, const real_image& map) {
  if (!m.same_shape(map)) throw argument_error("mask and map differ in shape");
  const auto n = static_cast<double>(m.values.size());
  double sm = 0.0, sz = 0.0, szz = 0.0, smz = 0.0;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const double z = map.values[i];
    sz += z;
    szz += z * z;
    if (m.values[i]) {
      sm += 1.0;
      smz += z;
    }
  }
  const double vm = sm / n - (sm / n) * (sm / n);
  const double vz = szz / n - (sz / n) * (sz / n);
  if (vm <= 0.0 || vz <= 0.0) return 0.0;
  return (smz / n - (sm / n) * (sz / n)) / std::sqrt(vm * vz);
}

bool looks_mirrored(const binary_mask& boundary, const real_image& mean_boundary, double margin) {
  return mask_correlation(mirror_horizontal(boundary), mean_boundary) >
         mask_correlation(boundary, mean_boundary) + margin;
}

double stick_height(std::span<const image_scan> scans, std::uint64_t seed) {
  if (scans.empty()) return 0.0;
  std::vector<std::size_t> order(scans.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng g(split_seed(seed, streams::subset, 0x57ac));
  g.shuffle(order);
  order.resize(std::min(order.size(), kStickStack));
  const auto& first = scans[order[0]].ligament;
  std::vector<std::uint16_t> stack(static_cast<std::size_t>(first.width) * static_cast<std::size_t>(first.height), 0);
  for (const auto i : order) {
    const auto& l = scans[i].ligament;
    if (l.width != first.width || l.height != first.height) throw argument_error("ligament masks differ in shape");
    for (const auto w : l.nonzero)
      for (std::size_t b = 0; b < 64; ++b)
        if ((l.words[w] >> b) & 1u) ++stack[static_cast<std::size_t>(w) * 64 + b];
  }
  return static_cast<double>(*std::max_element(stack.begin(), stack.end()));
}

namespace {

real_image mean_of_masks(std::span<const image_scan> scans) {
  const auto& first = scans.front().boundary;
  std::vector<std::uint32_t> sum(static_cast<std::size_t>(first.width) * static_cast<std::size_t>(first.height), 0);
  for (const auto& s : scans) {
    const auto& b = s.boundary;
    if (b.width != first.width || b.height != first.height) throw argument_error("boundary masks differ in shape");
    for (const auto w : b.nonzero)
      for (std::size_t k = 0; k < 64; ++k)
        if ((b.words[w] >> k) & 1u) ++sum[static_cast<std::size_t>(w) * 64 + k];
  }
  real_image m(first.width, first.height);
  for (std::size_t p = 0; p < sum.size(); ++p) m.values[p] = static_cast<double>(sum[p]) / static_cast<double>(scans.size());
  return m;
}

}  // namespace

detector_statistics ensemble_statistics(std::span<const image_scan> scans, const real_image& mean_boundary,
                                        std::uint64_t seed) {
  if (scans.empty()) throw argument_error("detector statistics need a nonempty ensemble");
  detector_statistics d;
  const auto n = static_cast<double>(scans.size());
  std::vector<double> comps;
  comps.reserve(scans.size());
  std::size_t below = 0, flipped = 0;
  for (const auto& s : scans) {
    below += s.convexity_ratio < kConvexityThreshold;
    d.background_fraction += s.background_fraction / n;
    d.background_mean += s.background_mean / n;
    comps.push_back(s.skeleton_components);
    flipped += looks_mirrored(unpack(s.boundary), mean_boundary);
  }
  d.boundary_fraction = static_cast<double>(below) / n;
  d.flip_fraction = static_cast<double>(flipped) / n;
  std::sort(comps.begin(), comps.end());
  d.skeleton_median = quantile_type7(comps, 0.5);
  d.skeleton_p95 = quantile_type7(comps, 0.95);
  d.stick_height = stick_height(scans, seed);
  return d;
}

training_baselines compute_baselines(std::span<const image_scan> training, std::uint64_t seed) {
  if (training.empty()) throw argument_error("baselines need a nonempty training ensemble");
  training_baselines b;
  b.images = training.size();
  b.mean_boundary = mean_of_masks(training);
  b.stats = ensemble_statistics(training, b.mean_boundary, seed);
  return b;
}

std::map<std::string, artifact_flag> detect_artifacts(std::span<const image_scan> generated,
                                                      const training_baselines& base, std::uint64_t seed) {
  if (base.images == 0 || base.mean_boundary.empty()) throw argument_error("training baselines are missing");
  const auto g = ensemble_statistics(generated, base.mean_boundary, seed);
  const auto& t = base.stats;
  std::map<std::string, artifact_flag> flags;
  // Training images all sit above the convexity threshold, so any excess counts.
  flags["boundary"] = {g.boundary_fraction > t.boundary_fraction, g.boundary_fraction, t.boundary_fraction};
  flags["back"] = {g.background_fraction > t.background_fraction + 0.01, g.background_fraction,
                   t.background_fraction};
  const bool broken = g.skeleton_median > t.skeleton_p95;
  flags["break"] = {broken, g.skeleton_median, t.skeleton_p95};
  flags["blend"] = flags["break"];
  const double stack = static_cast<double>(std::min(kStickStack, generated.size()));
  flags["stick"] = {g.stick_height >= kStickFraction * stack, g.stick_height, t.stick_height};
  flags["flip"] = {g.flip_fraction > t.flip_fraction + 0.1, g.flip_fraction, t.flip_fraction};
  return flags;
}

// ---------------------------------------------------------------------------

real_image mean_image(std::span<const gray_image> images, std::size_t n, std::uint64_t seed) {
  if (images.empty()) throw argument_error("mean image of an empty ensemble");
  std::vector<std::size_t> pick(images.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  if (n < images.size()) {
    rng g(split_seed(seed, streams::mean_image));
    g.shuffle(pick);
    pick.resize(n);
    std::sort(pick.begin(), pick.end());
  }
  const auto& first = images[pick.front()];
  // Integer sums make the result independent of summation order.
  std::vector<std::uint64_t> sum(first.values.size(), 0);
  for (const auto i : pick) {
    if (!images[i].same_shape(first)) throw argument_error("images differ in shape");
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += images[i].values[p];
  }
  real_image m(first.width, first.height);
  for (std::size_t p = 0; p < sum.size(); ++p) m.values[p] = static_cast<double>(sum[p]) / static_cast<double>(pick.size());
  return m;
}

binary_mask bulk_mask(const real_image& mean) {
  binary_mask m(mean.width, mean.height);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = mean.values[i] > kBulkThreshold;
  return erode(m, kBulkErosion);
}

semivariogram semivariance(const real_image& z, const binary_mask& mask, int h_max, lag_directions dirs) {
  if (!z.same_shape(mask)) throw argument_error("semivariance: image and mask differ in shape");
  if (mask.count() == 0) throw argument_error("semivariance needs a nonempty mask");
  if (h_max < 1) throw argument_error("h_max must be positive");
  semivariogram out;
  const int w = z.width, h = z.height;
  for (int lag = 1; lag <= h_max; ++lag) {
    double sx = 0.0, sy = 0.0;
    std::size_t nx = 0, ny = 0;
    if (dirs != lag_directions::vertical) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x + lag < w; ++x)
          if (mask(x, y) && mask(x + lag, y)) {
            const double d = z(x, y) - z(x + lag, y);
            sx += d * d;
            ++nx;
          }
    }
    if (dirs != lag_directions::horizontal) {
      for (int y = 0; y + lag < h; ++y)
        for (int x = 0; x < w; ++x)
          if (mask(x, y) && mask(x, y + lag)) {
            const double d = z(x, y) - z(x, y + lag);
            sy += d * d;
            ++ny;
          }
    }
    if (nx + ny == 0) {
      out.dropped_lags.push_back(lag);
      continue;
    }
    double gamma = 0.0;
    int axes = 0;
    if (nx) {
      gamma += sx / (2.0 * static_cast<double>(nx));
      ++axes;
    }
    if (ny) {
      gamma += sy / (2.0 * static_cast<double>(ny));
      ++axes;
    }
    out.points.push_back({lag, gamma / axes, nx + ny});
  }
  return out;
}

double semivariogram_sill(const semivariogram& s, int from) {
  std::vector<double> g;
  for (const auto& p : s.points)
    if (p.lag > from) g.push_back(p.gamma);
  if (g.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(g.begin(), g.end());
  return quantile_type7(g, 0.5);
}

}  // namespace dgmeval
