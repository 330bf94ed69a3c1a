#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/morphology.hpp"
#include "dgmeval/phantom.hpp"
#include "dgmeval/rng.hpp"
#include "dgmeval/segmentation.hpp"

namespace dgmeval {
namespace {

constexpr double kFatFill = 80.0;

// Mean of fat/gland pixels in a (2r+1)^2 window, or a fat-like default.
std::uint8_t local_fill(const gray_image& img, int cx, int cy, int r) {
  double sum = 0.0;
  int n = 0;
  for (int y = cy - r; y <= cy + r; ++y)
    for (int x = cx - r; x <= cx + r; ++x) {
      if (!img.in_bounds(x, y)) continue;
      const std::uint8_t v = img(x, y);
      if (v >= kFatMin && v < kHighMin) {
        sum += v;
        ++n;
      }
    }
  return static_cast<std::uint8_t>(n > 0 ? std::nearbyint(sum / n) : kFatFill);
}

std::vector<std::size_t> set_pixels(const binary_mask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

gray_image inject_breaks(const gray_image& in, double severity, rng& r) {
  gray_image out = in;
  const tissue_masks masks = segment(in);
  const auto lig = set_pixels(masks.ligament);
  if (lig.empty()) return out;
  const int cuts = std::max(1, static_cast<int>(std::lround(severity * 40.0)));
  for (int c = 0; c < cuts; ++c) {
    const std::size_t p = lig[r.below(lig.size())];
    const int cx = static_cast<int>(p % static_cast<std::size_t>(in.width));
    const int cy = static_cast<int>(p / static_cast<std::size_t>(in.width));
    const std::uint8_t fill = local_fill(in, cx, cy, 3);
    for (int y = cy - 2; y <= cy + 2; ++y)
      for (int x = cx - 2; x <= cx + 2; ++x)
        if (out.in_bounds(x, y) && masks.ligament(x, y)) out(x, y) = fill;
  }
  return out;
}

gray_image inject_blend(const gray_image& in, double severity, rng& r) {
  constexpr double radius = 6.0;
  gray_image out = in;
  const tissue_masks masks = segment(in);
  const auto lig = set_pixels(masks.ligament);
  if (lig.empty()) return out;
  const int segments = std::max(1, static_cast<int>(std::lround(severity * 20.0)));
  for (int s = 0; s < segments; ++s) {
    const std::size_t p = lig[r.below(lig.size())];
    const int cx = static_cast<int>(p % static_cast<std::size_t>(in.width));
    const int cy = static_cast<int>(p / static_cast<std::size_t>(in.width));
    const double fill = local_fill(in, cx, cy, 4);
    const int ri = static_cast<int>(radius);
    for (int y = cy - ri; y <= cy + ri; ++y)
      for (int x = cx - ri; x <= cx + ri; ++x) {
        if (!out.in_bounds(x, y) || !masks.ligament(x, y)) continue;
        const double d = std::hypot(x - cx, y - cy);
        if (d > radius) continue;
        const double a = std::clamp(1.2 - d / radius, 0.0, 1.0);
        out(x, y) = static_cast<std::uint8_t>(std::nearbyint((1.0 - a) * out(x, y) + a * fill));
      }
  }
  return out;
}

gray_image inject_stick(const gray_image& in, std::uint64_t seed) {
  gray_image out = in;
  const tissue_masks masks = segment(in);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      if (masks.ligament(x, y)) out(x, y) = local_fill(in, x, y, 3);
  const label_map tmpl = synth_label_map(breast_class::scattered, split_seed(seed, streams::artifact, 0x571c), in.width);
  const beta_law& law = default_intensity_model().ligament;
  rng values(split_seed(seed, streams::artifact, 0x571d));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (tmpl[i] != tissue::ligament) continue;
    const double v = law.quantile(values.uniform_open());
    if (masks.fat[i] || masks.gland[i] || masks.ligament[i]) out[i] = static_cast<std::uint8_t>(std::nearbyint(v));
  }
  return out;
}

gray_image inject_boundary(const gray_image& in, double severity, rng& r) {
  constexpr double notch_depth = 12.0;
  constexpr double notch_period = 8.0;
  constexpr double notch_width = 3.0;
  gray_image out = in;
  const binary_mask breast = breast_region(in);
  if (breast.count() == 0) return out;
  double cx = 0.0;
  double cy = 0.0;
  double n = 0.0;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      if (breast(x, y)) {
        cx += x;
        cy += y;
        n += 1.0;
      }
  cx /= n;
  cy /= n;
  const double arc = severity * 0.5 * std::numbers::pi;  // severity * 90 degrees
  const double start = r.uniform(0.0, 2.0 * std::numbers::pi);
  const binary_mask rim = mask_minus(breast, erode(breast, kSkinDepth));
  const binary_mask deep = mask_minus(breast, erode(breast, static_cast<int>(notch_depth)));
  const double mean_radius = std::sqrt(n / std::numbers::pi);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      if (!deep(x, y)) continue;
      double offset = std::atan2(y - cy, x - cx) - start;
      offset = std::fmod(offset + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi);
      if (offset > arc) continue;
      const bool skin = rim(x, y) && in(x, y) >= kHighMin;
      const bool notch = std::fmod(offset * mean_radius, notch_period) < notch_width;
      if (skin || notch) out(x, y) = 0;
    }
  }
  return out;
}

gray_image inject_background(const gray_image& in, double severity, rng& r) {
  gray_image out = in;
  for (auto& v : out.values) {
    if (v >= kFatMin) continue;
    if (r.uniform() < severity) v = static_cast<std::uint8_t>(std::min<int>(kFatMin - 1, v + 1 + static_cast<int>(r.below(9))));
  }
  return out;
}

gray_image mirror(const gray_image& in) {
  gray_image out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) out(in.width - 1 - x, y) = in(x, y);
  return out;
}

}  // namespace

std::string_view to_string(artifact_kind k) {
  switch (k) {
    case artifact_kind::breaks: return "break";
    case artifact_kind::blend: return "blend";
    case artifact_kind::stick: return "stick";
    case artifact_kind::boundary: return "boundary";
    case artifact_kind::flip: return "flip";
    case artifact_kind::background: return "background";
  }
  return "unknown";
}

artifact_kind parse_artifact_kind(std::string_view name) {
  for (const auto k : {artifact_kind::breaks, artifact_kind::blend, artifact_kind::stick, artifact_kind::boundary,
                       artifact_kind::flip, artifact_kind::background})
    if (to_string(k) == name) return k;
  throw argument_error("unknown artifact kind: " + std::string(name));
}

gray_image inject_artifact(const gray_image& image, artifact_kind kind, double severity, std::uint64_t seed) {
  if (!(severity >= 0.0 && severity <= 1.0)) throw argument_error("artifact severity must lie in [0,1]");
  if (severity == 0.0) return image;
  rng r(split_seed(seed, streams::artifact));
  switch (kind) {
    case artifact_kind::breaks: return inject_breaks(image, severity, r);
    case artifact_kind::blend: return inject_blend(image, severity, r);
    case artifact_kind::stick: return inject_stick(image, seed);
    case artifact_kind::boundary: return inject_boundary(image, severity, r);
    case artifact_kind::flip: return mirror(image);
    case artifact_kind::background: return inject_background(image, severity, r);
  }
  return image;
}

std::vector<std::size_t> artifact_targets(std::size_t n, std::uint64_t seed, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw argument_error("artifact fraction must lie in [0,1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng r(split_seed(seed, streams::artifact, 0xf7ac));
  r.shuffle(order);
  order.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::sort(order.begin(), order.end());
  return order;
}

std::uint64_t artifact_image_seed(artifact_kind kind, std::uint64_t seed, std::size_t index) {
  return kind == artifact_kind::stick ? seed : split_seed(seed, streams::artifact, index + 1);
}

std::vector<gray_image> inject_artifact(std::span<const gray_image> images, artifact_kind kind, double severity,
                                        std::uint64_t seed, double fraction) {
  std::vector<gray_image> out(images.begin(), images.end());
  for (const std::size_t i : artifact_targets(images.size(), seed, fraction)) {
    out[i] = inject_artifact(images[i], kind, severity, artifact_image_seed(kind, seed, i));
  }
  return out;
}

}  // namespace dgmeval
