#include "dgmeval/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dgmeval/ensemble_io.hpp"
#include "dgmeval/error.hpp"
#include "dgmeval/parallel.hpp"

namespace dgmeval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void emit(feature_vector& out, feature_family f, std::string name, double v) {
  out.push_back({std::move(name), f, v});
}

constexpr std::array<const char*, 7> kStatNames = {"mean", "std", "min", "max", "q25", "median", "q75"};

void emit_summary(feature_vector& out, feature_family f, const std::string& prefix, const summary_stats& s) {
  const std::array<double, 7> v = {s.mean, s.std, s.min, s.max, s.q25, s.q50, s.q75};
  for (std::size_t i = 0; i < v.size(); ++i) emit(out, f, prefix + "." + kStatNames[i], v[i]);
}

}  // namespace

std::string_view to_string(feature_family f) {
  switch (f) {
    case feature_family::texture: return "texture";
    case feature_family::morphology: return "morphology";
    case feature_family::moments: return "moments";
    case feature_family::fractal: return "fractal";
    case feature_family::skeleton: return "skeleton";
    case feature_family::fg_ratio: return "fg_ratio";
  }
  return "unknown";
}

std::optional<feature_family> parse_feature_family(std::string_view s) {
  for (const auto f : kAllFamilies)
    if (to_string(f) == s) return f;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) return kNaN;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  // Written so that equal neighbours give exactly that value.
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

summary_stats summarize(std::span<const double> values) {
  summary_stats s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.std = s.min = s.max = s.q25 = s.q50 = s.q75 = kNaN;
    return s;
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (const double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (const double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  s.min = v.front();
  s.max = v.back();
  s.q25 = quantile_type7(v, 0.25);
  s.q50 = quantile_type7(v, 0.50);
  s.q75 = quantile_type7(v, 0.75);
  return s;
}

double freedman_diaconis_width(std::span<const double> values) {
  if (values.size() < 2) return kNaN;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double iqr = quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
  return 2.0 * iqr * std::cbrt(1.0 / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Texture
// ---------------------------------------------------------------------------

int gray_level(std::uint8_t v, int levels) { return static_cast<int>(v) * levels / 256; }

namespace {

constexpr std::uint8_t kOutside = 0xff;

raster<std::uint8_t> quantize(const gray_image& image, const binary_mask& mask, int levels) {
  raster<std::uint8_t> q;
  q.width = image.width;
  q.height = image.height;
  q.values.resize(image.values.size());
  for (std::size_t i = 0; i < q.values.size(); ++i)
    q.values[i] = mask.values[i] ? static_cast<std::uint8_t>(gray_level(image.values[i], levels)) : kOutside;
  return q;
}

cooccurrence cooccurrence_from_levels(const raster<std::uint8_t>& q, int dx, int dy, int levels) {
  cooccurrence g;
  g.levels = levels;
  g.counts.assign(static_cast<std::size_t>(levels) * levels, 0);
  const int x0 = std::max(0, -dx), x1 = std::min(q.width, q.width - dx);
  const int y0 = std::max(0, -dy), y1 = std::min(q.height, q.height - dy);
  for (int y = y0; y < y1; ++y) {
    const std::uint8_t* a = q.values.data() + static_cast<std::size_t>(y) * q.width;
    const std::uint8_t* b = q.values.data() + static_cast<std::size_t>(y + dy) * q.width + dx;
    for (int x = x0; x < x1; ++x) {
      const std::uint8_t u = a[x], v = b[x];
      if (u == kOutside || v == kOutside) continue;
      ++g.counts[static_cast<std::size_t>(u) * levels + v];
      ++g.counts[static_cast<std::size_t>(v) * levels + u];
    }
  }
  g.total = std::accumulate(g.counts.begin(), g.counts.end(), std::uint64_t{0});
  g.p.assign(g.counts.size(), 0.0);
  if (g.total > 0)
    for (std::size_t i = 0; i < g.counts.size(); ++i)
      g.p[i] = static_cast<double>(g.counts[i]) / static_cast<double>(g.total);
  return g;
}

}  // namespace

cooccurrence compute_cooccurrence(const gray_image& image, const binary_mask& mask, int dx, int dy, int levels) {
  if (!image.same_shape(mask)) throw argument_error("co-occurrence: image and mask differ in shape");
  if (levels < 1 || levels > 255) throw argument_error("co-occurrence: levels must be in [1,255]");
  return cooccurrence_from_levels(quantize(image, mask, levels), dx, dy, levels);
}

haralick_stats haralick(const cooccurrence& g) {
  haralick_stats h{};
  if (g.total == 0) return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
  const int n = g.levels;
  double mu = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mu += i * g.p[static_cast<std::size_t>(i) * n + j];
  double var = 0.0, cov = 0.0, asm_ = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double p = g.p[static_cast<std::size_t>(i) * n + j];
      if (p == 0.0) continue;
      const double d = i - j;
      h.contrast += d * d * p;
      h.dissimilarity += std::abs(d) * p;
      h.homogeneity += p / (1.0 + d * d);
      h.entropy -= p * std::log2(p);
      asm_ += p * p;
      var += (i - mu) * (i - mu) * p;
      cov += (i - mu) * (j - mu) * p;
    }
  }
  h.energy = std::sqrt(asm_);
  // A single populated level is perfectly correlated by convention.
  h.correlation = var > 1e-15 ? cov / var : 1.0;
  h.entropy = std::max(h.entropy, 0.0);
  return h;
}

namespace {

struct offset_spec {
  int dx, dy;
  const char* name;
};
constexpr std::array<offset_spec, 4> kOffsets = {
    {{1, 0, "d1_0"}, {0, 1, "d0_1"}, {1, 1, "d1_1"}, {1, -1, "d1_m1"}}};

void emit_haralick(feature_vector& out, const std::string& prefix, const haralick_stats& h) {
  constexpr auto f = feature_family::texture;
  emit(out, f, prefix + ".contrast", h.contrast);
  emit(out, f, prefix + ".correlation", h.correlation);
  emit(out, f, prefix + ".energy", h.energy);
  emit(out, f, prefix + ".homogeneity", h.homogeneity);
  emit(out, f, prefix + ".entropy", h.entropy);
  emit(out, f, prefix + ".dissimilarity", h.dissimilarity);
}

// Type-7 quantile from a 256-bin histogram holding n values.
double histogram_quantile(const std::array<std::uint64_t, 256>& hist, std::uint64_t n, double p) {
  const double h = (static_cast<double>(n) - 1.0) * p;
  const auto lo = static_cast<std::uint64_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  auto value_at = [&](std::uint64_t rank) {
    std::uint64_t seen = 0;
    for (int v = 0; v < 256; ++v) {
      seen += hist[v];
      if (seen > rank) return static_cast<double>(v);
    }
    return 255.0;
  };
  const double a = value_at(lo);
  const double b = value_at(std::min(lo + 1, n - 1));
  return a + frac * (b - a);
}

}  // namespace

void texture_features(const gray_image& image, const binary_mask& breast, feature_vector& out) {
  if (!image.same_shape(breast)) throw argument_error("texture: image and mask differ in shape");
  const auto q = quantize(image, breast, kGrayLevels);
  haralick_stats avg{};
  for (const auto& o : kOffsets) {
    const auto h = haralick(cooccurrence_from_levels(q, o.dx, o.dy, kGrayLevels));
    emit_haralick(out, std::string("texture.B.") + o.name, h);
    avg.contrast += h.contrast / 4.0;
    avg.correlation += h.correlation / 4.0;
    avg.energy += h.energy / 4.0;
    avg.homogeneity += h.homogeneity / 4.0;
    avg.entropy += h.entropy / 4.0;
    avg.dissimilarity += h.dissimilarity / 4.0;
  }
  emit_haralick(out, "texture.B.mean", avg);

  std::array<std::uint64_t, 256> hist{};
  std::uint64_t n = 0;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    if (!breast.values[i]) continue;
    const double v = image.values[i];
    ++hist[image.values[i]];
    ++n;
    sum += v;
    sum2 += v * v;
  }
  constexpr auto f = feature_family::texture;
  if (n == 0) {
    for (const char* s : {"mean", "std", "q25", "q75"}) emit(out, f, std::string("texture.B.intensity.") + s, kNaN);
    return;
  }
  const double mean = sum / static_cast<double>(n);
  emit(out, f, "texture.B.intensity.mean", mean);
  emit(out, f, "texture.B.intensity.std", std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - mean * mean)));
  emit(out, f, "texture.B.intensity.q25", histogram_quantile(hist, n, 0.25));
  emit(out, f, "texture.B.intensity.q75", histogram_quantile(hist, n, 0.75));
}

// ---------------------------------------------------------------------------
// Morphology
// ---------------------------------------------------------------------------

std::vector<region_props> region_properties(const binary_mask& mask) {
  const auto lab = label_components(mask, connectivity::eight);
  struct acc {
    std::int64_t area = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, crack = 0;
    int minx = std::numeric_limits<int>::max(), maxx = -1, miny = std::numeric_limits<int>::max(), maxy = -1;
    std::vector<point2> corners;
  };
  std::vector<acc> a(static_cast<std::size_t>(lab.count));
  const int w = mask.width, h = mask.height;
  auto on = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && mask(x, y) != 0; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = lab.labels(x, y);
      if (l == 0) continue;
      auto& r = a[static_cast<std::size_t>(l - 1)];
      ++r.area;
      r.sx += x;
      r.sy += y;
      r.sxx += static_cast<std::int64_t>(x) * x;
      r.syy += static_cast<std::int64_t>(y) * y;
      r.sxy += static_cast<std::int64_t>(x) * y;
      r.minx = std::min(r.minx, x);
      r.maxx = std::max(r.maxx, x);
      r.miny = std::min(r.miny, y);
      r.maxy = std::max(r.maxy, y);
      const int open = !on(x - 1, y) + !on(x + 1, y) + !on(x, y - 1) + !on(x, y + 1);
      if (open > 0) {
        r.crack += open;
        const double fx = x, fy = y;
        r.corners.insert(r.corners.end(), {{fx, fy}, {fx + 1, fy}, {fx, fy + 1}, {fx + 1, fy + 1}});
      }
    }
  }
  std::vector<region_props> out;
  out.reserve(a.size());
  for (auto& r : a) {
    region_props p{};
    p.area = static_cast<double>(r.area);
    p.perimeter = static_cast<double>(r.crack);
    const auto n = static_cast<double>(r.area);
    // Exact integer central second moments scaled by area^2.
    const double cxx = static_cast<double>(r.area * r.sxx - r.sx * r.sx) / (n * n);
    const double cyy = static_cast<double>(r.area * r.syy - r.sy * r.sy) / (n * n);
    const double cxy = static_cast<double>(r.area * r.sxy - r.sx * r.sy) / (n * n);
    const double half = 0.5 * (cxx + cyy);
    const double rad = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
    const double l1 = half + rad, l2 = std::max(0.0, half - rad);
    p.eccentricity = l1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
    const auto hull = convex_hull(std::move(r.corners));
    const double hull_area = polygon_area(hull);
    p.solidity = hull_area > 0.0 ? std::min(1.0, p.area / hull_area) : 1.0;
    p.extent = p.area / (static_cast<double>(r.maxx - r.minx + 1) * static_cast<double>(r.maxy - r.miny + 1));
    out.push_back(p);
  }
  return out;
}

double convexity_perimeter_ratio(const binary_mask& mask) {
  const auto lab = label_components(mask, connectivity::eight);
  if (lab.count == 0) return kNaN;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(lab.count) + 1, 0);
  for (const auto l : lab.labels.values) ++sizes[static_cast<std::size_t>(l)];
  sizes[0] = 0;
  const auto largest = static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  binary_mask only(mask.width, mask.height);
  for (std::size_t i = 0; i < only.values.size(); ++i) only.values[i] = lab.labels.values[i] == largest;
  const auto contour = trace_outer_contour(only);
  const double len = chain_length(contour);
  if (len <= 0.0) return 1.0;
  const auto hull = convex_hull(contour);
  return std::min(1.0, polygon_perimeter(hull) / len);
}

void morphology_features(const tissue_masks& masks, feature_vector& out) {
  constexpr auto f = feature_family::morphology;
  const auto breast = masks.breast();
  const std::array<std::pair<const char*, const binary_mask*>, 3> regions = {
      {{"F", &masks.fat}, {"G", &masks.gland}, {"B", &breast}}};
  for (const auto& [tag, m] : regions) {
    const auto props = region_properties(*m);
    const std::string prefix = std::string("morphology.") + tag;
    emit(out, f, prefix + ".count", static_cast<double>(props.size()));
    std::vector<double> col(props.size());
    const std::array<std::pair<const char*, double region_props::*>, 5> fields = {{{"area", &region_props::area},
                                                                                   {"perimeter", &region_props::perimeter},
                                                                                   {"eccentricity", &region_props::eccentricity},
                                                                                   {"solidity", &region_props::solidity},
                                                                                   {"extent", &region_props::extent}}};
    for (const auto& [name, field] : fields) {
      for (std::size_t i = 0; i < props.size(); ++i) col[i] = props[i].*field;
      emit_summary(out, f, prefix + "." + name, summarize(col));
    }
  }
  emit(out, f, "morphology.F.total_area", static_cast<double>(masks.fat.count()));
  emit(out, f, "morphology.G.total_area", static_cast<double>(masks.gland.count()));
  emit(out, f, "morphology.S.total_area", static_cast<double>(masks.skin.count()));
  emit(out, f, "morphology.L.total_area", static_cast<double>(masks.ligament.count()));
  emit(out, f, "morphology.B.total_area", static_cast<double>(breast.count()));
  emit(out, f, "morphology.B.convexity_perimeter_ratio", convexity_perimeter_ratio(breast));
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

std::array<double, 7> hu_invariants(const std::array<std::array<double, 4>, 4>& e) {
  const double n20 = e[2][0], n02 = e[0][2], n11 = e[1][1];
  const double n30 = e[3][0], n03 = e[0][3], n21 = e[2][1], n12 = e[1][2];
  const double a = n30 + n12, b = n21 + n03;
  std::array<double, 7> h{};
  h[0] = n20 + n02;
  h[1] = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
  h[2] = (n30 - 3.0 * n12) * (n30 - 3.0 * n12) + (3.0 * n21 - n03) * (3.0 * n21 - n03);
  h[3] = a * a + b * b;
  h[4] = (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b) + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b);
  h[5] = (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b;
  h[6] = (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b) - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b);
  return h;
}

moment_set compute_moments(const binary_mask& mask, const gray_image* weights) {
  if (weights && !weights->same_shape(mask)) throw argument_error("moments: weights and mask differ in shape");
  moment_set m;
  const int w = mask.width, h = mask.height;
  // Row-wise sums of w * x^p, then combined with powers of y.
  for (int y = 0; y < h; ++y) {
    double s[4] = {0, 0, 0, 0};
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      const double v = weights ? (*weights)(x, y) : 1.0;
      const double xd = x;
      s[0] += v;
      s[1] += v * xd;
      s[2] += v * xd * xd;
      s[3] += v * xd * xd * xd;
    }
    if (s[0] == 0.0) continue;
    const double yd = y;
    const double yp[4] = {1.0, yd, yd * yd, yd * yd * yd};
    for (int p = 0; p <= 3; ++p)
      for (int q = 0; p + q <= 3; ++q) m.raw[p][q] += s[p] * yp[q];
  }
  const double m00 = m.raw[0][0];
  if (!(m00 > 0.0)) {
    for (auto* t : {&m.raw, &m.central, &m.normalized})
      for (auto& row : *t) row.fill(kNaN);
    m.hu.fill(kNaN);
    return m;
  }
  const double xc = m.raw[1][0] / m00, yc = m.raw[0][1] / m00;
  for (int y = 0; y < h; ++y) {
    double s[4] = {0, 0, 0, 0};
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      const double v = weights ? (*weights)(x, y) : 1.0;
      const double dx = x - xc;
      s[0] += v;
      s[1] += v * dx;
      s[2] += v * dx * dx;
      s[3] += v * dx * dx * dx;
    }
    if (s[0] == 0.0) continue;
    const double dy = y - yc;
    const double yp[4] = {1.0, dy, dy * dy, dy * dy * dy};
    for (int p = 0; p <= 3; ++p)
      for (int q = 0; p + q <= 3; ++q) m.central[p][q] += s[p] * yp[q];
  }
  // Exactly zero by definition; the summed residue is rounding noise.
  m.central[1][0] = m.central[0][1] = 0.0;
  for (int p = 0; p <= 3; ++p)
    for (int q = 0; p + q <= 3; ++q)
      m.normalized[p][q] = m.central[p][q] / std::pow(m00, 1.0 + 0.5 * (p + q));
  m.hu = hu_invariants(m.normalized);
  return m;
}

void moment_features(const gray_image& image, const tissue_masks& masks, feature_vector& out) {
  constexpr auto f = feature_family::moments;
  const auto breast = masks.breast();
  const std::array<std::pair<const char*, const binary_mask*>, 3> regions = {
      {{"F", &masks.fat}, {"G", &masks.gland}, {"B", &breast}}};
  for (const auto& [tag, m] : regions) {
    for (const bool weighted : {false, true}) {
      const auto ms = compute_moments(*m, weighted ? &image : nullptr);
      const std::string prefix = std::string("moments.") + tag + (weighted ? ".weighted." : ".binary.");
      for (int order = 0; order <= 3; ++order)
        for (int p = order; p >= 0; --p)
          emit(out, f, prefix + "m_" + std::to_string(p) + std::to_string(order - p), ms.raw[p][order - p]);
      for (int order = 0; order <= 3; ++order) {
        if (order == 1) continue;
        for (int p = order; p >= 0; --p)
          emit(out, f, prefix + "mu_" + std::to_string(p) + std::to_string(order - p), ms.central[p][order - p]);
      }
      for (int order = 2; order <= 3; ++order)
        for (int p = order; p >= 0; --p)
          emit(out, f, prefix + "eta_" + std::to_string(p) + std::to_string(order - p), ms.normalized[p][order - p]);
      for (int i = 0; i < 7; ++i) emit(out, f, prefix + "hu" + std::to_string(i + 1), ms.hu[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Fractal
// ---------------------------------------------------------------------------

std::size_t occupied_boxes(const binary_mask& mask, int s) {
  if (s < 1) throw argument_error("box size must be positive");
  const int gw = (mask.width + s - 1) / s, gh = (mask.height + s - 1) / s;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(gw) * gh, 0);
  for (int y = 0; y < mask.height; ++y) {
    std::uint8_t* row = grid.data() + static_cast<std::size_t>(y / s) * gw;
    const std::uint8_t* src = mask.values.data() + static_cast<std::size_t>(y) * mask.width;
    for (int x = 0; x < mask.width; ++x) row[x / s] |= src[x];
  }
  return static_cast<std::size_t>(std::count_if(grid.begin(), grid.end(), [](std::uint8_t v) { return v != 0; }));
}

double box_dimension(const binary_mask& mask, std::span<const int> sizes) {
  std::vector<double> xs, ys;
  for (const int s : sizes) {
    const auto n = occupied_boxes(mask, s);
    if (n == 0) continue;
    xs.push_back(-std::log(static_cast<double>(s)));
    ys.push_back(std::log(static_cast<double>(n)));
  }
  if (xs.size() < 2) return kNaN;
  const double k = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / k;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

double lacunarity(const binary_mask& mask, int r) {
  const int w = mask.width, h = mask.height;
  if (r < 1 || r > w || r > h) return kNaN;
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<std::uint32_t> integral(stride * (static_cast<std::size_t>(h) + 1), 0);
  for (int y = 0; y < h; ++y) {
    std::uint32_t run = 0;
    for (int x = 0; x < w; ++x) {
      run += mask(x, y) ? 1u : 0u;
      integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + run;
    }
  }
  std::uint64_t s1 = 0, s2 = 0, n = 0;
  for (int y = 0; y + r <= h; ++y) {
    const std::uint32_t* top = integral.data() + y * stride;
    const std::uint32_t* bot = integral.data() + (y + r) * stride;
    for (int x = 0; x + r <= w; ++x) {
      const std::uint64_t m = bot[x + r] - bot[x] - top[x + r] + top[x];
      s1 += m;
      s2 += m * m;
      ++n;
    }
  }
  if (s1 == 0) return kNaN;
  return static_cast<double>(n) * static_cast<double>(s2) / (static_cast<double>(s1) * static_cast<double>(s1));
}

void fractal_features(const tissue_masks& masks, feature_vector& out) {
  constexpr auto f = feature_family::fractal;
  const std::array<std::pair<const char*, const binary_mask*>, 3> regions = {
      {{"F", &masks.fat}, {"G", &masks.gland}, {"L", &masks.ligament}}};
  for (const auto& [tag, m] : regions) {
    const std::string prefix = std::string("fractal.") + tag;
    emit(out, f, prefix + ".box_dimension", box_dimension(*m));
    for (const int r : kLacunarityBoxes) emit(out, f, prefix + ".lacunarity_r" + std::to_string(r), lacunarity(*m, r));
  }
}

// ---------------------------------------------------------------------------
// Skeleton
// ---------------------------------------------------------------------------

namespace {

// Number of 0->1 transitions walking once around the 8-neighbourhood. Unlike
// a plain neighbour count it is 2 on staircase steps of a thin curve, 1 at
// line ends and >= 3 only where branches meet.
int crossing_number(const binary_mask& m, int x, int y) {
  static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  static constexpr int dy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
  bool ring[8];
  for (int k = 0; k < 8; ++k) ring[k] = m.in_bounds(x + dx[k], y + dy[k]) && m(x + dx[k], y + dy[k]) != 0;
  int n = 0;
  for (int k = 0; k < 8; ++k) n += !ring[k] && ring[(k + 1) % 8];
  return n;
}

}  // namespace

skeleton_stats analyze_skeleton(const binary_mask& ligament, const binary_mask& breast) {
  if (!ligament.same_shape(breast)) throw argument_error("skeleton: ligament and breast masks differ in shape");
  const auto skel = thin(ligament);
  skeleton_stats s;
  s.components = static_cast<std::size_t>(label_components(skel, connectivity::eight).count);

  binary_mask junction_px(skel.width, skel.height);
  for (int y = 0; y < skel.height; ++y) {
    for (int x = 0; x < skel.width; ++x) {
      if (!skel(x, y)) continue;
      const int n = crossing_number(skel, x, y);
      if (n == 1) ++s.endpoints;
      if (n >= 3) junction_px(x, y) = 1;
    }
  }
  // Adjacent junction pixels count as one junction.
  s.junctions = static_cast<std::size_t>(label_components(junction_px, connectivity::eight).count);

  // Arms can touch diagonally around a lone junction pixel, so the whole
  // 3x3 neighbourhood of each junction is cut out before labelling.
  const auto branches = label_components(mask_minus(skel, dilate(junction_px)), connectivity::eight);
  s.branches = static_cast<std::size_t>(branches.count);
  s.branch_lengths.assign(s.branches, 0.0);
  for (const auto l : branches.labels.values)
    if (l > 0) s.branch_lengths[static_cast<std::size_t>(l - 1)] += 1.0;

  // A one-pixel 8-connected curve only separates 4-connected regions.
  const auto regions = label_components(mask_minus(breast, skel), connectivity::four);
  s.region_areas.assign(static_cast<std::size_t>(regions.count), 0.0);
  for (const auto l : regions.labels.values)
    if (l > 0) s.region_areas[static_cast<std::size_t>(l - 1)] += 1.0;
  return s;
}

void skeleton_features(const binary_mask& ligament, const binary_mask& breast, feature_vector& out) {
  constexpr auto f = feature_family::skeleton;
  const auto s = analyze_skeleton(ligament, breast);
  emit(out, f, "skeleton.L.components", static_cast<double>(s.components));
  emit(out, f, "skeleton.L.endpoints", static_cast<double>(s.endpoints));
  emit(out, f, "skeleton.L.junctions", static_cast<double>(s.junctions));
  emit(out, f, "skeleton.L.branches", static_cast<double>(s.branches));
  emit_summary(out, f, "skeleton.L.branch_length", summarize(s.branch_lengths));
  emit(out, f, "skeleton.L.regions", static_cast<double>(s.region_areas.size()));
  emit_summary(out, f, "skeleton.L.region_area", summarize(s.region_areas));
}

double fg_ratio(const tissue_masks& masks) {
  const auto g = masks.gland.count();
  if (g == 0) return kNaN;
  return static_cast<double>(masks.fat.count()) / static_cast<double>(g);
}

// ---------------------------------------------------------------------------
// Schema and extraction
// ---------------------------------------------------------------------------

bool feature_schema::includes(feature_family f) const {
  return std::find(families.begin(), families.end(), f) != families.end();
}

std::vector<feature_column> feature_schema::columns() const {
  // Names never depend on content, so a blank probe image lists them all.
  const gray_image probe(8, 8);
  std::vector<feature_column> cols;
  for (auto& v : extract_features(probe, *this)) cols.push_back({std::move(v.name), v.family});
  return cols;
}

feature_vector extract_features(const gray_image& image, const feature_schema& schema) {
  const auto masks = segment(image);
  const auto breast = masks.breast();
  feature_vector out;
  out.reserve(400);
  // Emission follows the canonical family order whatever order was requested.
  for (const auto fam : kAllFamilies) {
    if (!schema.includes(fam)) continue;
    switch (fam) {
      case feature_family::texture: texture_features(image, breast, out); break;
      case feature_family::morphology: morphology_features(masks, out); break;
      case feature_family::moments: moment_features(image, masks, out); break;
      case feature_family::fractal: fractal_features(masks, out); break;
      case feature_family::skeleton: skeleton_features(masks.ligament, breast, out); break;
      case feature_family::fg_ratio: emit(out, fam, "fg_ratio.B.fat_to_gland", fg_ratio(masks)); break;
    }
  }
  return out;
}

std::vector<std::string> public_metric_columns() {
  return {"morphology.F.total_area",   "morphology.G.total_area",  "morphology.S.total_area",
          "morphology.L.total_area",   "morphology.B.total_area",  "texture.B.intensity.mean",
          "texture.B.intensity.std",   "texture.B.intensity.q25",  "texture.B.intensity.q75"};
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

std::optional<std::size_t> feature_matrix::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  return std::nullopt;
}

std::vector<double> feature_matrix::column(std::size_t c) const {
  std::vector<double> v(rows);
  for (std::size_t r = 0; r < rows; ++r) v[r] = at(r, c);
  return v;
}

std::vector<std::size_t> feature_matrix::nan_counts() const {
  std::vector<std::size_t> n(cols(), 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols(); ++c)
      if (std::isnan(at(r, c))) ++n[c];
  return n;
}

feature_matrix feature_matrix::select_columns(std::span<const std::size_t> keep) const {
  feature_matrix m;
  m.ids = ids;
  m.rows = rows;
  for (const auto c : keep) {
    if (c >= cols()) throw argument_error("column index out of range");
    m.columns.push_back(columns[c]);
  }
  m.values.reserve(rows * keep.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (const auto c : keep) m.values.push_back(at(r, c));
  return m;
}

feature_matrix feature_matrix::select_family(feature_family f) const {
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < cols(); ++c)
    if (columns[c].family == f) keep.push_back(c);
  return select_columns(keep);
}

feature_matrix feature_matrix::select_rows(std::span<const std::size_t> keep) const {
  feature_matrix m;
  m.columns = columns;
  m.rows = keep.size();
  m.values.reserve(keep.size() * cols());
  for (const auto r : keep) {
    if (r >= rows) throw argument_error("row index out of range");
    m.values.insert(m.values.end(), values.begin() + static_cast<std::ptrdiff_t>(r * cols()),
                    values.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols()));
    if (!ids.empty()) m.ids.push_back(ids[r]);
  }
  return m;
}

void feature_matrix::append_row(std::span<const double> row, std::string id) {
  if (row.size() != cols()) throw argument_error("row length does not match the column count");
  values.insert(values.end(), row.begin(), row.end());
  if (!id.empty() || !ids.empty()) {
    ids.resize(rows);
    ids.push_back(std::move(id));
  }
  ++rows;
}

feature_matrix extract_all(std::span<const gray_image> images, const feature_schema& schema,
                           std::span<const std::string> ids, unsigned threads) {
  if (images.empty()) throw argument_error("feature extraction needs a nonempty ensemble");
  if (!ids.empty() && ids.size() != images.size()) throw argument_error("identifier count does not match image count");
  feature_matrix m;
  m.columns = schema.columns();
  m.rows = images.size();
  m.ids.assign(ids.begin(), ids.end());
  m.values.assign(m.rows * m.cols(), kNaN);
  auto label = [&](std::size_t i) { return ids.empty() ? "image " + std::to_string(i) : ids[i]; };
  parallel_for(images.size(), resolve_threads(threads), [&](std::size_t i) {
    feature_vector v;
    try {
      v = extract_features(images[i], schema);
    } catch (const std::exception& e) {
      throw validation_error(label(i) + ": " + e.what());
    }
    if (v.size() != m.cols()) throw validation_error(label(i) + ": feature schema mismatch");
    for (std::size_t c = 0; c < v.size(); ++c) {
      if (v[c].name != m.columns[c].name) throw validation_error(label(i) + ": feature schema mismatch");
      m.values[i * m.cols() + c] = v[c].value;
    }
  });
  return m;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

feature_family family_from_name(const std::string& name) {
  const auto dot = name.find('.');
  if (const auto f = parse_feature_family(name.substr(0, dot))) return *f;
  throw validation_error("cannot infer feature family of column " + name);
}

}  // namespace

void write_feature_csv(const feature_matrix& m, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "id";
  for (const auto& c : m.columns) os << ',' << c.name;
  os << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    os << (r < m.ids.size() ? m.ids[r] : std::to_string(r));
    for (std::size_t c = 0; c < m.cols(); ++c) os << ',' << format_value(m.at(r, c));
    os << '\n';
  }
  write_text_file(path, os.str());
}

feature_matrix read_feature_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw validation_error("empty feature CSV " + path.string());
  const auto header = split(line, ',');
  if (header.empty() || header[0] != "id") throw validation_error("feature CSV must start with an id column: " + path.string());
  feature_matrix m;
  for (std::size_t i = 1; i < header.size(); ++i) m.columns.push_back({header[i], family_from_name(header[i])});
  std::size_t line_no = 1;
  std::vector<double> row(m.cols());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw validation_error(path.string() + " line " + std::to_string(line_no) + ": wrong number of fields");
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto& s = cells[c + 1];
      if (s == "nan" || s == "NaN") {
        row[c] = kNaN;
        continue;
      }
      std::size_t used = 0;
      try {
        row[c] = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty() || !std::isfinite(row[c]))
        throw validation_error(path.string() + " line " + std::to_string(line_no) + ": bad value '" + s + "'");
    }
    m.append_row(row, cells[0]);
  }
  return m;
}

void write_feature_cache(const feature_matrix& m, const std::filesystem::path& path) {
  embedding_matrix e;
  e.rows = m.rows;
  e.cols = m.cols();
  e.values.assign(m.values.begin(), m.values.end());
  e.source = "dgmeval feature cache";
  write_embeddings(e, path);
  std::ostringstream os;
  for (const auto& c : m.columns) os << c.name << '\t' << to_string(c.family) << '\n';
  write_text_file(std::filesystem::path(path.string() + ".schema"), os.str());
  if (!m.ids.empty()) {
    std::ostringstream ids;
    for (const auto& id : m.ids) ids << id << '\n';
    write_text_file(std::filesystem::path(path.string() + ".ids"), ids.str());
  }
}

feature_matrix read_feature_cache(const std::filesystem::path& path) {
  const auto e = read_embeddings(path, /*allow_nan=*/true);
  const std::filesystem::path schema_path(path.string() + ".schema");
  if (!std::filesystem::exists(schema_path)) throw io_error("missing schema sidecar " + schema_path.string());
  feature_matrix m;
  std::istringstream in(read_text_file(schema_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto parts = split(line, '\t');
    if (parts.size() != 2) throw validation_error("bad schema line in " + schema_path.string());
    const auto fam = parse_feature_family(parts[1]);
    if (!fam) throw validation_error("unknown feature family '" + parts[1] + "' in " + schema_path.string());
    m.columns.push_back({parts[0], *fam});
  }
  if (m.columns.size() != e.cols)
    throw validation_error("schema sidecar lists " + std::to_string(m.columns.size()) + " columns but the cache has " +
                           std::to_string(e.cols));
  m.rows = e.rows;
  m.values.assign(e.values.begin(), e.values.end());
  const std::filesystem::path ids_path(path.string() + ".ids");
  if (std::filesystem::exists(ids_path)) {
    std::istringstream ids(read_text_file(ids_path));
    while (std::getline(ids, line))
      if (!line.empty()) m.ids.push_back(line);
    if (m.ids.size() != m.rows) throw validation_error("identifier sidecar does not match cache rows");
  }
  return m;
}

feature_matrix read_feature_matrix(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return read_feature_csv(path);
  return read_feature_cache(path);
}

}  // namespace dgmeval
