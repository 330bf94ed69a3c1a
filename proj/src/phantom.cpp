#include "dgmeval/phantom.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/filters.hpp"
#include "dgmeval/morphology.hpp"
#include "dgmeval/parallel.hpp"
#include "dgmeval/rng.hpp"

namespace dgmeval {
namespace {

constexpr int kQuantileKnots = 65537;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h;
}

bool is_small_integer(double v) { return v >= 1.0 && v <= 30.0 && std::floor(v) == v; }

// LSD radix argsort of doubles. The pixel index is packed into the low bits
// of the order-preserving key, so values closer than ~2^-(52 - index bits)
// relative are ordered by index.
std::vector<std::uint32_t> argsort(std::span<const double> v) {
  const std::size_t n = v.size();
  int index_bits = 1;
  while ((std::size_t{1} << index_bits) < n) ++index_bits;
  const std::uint64_t index_mask = (std::uint64_t{1} << index_bits) - 1;
  std::vector<std::uint64_t> a(n);
  std::vector<std::uint64_t> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto bits = std::bit_cast<std::uint64_t>(v[i]);
    bits = (bits >> 63) ? ~bits : (bits | 0x8000000000000000ULL);
    a[i] = (bits & ~index_mask) | static_cast<std::uint64_t>(i);
  }
  constexpr int digit_bits = 11;
  constexpr std::size_t buckets = std::size_t{1} << digit_bits;
  std::vector<std::size_t> counts(buckets);
  for (int shift = 0; shift < 64; shift += digit_bits) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto k : a) ++counts[(k >> shift) & (buckets - 1)];
    if (counts[(a[0] >> shift) & (buckets - 1)] == n) continue;  // digit constant across keys
    std::size_t total = 0;
    for (auto& c : counts) {
      const std::size_t t = c;
      c = total;
      total += t;
    }
    for (const auto k : a) b[counts[(k >> shift) & (buckets - 1)]++] = k;
    a.swap(b);
  }
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(a[i] & index_mask);
  return idx;
}

// u_k = S_k / S_{n+1} for exponential partial sums: n sorted uniforms.
std::vector<double> sorted_uniforms(std::size_t n, rng& r) {
  std::vector<double> s(n + 1);
  double acc = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    acc += -std::log(r.uniform_open());
    s[k] = acc;
  }
  const double total = s[n];
  s.pop_back();
  for (auto& v : s) v /= total;
  return s;
}

}  // namespace

std::string_view to_string(breast_class c) {
  switch (c) {
    case breast_class::fatty: return "fatty";
    case breast_class::scattered: return "scattered";
    case breast_class::heterogeneous: return "heterogeneous";
    case breast_class::dense: return "dense";
  }
  return "unknown";
}

std::optional<breast_class> parse_breast_class(std::string_view s) {
  for (int c = 0; c < 4; ++c)
    if (to_string(static_cast<breast_class>(c)) == s) return static_cast<breast_class>(c);
  return std::nullopt;
}

binary_mask label_map::mask_of(tissue t) const {
  binary_mask m(width, height);
  for (std::size_t i = 0; i < size(); ++i) m[i] = values[i] == t;
  return m;
}

std::size_t label_map::count(tissue t) const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), t));
}

// ---------------------------------------------------------------------------

beta_law::beta_law(double alpha, double beta, double scale, double offset)
    : alpha_(alpha), beta_(beta), scale_(scale), offset_(offset) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(scale > 0.0)) throw argument_error("beta_law: invalid parameters");
  log_beta_fn_ = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
  if (is_small_integer(alpha) && is_small_integer(beta)) {
    integer_n_ = static_cast<int>(alpha + beta) - 1;
    binomials_.resize(integer_n_ + 1);
    for (int j = 0; j <= integer_n_; ++j) binomials_[j] = binomial(integer_n_, j);
  }
  knots_.resize(kQuantileKnots);
  knots_.front() = 0.0;
  knots_.back() = 1.0;
  for (int i = 1; i + 1 < kQuantileKnots; ++i) {
    const double u = static_cast<double>(i) / (kQuantileKnots - 1);
    double lo = i > 1 ? knots_[i - 1] : 0.0;
    double hi = 1.0;
    while (hi - lo > 1e-13) {
      const double mid = 0.5 * (lo + hi);
      (standard_cdf(mid) < u ? lo : hi) = mid;
    }
    knots_[i] = 0.5 * (lo + hi);
  }
}

double beta_law::standard_cdf(double x) const {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (integer_n_ >= 0) {
    // Binomial tail: sum_{j >= alpha} C(n, j) x^j (1 - x)^(n - j).
    const int a = static_cast<int>(alpha_);
    const int n = integer_n_;
    const double y = 1.0 - x;
    std::array<double, 64> ypow;
    ypow[0] = 1.0;
    for (int k = 1; k <= n - a; ++k) ypow[k] = ypow[k - 1] * y;
    double xp = 1.0;
    for (int j = 0; j < a; ++j) xp *= x;
    double sum = 0.0;
    for (int j = a; j <= n; ++j) {
      sum += binomials_[j] * xp * ypow[n - j];
      xp *= x;
    }
    return std::clamp(sum, 0.0, 1.0);
  }
  const double front = std::exp(alpha_ * std::log(x) + beta_ * std::log1p(-x) - log_beta_fn_);
  if (x < (alpha_ + 1.0) / (alpha_ + beta_ + 2.0)) return front * beta_continued_fraction(alpha_, beta_, x) / alpha_;
  return 1.0 - front * beta_continued_fraction(beta_, alpha_, 1.0 - x) / beta_;
}

double beta_law::standard_pdf(double x) const {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  if (integer_n_ >= 0) {
    double v = std::exp(-log_beta_fn_);
    for (int k = 1; k < static_cast<int>(alpha_); ++k) v *= x;
    for (int k = 1; k < static_cast<int>(beta_); ++k) v *= 1.0 - x;
    return v;
  }
  return std::exp((alpha_ - 1.0) * std::log(x) + (beta_ - 1.0) * std::log1p(-x) - log_beta_fn_);
}

double beta_law::standard_quantile(double u) const {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double t = u * (kQuantileKnots - 1);
  const auto i = std::min(static_cast<std::size_t>(t), static_cast<std::size_t>(kQuantileKnots - 2));
  double lo = knots_[i];
  double hi = knots_[i + 1];
  double x = lo + (t - static_cast<double>(i)) * (hi - lo);
  // Safeguarded Newton inside the knot bracket. A Newton step shorter than
  // 1e-10 leaves an error of order step^2, so it is accepted directly.
  for (int iter = 0; iter < 200; ++iter) {
    const double f = standard_cdf(x) - u;
    if (f == 0.0) return x;
    (f < 0.0 ? lo : hi) = x;
    if (hi - lo < 1e-10) return 0.5 * (lo + hi);
    const double d = standard_pdf(x);
    double next = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
    const bool newton = next > lo && next < hi;
    if (!newton) next = 0.5 * (lo + hi);
    if (newton && std::abs(next - x) < 1e-10) return next;
    x = next;
  }
  return x;
}

double beta_law::cdf(double v) const { return standard_cdf((v - offset_) / scale_); }

const beta_law& tissue_intensity_model::law(tissue t) const {
  switch (t) {
    case tissue::fat: return fat;
    case tissue::gland: return gland;
    case tissue::skin: return skin;
    case tissue::ligament: return ligament;
    case tissue::background: break;
  }
  throw argument_error("no intensity law for background");
}

const tissue_intensity_model& default_intensity_model() {
  static const tissue_intensity_model model{};
  return model;
}

// ---------------------------------------------------------------------------

void validate_mix(const class_mix& mix) {
  double sum = 0.0;
  for (const double p : mix.prevalence) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw argument_error("class mix entries must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw argument_error("class mix must sum to 1");
}

std::array<std::size_t, 4> class_counts(std::size_t n, const class_mix& mix) {
  validate_mix(mix);
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double exact = static_cast<double>(n) * mix.prevalence[c];
    counts[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[c] = exact - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 4) {
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

std::vector<breast_class> class_sequence(std::size_t n, const class_mix& mix, std::uint64_t seed) {
  const auto counts = class_counts(n, mix);
  std::vector<breast_class> seq;
  seq.reserve(n);
  for (std::size_t c = 0; c < 4; ++c) seq.insert(seq.end(), counts[c], static_cast<breast_class>(c));
  rng r(seed);
  r.shuffle(seq);
  return seq;
}

std::array<double, 2> gland_fraction_range(breast_class c) {
  switch (c) {
    case breast_class::fatty: return {0.05, 0.15};
    case breast_class::scattered: return {0.15, 0.35};
    case breast_class::heterogeneous: return {0.35, 0.60};
    case breast_class::dense: return {0.60, 0.80};
  }
  return {0.0, 0.0};
}

// ---------------------------------------------------------------------------

namespace {

struct ellipse_shape {
  double cx, cy, ax, ay;
  std::array<double, 3> amp;
  std::array<double, 3> phase;

  [[nodiscard]] bool contains(double x, double y) const {
    const double dx = (x - cx) / ax;
    const double dy = (y - cy) / ay;
    const double rho = std::hypot(dx, dy);
    const double theta = std::atan2(dy, dx);
    double lim = 1.0;
    for (int k = 0; k < 3; ++k) lim += amp[k] * std::cos((k + 2) * theta + phase[k]);
    return rho < lim;
  }
};

real_image standardized_noise(rng& r, int grid, int factor, double sigma, int size) {
  real_image coarse(grid, grid);
  for (auto& v : coarse.values) v = r.normal();
  coarse = gaussian_smooth(coarse, sigma);
  const double px = r.uniform(0.0, factor);
  const double py = r.uniform(0.0, factor);
  real_image field = upsample_bilinear(coarse, factor, px, py, size, size);
  double mean = 0.0;
  for (const double v : field.values) mean += v;
  mean /= static_cast<double>(field.size());
  double var = 0.0;
  for (const double v : field.values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(field.size()));
  for (auto& v : field.values) v = (v - mean) / (sd > 0 ? sd : 1.0);
  return field;
}

binary_mask voronoi_ligaments(const binary_mask& zone, rng& r, std::uint64_t seed) {
  constexpr double spacing = 52.0;
  constexpr double jitter = 0.45;
  constexpr double drop_probability = 0.12;
  const int size = zone.width;
  const double ox = r.uniform(0.0, spacing);
  const double oy = r.uniform(0.0, spacing);
  const int cells = static_cast<int>(std::ceil(size / spacing)) + 5;
  std::vector<point2> sites(static_cast<std::size_t>(cells) * cells);
  for (int j = 0; j < cells; ++j)
    for (int i = 0; i < cells; ++i) {
      sites[j * cells + i] = {ox + (i - 2 + 0.5) * spacing + r.uniform(-jitter, jitter) * spacing,
                              oy + (j - 2 + 0.5) * spacing + r.uniform(-jitter, jitter) * spacing};
    }
  raster<std::int32_t> owner(size, size, -1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!zone(x, y)) continue;
      const int ci = static_cast<int>(std::floor((x - ox) / spacing)) + 2;
      const int cj = static_cast<int>(std::floor((y - oy) / spacing)) + 2;
      double best = 1e300;
      std::int32_t best_id = -1;
      for (int dj = -2; dj <= 2; ++dj)
        for (int di = -2; di <= 2; ++di) {
          const int i = ci + di;
          const int j = cj + dj;
          if (i < 0 || j < 0 || i >= cells || j >= cells) continue;
          const auto& s = sites[j * cells + i];
          const double d = (s.x - x) * (s.x - x) + (s.y - y) * (s.y - y);
          if (d < best) {
            best = d;
            best_id = j * cells + i;
          }
        }
      owner(x, y) = best_id;
    }
  }
  auto dropped = [&](std::int32_t a, std::int32_t b) {
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    const std::uint64_t h = mix64(seed ^ mix64((lo << 32) | hi));
    return static_cast<double>(h >> 11) * 0x1.0p-53 < drop_probability;
  };
  binary_mask edges(size, size);
  for (int y = 0; y + 1 < size; ++y) {
    for (int x = 0; x + 1 < size; ++x) {
      const std::int32_t o = owner(x, y);
      if (o < 0) continue;
      const std::int32_t right = owner(x + 1, y);
      const std::int32_t below = owner(x, y + 1);
      if ((right >= 0 && right != o && !dropped(o, right)) || (below >= 0 && below != o && !dropped(o, below)))
        edges(x, y) = 1;
    }
  }
  return thin(edges);
}

}  // namespace

label_map synth_label_map(breast_class c, std::uint64_t seed, int size) {
  rng r(seed);
  const double centre = 0.5 * (size - 1);
  const double scale = size / 512.0;
  ellipse_shape shape{};
  shape.cx = centre + r.uniform(-4.0, 4.0) * scale;
  shape.cy = centre + r.uniform(-4.0, 4.0) * scale;
  shape.ax = r.uniform(200.0, 214.0) * scale;
  shape.ay = r.uniform(214.0, 230.0) * scale;
  for (int k = 0; k < 3; ++k) {
    shape.amp[k] = r.uniform(0.0, 0.012);
    shape.phase[k] = r.uniform(0.0, 2.0 * std::numbers::pi);
  }

  binary_mask breast(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) breast(x, y) = shape.contains(x, y);
  breast = fill_holes(breast);

  const int skin_width = 2 + static_cast<int>(r.below(2));
  const binary_mask interior = erode(breast, skin_width);
  const binary_mask ligament_zone = erode(breast, 8);
  const binary_mask ligaments = voronoi_ligaments(ligament_zone, r, mix64(seed ^ 0x6c69676eULL));

  // Gland: fine texture on one side blending into coarse texture on the
  // other, thresholded to the sampled glandular fraction.
  const real_image fine = standardized_noise(r, size / 4, 4, 1.2, size);
  const real_image coarse = standardized_noise(r, size / 8, 8, 1.5, size);
  const auto range = gland_fraction_range(c);
  const double fraction = r.uniform(range[0], range[1]);

  label_map map(size, size, tissue::background);
  std::vector<std::pair<double, std::uint32_t>> candidates;
  std::size_t breast_area = 0;
  const double left = shape.cx - shape.ax;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t i = map.index(x, y);
      if (!breast[i]) continue;
      ++breast_area;
      if (!interior[i]) {
        map[i] = tissue::skin;
      } else if (ligaments[i]) {
        map[i] = tissue::ligament;
      } else {
        map[i] = tissue::fat;
        const double w = std::clamp((x - left) / (2.0 * shape.ax), 0.0, 1.0);
        const double v = ((1.0 - w) * fine[i] + w * coarse[i]) / std::sqrt((1.0 - w) * (1.0 - w) + w * w);
        candidates.emplace_back(v, static_cast<std::uint32_t>(i));
      }
    }
  }
  const auto target = std::min(candidates.size(),
                               static_cast<std::size_t>(std::llround(fraction * static_cast<double>(breast_area))));
  if (target > 0) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(target - 1), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; k < target; ++k) map[candidates[k].second] = tissue::gland;
  }
  return map;
}

real_image specify_histogram(const real_image& field, std::span<const double> sorted_targets) {
  if (sorted_targets.size() != field.size()) throw argument_error("specify_histogram: size mismatch");
  real_image out(field.width, field.height);
  const auto order = argsort(field.values);
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = sorted_targets[k];
  return out;
}

real_image assign_intensities_real(const label_map& map, const tissue_intensity_model& model, std::uint64_t seed) {
  real_image out(map.width, map.height, 0.0);
  const std::size_t n = map.size();
  for (const tissue t : {tissue::fat, tissue::gland, tissue::skin, tissue::ligament}) {
    if (map.count(t) == 0) continue;
    const beta_law& law = model.law(t);
    rng r(split_seed(seed, streams::intensity, static_cast<std::uint64_t>(t)));
    real_image field(map.width, map.height);
    for (auto& v : field.values) v = law.quantile(r.uniform_open());
    const real_image smooth = gaussian_smooth(field, model.smoothing_sigma, 4.0);
    const auto order = argsort(smooth.values);
    const auto u = sorted_uniforms(n, r);
    // Rank k of the smoothed field receives the k-th smallest fresh variate.
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t p = order[k];
      if (map[p] == t) out[p] = law.quantile(u[k]);
    }
  }
  return out;
}

gray_image assign_intensities(const label_map& map, const tissue_intensity_model& model, std::uint64_t seed) {
  const real_image values = assign_intensities_real(map, model, seed);
  gray_image img(map.width, map.height, 0);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (map[i] == tissue::background) continue;
    img[i] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(values[i]), 0.0, 255.0));
  }
  return img;
}

synth_sample synth_one(breast_class c, std::uint64_t seed, std::size_t index, const tissue_intensity_model& model) {
  synth_sample s;
  s.cls = c;
  s.labels = synth_label_map(c, split_seed(seed, streams::label_map, index));
  s.image = assign_intensities(s.labels, model, split_seed(seed, streams::intensity, index));
  return s;
}

std::vector<synth_sample> synth_ensemble(std::size_t n, const class_mix& mix, std::uint64_t seed,
                                         const synth_options& opts) {
  if (n == 0) throw argument_error("synth_ensemble: n must be at least 1");
  const auto classes = class_sequence(n, mix, split_seed(seed, streams::shuffle));
  std::vector<synth_sample> out(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    out[i] = synth_one(classes[i], seed, i);
    if (!opts.keep_labels) out[i].labels = label_map{};
  });
  return out;
}

}  // namespace dgmeval
