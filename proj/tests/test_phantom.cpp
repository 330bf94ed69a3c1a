#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/morphology.hpp"
#include "dgmeval/phantom.hpp"
#include "dgmeval/rng.hpp"
#include "support.hpp"

using namespace dgmeval;

namespace {

double gland_fraction_of(const label_map& m) {
  const double g = static_cast<double>(m.count(tissue::gland));
  const double f = static_cast<double>(m.count(tissue::fat));
  return g / (g + f);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Pearson correlation of horizontally adjacent pixel pairs inside a region.
double lag1_correlation(const gray_image& img, const binary_mask& region) {
  std::vector<double> a, b;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x + 1 < img.width; ++x)
      if (region(x, y) && region(x + 1, y)) {
        a.push_back(img(x, y));
        b.push_back(img(x + 1, y));
      }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Simpson integration of the standard density as an independent CDF.
double integrate_pdf(const beta_law& law, double x) {
  const int n = 4000;
  const double h = x / n;
  double s = law.standard_pdf(0) + law.standard_pdf(x);
  for (int i = 1; i < n; ++i) s += law.standard_pdf(i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("beta law cdf matches integrated density and inverts its quantile") {
    const auto& m = default_intensity_model();
    for (const auto t : {tissue::fat, tissue::gland, tissue::skin, tissue::ligament}) {
      const auto& law = m.law(t);
      for (double x = 0.05; x < 1.0; x += 0.1) CHECK(law.standard_cdf(x) == doctest::Approx(integrate_pdf(law, x)).epsilon(1e-9));
      for (double u = 0.001; u < 1.0; u += 0.0371) CHECK(law.standard_cdf(law.standard_quantile(u)) == doctest::Approx(u).epsilon(1e-9));
    }
  }

  TEST_CASE("intensity supports lie inside the documented ranges") {
    const auto& m = default_intensity_model();
    CHECK(m.fat.support_min() >= 52);
    CHECK(m.fat.support_max() <= 112);
    CHECK(m.gland.support_min() >= 128);
    CHECK(m.gland.support_max() <= 224);
    CHECK(m.skin.support_min() >= 228);
    CHECK(m.skin.support_max() <= 244);
    CHECK(m.ligament.support_min() >= 232);
    CHECK(m.ligament.support_max() <= 248);
  }

  TEST_CASE("label maps are deterministic per seed") {
    CHECK(synth_label_map(breast_class::dense, 1) == synth_label_map(breast_class::dense, 1));
    CHECK_FALSE(synth_label_map(breast_class::dense, 1) == synth_label_map(breast_class::dense, 2));
  }

  TEST_CASE("fatty maps have less gland than the scattered median") {
    std::vector<double> fatty, scattered;
    for (std::uint64_t s = 0; s < 100; ++s) {
      fatty.push_back(gland_fraction_of(synth_label_map(breast_class::fatty, 1000 + s)));
      scattered.push_back(gland_fraction_of(synth_label_map(breast_class::scattered, 5000 + s)));
    }
    const double med = median(scattered);
    for (const double f : fatty) CHECK(f < med);
  }

  TEST_CASE("label map structure: one label per pixel, rim skin, thin interior ligaments") {
    for (const auto c : {breast_class::fatty, breast_class::dense}) {
      const auto m = synth_label_map(c, 77);
      for (const auto t : m.values) CHECK(static_cast<int>(t) <= 4);
      std::size_t total = 0;
      for (int t = 0; t <= 4; ++t) total += m.count(static_cast<tissue>(t));
      CHECK(total == m.size());
      const auto breast = mask_minus(binary_mask(m.width, m.height, 1), m.mask_of(tissue::background));
      // Skin lies within three pixels of the contour.
      CHECK(mask_and(erode(breast, 3), m.mask_of(tissue::skin)).count() == 0);
      // Ligament curves are already thin.
      const auto lig = m.mask_of(tissue::ligament);
      CHECK(lig.count() > 0);
      CHECK(thin(lig) == lig);
      CHECK(mask_and(lig, mask_minus(breast, erode(breast, 1))).count() == 0);
    }
  }

  TEST_CASE("background pixels are zero and tissues stay within their supports") {
    const auto& s = testing::synth_cache(4, 3);
    const auto& model = default_intensity_model();
    for (const auto& x : s) {
      for (std::size_t i = 0; i < x.image.size(); ++i) {
        const auto t = x.labels[i];
        const int v = x.image[i];
        if (t == tissue::background) {
          CHECK(v == 0);
          continue;
        }
        const auto& law = model.law(t);
        CHECK(v >= std::floor(law.support_min()));
        CHECK(v <= std::ceil(law.support_max()));
      }
    }
  }

  TEST_CASE("histogram specification assigns sorted targets by field rank") {
    real_image field(3, 2);
    field.values = {0.5, -1.0, 2.0, 0.5, 7.0, 0.0};
    const std::vector<double> targets{10, 20, 30, 40, 50, 60};
    const auto out = specify_histogram(field, targets);
    // Ranks: -1.0, 0.0, 0.5 (first), 0.5 (second), 2.0, 7.0.
    CHECK(out.values == std::vector<double>{30, 10, 50, 40, 60, 20});
  }

  TEST_CASE("unquantized intensities restore the target law per tissue") {
    const auto& x = testing::synth_cache(4, 3)[0];
    const auto& model = default_intensity_model();
    const auto real = assign_intensities_real(x.labels, model, 99);
    for (const auto t : {tissue::fat, tissue::gland}) {
      std::vector<double> v;
      for (std::size_t i = 0; i < real.size(); ++i)
        if (x.labels[i] == t) v.push_back(real[i]);
      std::sort(v.begin(), v.end());
      // Empirical CDF of the restored values against the law: sup distance small.
      double d = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double c = model.law(t).cdf(v[i]);
        d = std::max({d, std::abs(c - double(i) / v.size()), std::abs(c - double(i + 1) / v.size())});
      }
      CHECK(d < 1.63 / std::sqrt(double(v.size())));
    }
  }

  TEST_CASE("smoothed fat texture is more autocorrelated than an iid control") {
    const auto& x = testing::synth_cache(4, 3)[1];
    tissue_intensity_model iid = default_intensity_model();
    iid.smoothing_sigma = 0.0;
    const auto fat = x.labels.mask_of(tissue::fat);
    const double smooth = lag1_correlation(x.image, fat);
    const double control = lag1_correlation(assign_intensities(x.labels, iid, 5), fat);
    CHECK(smooth > control + 0.1);
  }

  TEST_CASE("class counts follow the mix") {
    const auto c = class_counts(100, {});
    CHECK(c == std::array<std::size_t, 4>{10, 40, 40, 10});
    const auto seq = class_sequence(100, {}, 5);
    std::array<std::size_t, 4> seen{};
    for (const auto k : seq) ++seen[static_cast<int>(k)];
    CHECK(seen == c);
    const auto seven = class_counts(7, {});
    CHECK(std::accumulate(seven.begin(), seven.end(), std::size_t{0}) == 7);
  }

  TEST_CASE("single fatty image from a pure mix") {
    class_mix m;
    m.prevalence = {1, 0, 0, 0};
    const auto e = synth_ensemble(1, m, 3);
    REQUIRE(e.size() == 1);
    CHECK(e[0].cls == breast_class::fatty);
  }

  TEST_CASE("ensembles are deterministic") {
    const auto a = synth_ensemble(3, {}, 42);
    const auto b = synth_ensemble(3, {}, 42);
    for (int i = 0; i < 3; ++i) {
      CHECK(a[i].cls == b[i].cls);
      CHECK(a[i].image == b[i].image);
    }
  }

  TEST_CASE("invalid mixes are rejected") {
    class_mix m;
    m.prevalence = {0.5, 0.5, 0.5, -0.5};
    CHECK_THROWS_AS(validate_mix(m), argument_error);
    m.prevalence = {0.3, 0.3, 0.3, 0.3};
    CHECK_THROWS_AS(validate_mix(m), argument_error);
    CHECK_THROWS_AS(synth_ensemble(0, {}, 1), argument_error);
  }

  TEST_CASE("zero severity is the identity and flip is an involution") {
    const auto& img = testing::synth_cache(4, 3)[2].image;
    for (const auto k : {artifact_kind::breaks, artifact_kind::blend, artifact_kind::stick, artifact_kind::boundary,
                         artifact_kind::flip, artifact_kind::background})
      CHECK(inject_artifact(img, k, 0.0, 9) == img);
    const auto once = inject_artifact(img, artifact_kind::flip, 1.0, 9);
    CHECK_FALSE(once == img);
    CHECK(inject_artifact(once, artifact_kind::flip, 1.0, 9) == img);
  }

  TEST_CASE("background artifact at severity 0.5 lights half the background dimly") {
    const auto& x = testing::synth_cache(4, 3)[3];
    const auto out = inject_artifact(x.image, artifact_kind::background, 0.5, 11);
    std::size_t bg = 0, lit = 0;
    double sum = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (x.labels[i] != tissue::background) continue;
      ++bg;
      lit += out[i] != 0;
      sum += out[i];
    }
    CHECK(double(lit) / bg == doctest::Approx(0.5).epsilon(0.05));
    CHECK(sum / bg <= 6.0);
  }

  TEST_CASE("artifact names parse and ensemble targets are reproducible") {
    for (const auto k : {artifact_kind::breaks, artifact_kind::blend, artifact_kind::stick, artifact_kind::boundary,
                         artifact_kind::flip, artifact_kind::background})
      CHECK(parse_artifact_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_artifact_kind("smudge"), argument_error);
    const auto t = artifact_targets(100, 4, 0.03);
    CHECK(t.size() == 3);
    CHECK(t == artifact_targets(100, 4, 0.03));
  }
}
