#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/features.hpp"
#include "dgmeval/morphology.hpp"
#include "dgmeval/segmentation.hpp"
#include "support.hpp"

using namespace dgmeval;

namespace {

double value_of(const feature_vector& v, const std::string& name) {
  for (const auto& x : v)
    if (x.name == name) return x.value;
  FAIL("missing feature " << name);
  return 0;
}

tissue_masks masks_with(int w, int h) {
  return {binary_mask(w, h), binary_mask(w, h), binary_mask(w, h), binary_mask(w, h), binary_mask(w, h)};
}

binary_mask rotate90(const binary_mask& m) {
  binary_mask r(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) r(m.height - 1 - y, x) = m(x, y);
  return r;
}

binary_mask disc(int size, double cx, double cy, double radius) {
  binary_mask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) m(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius;
  return m;
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("co-occurrence counts equal exhaustive pair enumeration") {
    std::mt19937_64 gen(17);
    const std::array<std::array<int, 2>, 5> offsets{{{1, 0}, {0, 1}, {1, 1}, {1, -1}, {2, -1}}};
    for (int rep = 0; rep < 100; ++rep) {
      const auto img = testing::random_image(8, 8, gen);
      const auto mask = testing::random_mask(8, 8, gen, 0.8);
      for (const int levels : {64, 8}) {
        for (const auto& [dx, dy] : offsets) {
          std::vector<std::uint64_t> oracle(static_cast<std::size_t>(levels) * levels, 0);
          for (int p = 0; p < 64; ++p)
            for (int q = 0; q < 64; ++q) {
              const int px = p % 8, py = p / 8, qx = q % 8, qy = q / 8;
              const bool fwd = qx - px == dx && qy - py == dy;
              const bool back = px - qx == dx && py - qy == dy;
              if (!(fwd || back) || !mask(px, py) || !mask(qx, qy)) continue;
              const int a = img(px, py) * levels / 256, b = img(qx, qy) * levels / 256;
              ++oracle[static_cast<std::size_t>(a) * levels + b];
            }
          const auto g = compute_cooccurrence(img, mask, dx, dy, levels);
          REQUIRE(g.counts == oracle);
          CHECK(g.total == std::accumulate(oracle.begin(), oracle.end(), std::uint64_t{0}));
          if (g.total) CHECK(std::accumulate(g.p.begin(), g.p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("hand-enumerated 4x4 co-occurrence") {
    gray_image img(4, 4);
    img.values = {0, 0, 4, 4, 0, 0, 4, 4, 0, 8, 8, 8, 8, 8, 12, 12};  // levels 0,1,2,3 at 64 bins
    const auto g = compute_cooccurrence(img, binary_mask(4, 4, 1), 1, 0);
    auto c = [&](int i, int j) { return g.counts[static_cast<std::size_t>(i) * 64 + j]; };
    // Horizontal pairs per row: (0,0)(0,1)(1,1) | (0,0)(0,1)(1,1) | (0,2)(2,2)(2,2) | (2,2)(2,3)(3,3)
    CHECK(c(0, 0) == 4);
    CHECK(c(0, 1) == 2);
    CHECK(c(1, 0) == 2);
    CHECK(c(1, 1) == 4);
    CHECK(c(0, 2) == 1);
    CHECK(c(2, 2) == 6);
    CHECK(c(2, 3) == 1);
    CHECK(c(3, 3) == 2);
    CHECK(g.total == 24);
  }

  TEST_CASE("constant region has zero contrast, unit energy, zero entropy") {
    const auto h = haralick(compute_cooccurrence(testing::constant_image(16, 16, 100), binary_mask(16, 16, 1), 1, 0));
    CHECK(h.contrast == 0.0);
    CHECK(h.energy == doctest::Approx(1.0));
    CHECK(h.entropy == 0.0);
    CHECK(h.homogeneity == doctest::Approx(1.0));
  }

  TEST_CASE("two-level checkerboard contrast is the squared level difference") {
    gray_image img(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) img(x, y) = (x + y) % 2 ? 200 : 40;
    const auto h = haralick(compute_cooccurrence(img, binary_mask(16, 16, 1), 1, 0));
    const double d = gray_level(200) - gray_level(40);
    CHECK(h.contrast == doctest::Approx(d * d));
    CHECK(h.dissimilarity == doctest::Approx(d));
    CHECK(h.entropy == doctest::Approx(1.0));
    CHECK(h.correlation == doctest::Approx(-1.0));
  }

  TEST_CASE("summary statistics use type-7 quantiles") {
    const std::vector<double> v{5, 1, 4, 2, 3, 10};
    const auto s = summarize(v);
    CHECK(s.count == 6);
    CHECK(s.min == 1);
    CHECK(s.max == 10);
    CHECK(s.q25 == doctest::Approx(2.25));
    CHECK(s.q50 == doctest::Approx(3.5));
    CHECK(s.q75 == doctest::Approx(4.75));
    CHECK(s.mean == doctest::Approx(25.0 / 6));
    const auto e = summarize(std::vector<double>{});
    CHECK(e.count == 0);
    CHECK(std::isnan(e.mean));
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> r(1 + rep);
      for (auto& x : r) x = nd(gen);
      const auto t = summarize(r);
      CHECK(t.min <= t.q25);
      CHECK(t.q25 <= t.q50);
      CHECK(t.q50 <= t.q75);
      CHECK(t.q75 <= t.max);
    }
  }

  TEST_CASE("filled square region properties") {
    const auto sq = testing::rect_mask(128, 128, 10, 20, 110, 120);
    const auto props = region_properties(sq);
    REQUIRE(props.size() == 1);
    CHECK(props[0].area == 10000);
    CHECK(props[0].perimeter == 400);
    CHECK(props[0].solidity == doctest::Approx(1.0));
    CHECK(props[0].extent == doctest::Approx(1.0));
    CHECK(props[0].eccentricity == doctest::Approx(0.0));
    CHECK(convexity_perimeter_ratio(sq) == doctest::Approx(1.0));
  }

  TEST_CASE("eccentricity of a 10x2 bar follows its second moments") {
    const auto props = region_properties(testing::rect_mask(20, 20, 3, 5, 13, 7));
    REQUIRE(props.size() == 1);
    const double vx = (100.0 - 1) / 12, vy = (4.0 - 1) / 12;
    CHECK(props[0].eccentricity == doctest::Approx(std::sqrt(1 - vy / vx)));
    CHECK(props[0].perimeter == 24);
  }

  TEST_CASE("two disjoint unit squares") {
    auto m = masks_with(16, 16);
    m.fat(2, 2) = 1;
    m.fat(9, 9) = 1;
    feature_vector out;
    morphology_features(m, out);
    CHECK(value_of(out, "morphology.F.count") == 2);
    CHECK(value_of(out, "morphology.F.area.mean") == 1);
    CHECK(value_of(out, "morphology.F.total_area") == 2);
    CHECK(value_of(out, "morphology.G.count") == 0);
    CHECK(std::isnan(value_of(out, "morphology.G.area.mean")));
  }

  TEST_CASE("erased skin arc drops the convexity ratio below 0.9") {
    for (const auto& x : testing::synth_cache(4, 3)) {
      CHECK(convexity_perimeter_ratio(segment(x.image).breast()) >= 0.9);
      const auto hurt = inject_artifact(x.image, artifact_kind::boundary, 0.5, 21);
      CHECK(convexity_perimeter_ratio(segment(hurt).breast()) < 0.9);
    }
  }

  TEST_CASE("moments equal direct summation on random 5x5 masks") {
    std::mt19937_64 gen(8);
    for (int rep = 0; rep < 100; ++rep) {
      const auto mask = testing::random_mask(5, 5, gen);
      if (mask.count() == 0) continue;
      const auto img = testing::random_image(5, 5, gen);
      for (const bool weighted : {false, true}) {
        const auto ms = compute_moments(mask, weighted ? &img : nullptr);
        double m00 = 0, m10 = 0, m01 = 0;
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 5; ++x)
            if (mask(x, y)) {
              const double w = weighted ? img(x, y) : 1.0;
              m00 += w;
              m10 += w * x;
              m01 += w * y;
            }
        for (int p = 0; p <= 3; ++p)
          for (int q = 0; p + q <= 3; ++q) {
            double raw = 0, central = 0;
            for (int y = 0; y < 5; ++y)
              for (int x = 0; x < 5; ++x)
                if (mask(x, y)) {
                  const double w = weighted ? img(x, y) : 1.0;
                  raw += w * std::pow(x, p) * std::pow(y, q);
                  if (m00 > 0) central += w * std::pow(x - m10 / m00, p) * std::pow(y - m01 / m00, q);
                }
            CHECK(ms.raw[p][q] == doctest::Approx(raw).epsilon(1e-12));
            if (m00 > 0) {
              CHECK(ms.central[p][q] == doctest::Approx(central).epsilon(1e-9).scale(m00 * 16));
              if (p + q >= 2)
                CHECK(ms.normalized[p][q] ==
                      doctest::Approx(central / std::pow(m00, 1.0 + (p + q) / 2.0)).epsilon(1e-9).scale(1.0));
            }
          }
      }
    }
  }

  TEST_CASE("hand-computed 3x3 moments") {
    binary_mask m(3, 3);
    m.values = {1, 1, 0, 0, 1, 0, 0, 1, 1};  // (0,0) (1,0) (1,1) (1,2) (2,2)
    const auto ms = compute_moments(m);
    CHECK(ms.raw[0][0] == 5);
    CHECK(ms.raw[1][0] == 5);   // 0+1+1+1+2
    CHECK(ms.raw[0][1] == 5);   // 0+0+1+2+2
    CHECK(ms.raw[1][1] == 7);   // 0+0+1+2+4
    CHECK(ms.raw[2][0] == 7);   // 0+1+1+1+4
    CHECK(ms.raw[0][2] == 9);   // 0+0+1+4+4
    CHECK(ms.raw[2][1] == 11);  // 0+0+1+2+8
  }

  TEST_CASE("symmetric disc has vanishing first central moments") {
    const auto ms = compute_moments(disc(64, 31.0, 31.0, 20.0));
    CHECK(ms.central[1][0] == 0.0);
    CHECK(ms.central[0][1] == 0.0);
    CHECK(std::abs(ms.central[1][1]) < 1e-6);
  }

  TEST_CASE("Hu invariants survive 90-degree rotation and mirroring") {
    std::mt19937_64 gen(12);
    for (int rep = 0; rep < 10; ++rep) {
      // Random union of rectangles gives an irregular blob.
      binary_mask m(48, 40);
      std::uniform_int_distribution<int> ux(0, 35), uy(0, 27), us(3, 12);
      for (int k = 0; k < 4; ++k) {
        const int x = ux(gen), y = uy(gen);
        m = mask_or(m, testing::rect_mask(48, 40, x, y, std::min(48, x + us(gen)), std::min(40, y + us(gen))));
      }
      const auto a = compute_moments(m).hu;
      const auto r = compute_moments(rotate90(m)).hu;
      const auto f = compute_moments(mirror_horizontal(m)).hu;
      for (int i = 0; i < 7; ++i) {
        CHECK(close_rel(a[i], r[i], 1e-6));
        // Mirroring flips the sign of the seventh invariant.
        CHECK(close_rel(i == 6 ? std::abs(a[i]) : a[i], i == 6 ? std::abs(f[i]) : f[i], 1e-6));
      }
      CHECK(close_rel(a[6], -f[6], 1e-6));
    }
  }

  TEST_CASE("empty region moments are NaN") {
    const auto ms = compute_moments(binary_mask(8, 8));
    CHECK(std::isnan(ms.raw[0][0]));
    CHECK(std::isnan(ms.hu[0]));
  }

  TEST_CASE("box counts match a direct grid scan") {
    std::mt19937_64 gen(5);
    const auto m = testing::random_mask(100, 70, gen, 0.01);
    for (const int s : {2, 4, 8, 16, 32, 64}) {
      std::size_t n = 0;
      for (int by = 0; by < 70; by += s)
        for (int bx = 0; bx < 100; bx += s) {
          bool hit = false;
          for (int y = by; y < std::min(70, by + s); ++y)
            for (int x = bx; x < std::min(100, bx + s); ++x) hit |= m(x, y) != 0;
          n += hit;
        }
      CHECK(occupied_boxes(m, s) == n);
    }
  }

  TEST_CASE("box dimension of a filled plane and a line") {
    CHECK(box_dimension(binary_mask(512, 512, 1)) == doctest::Approx(2.0).epsilon(0.025));
    const auto line = testing::rect_mask(512, 512, 0, 200, 512, 201);
    CHECK(std::abs(box_dimension(line) - 1.0) <= 0.05);
    const auto diag = [] {
      binary_mask d(512, 512);
      for (int i = 0; i < 512; ++i) d(i, i) = 1;
      return d;
    }();
    CHECK(std::abs(box_dimension(diag) - 1.0) <= 0.05);
    CHECK(std::isnan(box_dimension(binary_mask(64, 64))));
  }

  TEST_CASE("clustered masks are more lacunar than uniform ones of equal density") {
    std::mt19937_64 gen(9);
    const auto uniform = testing::random_mask(256, 256, gen, 1.0 / 16);
    binary_mask clustered(256, 256);
    std::uniform_int_distribution<int> u(0, 63);
    std::size_t placed = 0;
    while (placed < uniform.count()) {
      const int x0 = u(gen) * 4, y0 = u(gen) * 4;
      for (int y = y0; y < y0 + 4; ++y)
        for (int x = x0; x < x0 + 4; ++x)
          if (!clustered(x, y) && placed < uniform.count()) {
            clustered(x, y) = 1;
            ++placed;
          }
    }
    REQUIRE(clustered.count() == uniform.count());
    CHECK(lacunarity(clustered, 8) > lacunarity(uniform, 8));
    // Lacunarity of a full mask is exactly 1.
    CHECK(lacunarity(binary_mask(64, 64, 1), 8) == doctest::Approx(1.0));
  }

  TEST_CASE("skeleton of a straight segment") {
    const auto seg = testing::rect_mask(64, 64, 10, 30, 50, 31);
    const auto s = analyze_skeleton(seg, binary_mask(64, 64, 1));
    CHECK(s.components == 1);
    CHECK(s.endpoints == 2);
    CHECK(s.junctions == 0);
    CHECK(s.branches == 1);
    CHECK(s.region_areas.size() == 1);
  }

  TEST_CASE("skeleton of a plus sign") {
    const auto plus = mask_or(testing::rect_mask(64, 64, 10, 30, 51, 31), testing::rect_mask(64, 64, 30, 10, 31, 51));
    const auto s = analyze_skeleton(plus, binary_mask(64, 64, 1));
    CHECK(s.components == 1);
    CHECK(s.endpoints == 4);
    CHECK(s.junctions == 1);
    CHECK(s.branches == 4);
  }

  TEST_CASE("breaks raise the skeleton component count") {
    for (const auto& x : testing::synth_cache(4, 3)) {
      const auto clean = segment(x.image);
      const auto broken = segment(inject_artifact(x.image, artifact_kind::breaks, 1.0, 4));
      CHECK(analyze_skeleton(broken.ligament, broken.breast()).components >
            analyze_skeleton(clean.ligament, clean.breast()).components);
    }
  }

  TEST_CASE("fat to gland ratio") {
    auto m = masks_with(8, 8);
    m.fat(0, 0) = m.fat(1, 0) = 1;
    m.gland(0, 1) = m.gland(1, 1) = 1;
    CHECK(fg_ratio(m) == 1.0);
    m.gland(0, 1) = m.gland(1, 1) = 0;
    CHECK(std::isnan(fg_ratio(m)));
    const auto dense = synth_one(breast_class::dense, 5, 0);
    const auto fatty = synth_one(breast_class::fatty, 5, 1);
    CHECK(fg_ratio(segment(dense.image)) < fg_ratio(segment(fatty.image)));
  }

  TEST_CASE("default schema is wide and stable across images") {
    const feature_schema schema;
    const auto cols = schema.columns();
    CHECK(cols.size() > 100);
    for (const auto& x : testing::synth_cache(4, 3)) {
      const auto v = extract_features(x.image, schema);
      REQUIRE(v.size() == cols.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(v[i].name == cols[i].name);
        CHECK(v[i].family == cols[i].family);
      }
    }
    const auto pub = public_metric_columns();
    CHECK(pub.size() == 9);
    for (const auto& p : pub)
      CHECK(std::any_of(cols.begin(), cols.end(), [&](const feature_column& c) { return c.name == p; }));
  }

  TEST_CASE("NaN appears only where a region is empty") {
    // Fat and gland only: ligament-dependent features are NaN, texture is not.
    gray_image img(128, 128);
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) img(x, y) = x < 64 ? 70 : 170;
    const auto v = extract_features(img);
    for (const auto& f : v) {
      if (f.family == feature_family::texture || f.family == feature_family::fg_ratio) CHECK_FALSE(std::isnan(f.value));
    }
    CHECK(std::isnan(value_of(v, "skeleton.L.branch_length.mean")));
    CHECK(value_of(v, "skeleton.L.components") == 0);
  }

  TEST_CASE("extract_all: identical rows, single-family schema, permutation") {
    const auto& s = testing::synth_cache(4, 3);
    std::vector<gray_image> imgs{s[0].image, s[1].image, s[0].image};
    const auto m = extract_all(imgs, {}, {}, 1);
    REQUIRE(m.rows == 3);
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double a = m.at(0, c), b = m.at(2, c);
      CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }
    feature_schema only;
    only.families = {feature_family::fg_ratio};
    CHECK(extract_all(imgs, only).cols() == 1);
    std::vector<gray_image> perm{imgs[1], imgs[0]};
    const auto p = extract_all(perm, {}, {}, 1);
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double a = m.at(0, c), b = p.at(1, c);
      CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }
  }

  TEST_CASE("feature matrices round trip through CSV and the binary cache") {
    testing::temp_dir d;
    const auto& s = testing::synth_cache(4, 3);
    std::vector<gray_image> imgs{s[0].image, s[1].image};
    std::vector<std::string> ids{"a", "b"};
    auto m = extract_all(imgs, {}, ids, 1);
    m.at(1, 3) = std::nan("");
    write_feature_csv(m, d / "f.csv");
    write_feature_cache(m, d / "f.bin");
    for (const auto& back : {read_feature_matrix(d / "f.csv"), read_feature_matrix(d / "f.bin")}) {
      CHECK(back.columns == m.columns);
      CHECK(back.ids == m.ids);
      REQUIRE(back.rows == m.rows);
      CHECK(std::isnan(back.at(1, 3)));
    }
    const auto csv = read_feature_csv(d / "f.csv");
    for (std::size_t i = 0; i < m.values.size(); ++i)
      if (!std::isnan(m.values[i])) CHECK(csv.values[i] == m.values[i]);
  }
}
