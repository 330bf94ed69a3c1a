#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include "dgmeval/ensemble_io.hpp"
#include "dgmeval/error.hpp"
#include "support.hpp"

using namespace dgmeval;
using testing::temp_dir;

namespace {

ensemble_manifest manifest_of(const temp_dir& d, std::vector<std::string> ids) {
  ensemble_manifest m;
  m.root = d.path();
  m.ids = std::move(ids);
  m.labels.resize(m.ids.size());
  return m;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

eval_report sample_report() {
  eval_report r;
  r.stage1.memorized_fraction = 0.0;
  r.stage1.memorization_threshold = 0.9;
  stage2_result s2;
  s2.overall = {0.1, 0.01, 1000, 10000, 10};
  s2.per_family["texture"] = {0.2, 0.02, 1000, 10000, 10};
  s2.public_metric = ranking_summary{0.05, 0.004, 1000, 10000, 9};
  s2.nan_counts["skeleton.L.branch_length.mean"] = 3;
  r.stage2 = s2;
  diagnostics_result d;
  d.prevalence = {0.1, 0.4, 0.4, 0.1};
  d.density[1] = 0.97;
  d.coverage[1] = 0.92;
  d.artifact_flags["stick"] = {true, 10.0, 4.0};
  d.semivariogram.push_back({1, 0.5, 100});
  d.semivariogram.push_back({2, 1.0 / 3.0, 90});
  r.diagnostics = d;
  r.provenance = {{"seed", "7"}, {"k", "10"}};
  r.generated_at = "2026-01-01T00:00:00Z";
  return r;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("png round trip keeps the stored bytes") {
    temp_dir d;
    std::mt19937_64 gen(1);
    const auto img = testing::random_image(512, 512, gen);
    write_png(img, d / "a.png");
    CHECK(read_png(d / "a.png") == img);
  }

  TEST_CASE("manifest of three images loads in order") {
    temp_dir d;
    for (int i = 0; i < 3; ++i) write_png(testing::constant_image(512, 512, 10 * i + 5), d / ("im" + std::to_string(i) + ".png"));
    auto m = manifest_of(d, {"im2.png", "im0.png", "im1.png"});
    write_manifest(m, d / "m.txt");
    const auto back = read_manifest(d / "m.txt");
    REQUIRE(back.ids == m.ids);
    REQUIRE(back.declared_count == 3u);
    validate_manifest(back);
    const auto imgs = load_ensemble(back);
    REQUIRE(imgs.size() == 3);
    CHECK(imgs[0](0, 0) == 25);
    CHECK(imgs[1](0, 0) == 5);
    CHECK(imgs[2](0, 0) == 15);
  }

  TEST_CASE("manifest labels and comments survive a round trip") {
    temp_dir d;
    {
      std::ofstream f(d / "m.txt");
      f << "# generated\n# count=2\na.png\tdense\n\nb.png\n";
    }
    const auto m = read_manifest(d / "m.txt");
    REQUIRE(m.ids.size() == 2);
    CHECK(m.labels[0] == std::optional<std::string>("dense"));
    CHECK_FALSE(m.labels[1].has_value());
  }

  TEST_CASE("undersized image is rejected naming the file") {
    temp_dir d;
    write_png(testing::constant_image(512, 512, 1), d / "ok.png");
    write_png(testing::constant_image(256, 256, 1), d / "small.png");
    const auto m = manifest_of(d, {"ok.png", "small.png"});
    const auto msg = error_of([&] { load_ensemble(m); });
    CHECK(msg.find("small.png") != std::string::npos);
    CHECK_THROWS_AS(load_ensemble(m), validation_error);
    load_options o;
    o.allow_any_size = true;
    CHECK(load_ensemble(m, o)[1].width == 256);
  }

  TEST_CASE("duplicate identifiers are a validation error") {
    temp_dir d;
    write_png(testing::constant_image(512, 512, 1), d / "a.png");
    CHECK_THROWS_AS(validate_manifest(manifest_of(d, {"a.png", "a.png"})), validation_error);
  }

  TEST_CASE("declared count must match and files must exist") {
    temp_dir d;
    write_png(testing::constant_image(512, 512, 1), d / "a.png");
    auto m = manifest_of(d, {"a.png"});
    m.declared_count = 2;
    CHECK_THROWS_AS(validate_manifest(m), validation_error);
    CHECK_THROWS_AS(validate_manifest(manifest_of(d, {"a.png", "missing.png"})), io_error);
    CHECK_THROWS_AS(read_manifest(d / "nope.txt"), io_error);
  }

  TEST_CASE("non-png content is rejected") {
    temp_dir d;
    write_text_file(d / "x.png", "definitely not a png");
    CHECK_THROWS_AS(read_png(d / "x.png"), validation_error);
  }

  TEST_CASE("embedding round trip") {
    temp_dir d;
    embedding_matrix e;
    e.rows = 2;
    e.cols = 3;
    e.values = {1.f, -2.f, 3.5f, 0.f, 1e-7f, 42.f};
    e.source = "toy";
    write_embeddings(e, d / "e.bin");
    CHECK(read_embeddings(d / "e.bin") == e);
  }

  TEST_CASE("truncated embedding file") {
    temp_dir d;
    embedding_matrix e;
    e.rows = 2;
    e.cols = 3;
    e.values.assign(6, 1.f);
    write_embeddings(e, d / "e.bin");
    auto bytes = read_text_file(d / "e.bin");
    bytes.resize(bytes.size() - 3);
    write_text_file(d / "e.bin", bytes);
    const auto msg = error_of([&] { read_embeddings(d / "e.bin"); });
    CHECK(msg.find("truncated") != std::string::npos);
  }

  TEST_CASE("embedding with a NaN is rejected unless allowed") {
    temp_dir d;
    embedding_matrix e;
    e.rows = 1;
    e.cols = 2;
    e.values = {1.f, std::numeric_limits<float>::quiet_NaN()};
    write_embeddings(e, d / "e.bin");
    const auto msg = error_of([&] { read_embeddings(d / "e.bin"); });
    CHECK(msg.find("non-finite") != std::string::npos);
    CHECK(std::isnan(read_embeddings(d / "e.bin", true).values[1]));
  }

  TEST_CASE("report json contains ks_mean literally and round trips") {
    temp_dir d;
    const auto r = sample_report();
    write_report(r, d / "r.json");
    const auto text = read_text_file(d / "r.json");
    CHECK(text.find("\"ks_mean\": 0.1") != std::string::npos);
    CHECK(read_report(d / "r.json") == r);
  }

  TEST_CASE("report without optional sections round trips") {
    eval_report r;
    r.stage1.memorization_pass = false;
    r.stage1.memorized_fraction = 0.05;
    r.stage1.flagged = {"g1", "g2"};
    r.generated_at = "t";
    CHECK(report_from_json(report_to_json(r)) == r);
  }

  TEST_CASE("reports with NaN or out-of-range values are rejected before writing") {
    temp_dir d;
    auto r = sample_report();
    r.stage2->overall.ks_mean = std::nan("");
    CHECK_THROWS_AS(write_report(r, d / "r.json"), validation_error);
    CHECK_FALSE(std::filesystem::exists(d / "r.json"));
    r = sample_report();
    r.stage1.memorized_fraction = 1.5;
    CHECK_THROWS_AS(write_report(r, d / "r.json"), validation_error);
  }

  TEST_CASE("malformed report json") {
    CHECK_THROWS_AS(report_from_json("{"), validation_error);
    CHECK_THROWS_AS(report_from_json("{\"stage1\": 3}"), validation_error);
  }
}
