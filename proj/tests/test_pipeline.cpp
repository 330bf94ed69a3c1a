#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dgmeval/error.hpp"
#include "dgmeval/pipeline.hpp"
#include "support.hpp"

using namespace dgmeval;

namespace {

std::vector<gray_image> images_of(const std::vector<synth_sample>& s, std::size_t from = 0, std::size_t to = SIZE_MAX) {
  std::vector<gray_image> out;
  for (std::size_t i = from; i < std::min(to, s.size()); ++i) out.push_back(s[i].image);
  return out;
}

run_config small_config() {
  run_config c;
  c.n_boot = 20;
  c.n_pairs = 2000;
  c.seed = 5;
  c.threads = 1;
  return c;
}

// Minimal well-formedness check: balanced tags, one root, proper nesting.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  int roots = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const auto j = s.find('>', i);
    if (j == std::string::npos) return false;
    std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      const auto name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    const auto name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) ++roots;
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty() && roots == 1;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config validation") {
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.n_pairs = 0;
    CHECK_THROWS_AS(c.validate(), argument_error);
    c = small_config();
    c.frechet_threshold = -1;
    CHECK_THROWS_AS(c.validate(), argument_error);
    c = small_config();
    c.k = 0;
    CHECK_THROWS_AS(c.validate(), argument_error);
    c = small_config();
    c.memorization_threshold = -0.5;
    CHECK_THROWS_AS(c.validate(), argument_error);
    const auto echo = config_echo(small_config());
    CHECK(std::any_of(echo.begin(), echo.end(), [](const auto& kv) { return kv.first == "seed" && kv.second == "5"; }));
  }

  TEST_CASE("clean split passes, ranks, plots and is deterministic") {
    const auto& all = testing::synth_cache(180, 31);
    evaluation_inputs in;
    in.train = images_of(all, 0, 120);
    in.gen = images_of(all, 120);
    const auto cfg = small_config();
    const auto a = evaluate(cfg, in);
    const auto& rep = a.report;
    CHECK(rep.stage1.passed());
    CHECK(rep.stage1.flagged.empty());
    REQUIRE(rep.stage2.has_value());
    CHECK(rep.stage2->overall.ks_mean >= 0.0);
    CHECK(rep.stage2->overall.ks_mean <= 1.0);
    CHECK(rep.stage2->per_family.size() == kAllFamilies.size());
    CHECK(rep.stage2->public_metric.has_value());
    REQUIRE(rep.diagnostics.has_value());
    for (const auto& [name, f] : rep.diagnostics->artifact_flags) CHECK_MESSAGE(!f.flagged, name);
    CHECK(rep.diagnostics->prevalence[0] + rep.diagnostics->prevalence[1] + rep.diagnostics->prevalence[2] +
              rep.diagnostics->prevalence[3] ==
          doctest::Approx(1.0));

    auto b = evaluate(cfg, in).report;
    b.generated_at = rep.generated_at;
    CHECK(report_to_json(b) == report_to_json(rep));

    testing::temp_dir d;
    const auto files = emit_plots(rep, &*a.train_features, &*a.gen_features, d.path(), 50);
    CHECK(files.size() == 6);
    for (const auto& f : files)
      if (f.extension() == ".svg") CHECK_MESSAGE(well_formed_xml(read_text_file(f)), f.string());
    const auto scatter = read_csv(d / "pc_scatter.csv");
    CHECK(scatter.size() == 1 + 50 + 50);
    const auto sv = read_csv(d / "semivariogram.csv");
    REQUIRE(sv.size() == 1 + rep.diagnostics->semivariogram.size());
    for (std::size_t i = 0; i < rep.diagnostics->semivariogram.size(); ++i) {
      CHECK(std::stoi(sv[i + 1][0]) == rep.diagnostics->semivariogram[i].lag);
      CHECK(std::abs(std::stod(sv[i + 1][1]) - rep.diagnostics->semivariogram[i].gamma) <= 1e-9);
    }
    testing::temp_dir d2;
    emit_plots(rep, &*a.train_features, &*a.gen_features, d2.path(), 5000);
    CHECK(read_csv(d2 / "pc_scatter.csv").size() == 1 + 120 + 60);
  }

  TEST_CASE("planted copies fail the memorization gate and skip stage 2 unless forced") {
    const auto& all = testing::synth_cache(180, 31);
    evaluation_inputs in;
    in.train = images_of(all, 0, 120);
    in.gen = images_of(all, 120);
    for (std::size_t i = 0; i < 3; ++i) in.gen[10 * i] = in.train[i];
    auto cfg = small_config();
    const auto r = evaluate(cfg, in).report;
    CHECK_FALSE(r.stage1.memorization_pass);
    CHECK(r.stage1.flagged.size() >= 3);
    CHECK_FALSE(r.stage2.has_value());
    CHECK_FALSE(r.diagnostics.has_value());
    cfg.force_stage2 = true;
    cfg.diagnostics = false;
    const auto f = evaluate(cfg, in).report;
    CHECK(f.stage2.has_value());
    CHECK(std::any_of(f.provenance.begin(), f.provenance.end(), [](const auto& kv) { return kv.first == "stage2_forced"; }));
  }

  TEST_CASE("Frechet gate with embeddings") {
    const auto& all = testing::synth_cache(180, 31);
    evaluation_inputs in;
    in.train = images_of(all, 0, 20);
    in.gen = images_of(all, 20, 30);
    embedding_matrix et, eg;
    et.rows = 20;
    eg.rows = 10;
    et.cols = eg.cols = 2;
    std::mt19937_64 gen(1);
    std::normal_distribution<float> nd;
    for (int i = 0; i < 40; ++i) et.values.push_back(nd(gen));
    for (int i = 0; i < 20; ++i) eg.values.push_back(nd(gen) + 10.f);
    in.train_embeddings = et;
    in.gen_embeddings = eg;
    auto cfg = small_config();
    cfg.diagnostics = false;
    const auto r = evaluate(cfg, in).report;
    REQUIRE(r.stage1.frechet_distance.has_value());
    CHECK(*r.stage1.frechet_distance > 30.0);
    CHECK_FALSE(r.stage1.frechet_pass);
    CHECK_FALSE(r.stage2.has_value());
    in.gen_embeddings.reset();
    CHECK_THROWS_AS(evaluate(cfg, in), argument_error);
  }

  TEST_CASE("diagnostics are skipped below one hundred training images") {
    const auto& all = testing::synth_cache(180, 31);
    evaluation_inputs in;
    in.train = images_of(all, 0, 30);
    in.gen = images_of(all, 30, 40);
    const auto r = evaluate(small_config(), in).report;
    CHECK(r.stage2.has_value());
    CHECK_FALSE(r.diagnostics.has_value());
    CHECK(std::any_of(r.provenance.begin(), r.provenance.end(), [](const auto& kv) { return kv.first == "diagnostics_note"; }));
    const auto d = diagnose(small_config(), in);
    CHECK_FALSE(d.report.diagnostics.has_value());
  }
}
