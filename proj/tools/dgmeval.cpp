#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dgmeval/diagnostics.hpp"
#include "dgmeval/ensemble_io.hpp"
#include "dgmeval/error.hpp"
#include "dgmeval/features.hpp"
#include "dgmeval/memorization.hpp"
#include "dgmeval/parallel.hpp"
#include "dgmeval/phantom.hpp"
#include "dgmeval/pipeline.hpp"
#include "dgmeval/rng.hpp"
#include "dgmeval/segmentation.hpp"
#include "dgmeval/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dgmeval;

namespace {

// Bad flags or flag combinations; exit code 1.
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key=value lines; '#' starts a comment line. Keys may use '_' or '-'.
std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw usage_error(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

// Feeds config entries to options the command line left unset, so flags win.
void apply_config(CLI::App& sub, const fs::path& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    if (key == "config") throw usage_error("config files cannot include other config files");
    auto* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw usage_error("unknown config key '" + key + "' for " + sub.get_name());
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw usage_error("config key '" + key + "': " + e.what());
    }
  }
}

void require(bool present, const std::string& flag) {
  if (!present) throw usage_error("missing required option " + flag);
}

class_mix parse_mix(const std::string& text) {
  class_mix mix;
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= 4) throw usage_error("--mix takes four comma-separated prevalences");
    try {
      mix.prevalence[i++] = std::stod(part);
    } catch (const std::exception&) {
      throw usage_error("--mix: not a number: " + part);
    }
  }
  if (i != 4) throw usage_error("--mix takes four comma-separated prevalences");
  validate_mix(mix);
  return mix;
}

feature_schema parse_families(const std::vector<std::string>& names) {
  feature_schema schema;
  if (names.empty()) return schema;
  schema.families.clear();
  for (const auto& n : names) {
    const auto f = parse_feature_family(n);
    if (!f) throw usage_error("unknown feature family '" + n + "'");
    schema.families.push_back(*f);
  }
  return schema;
}

std::string file_stem_for(const std::string& id) {
  std::string s = fs::path(id).replace_extension().string();
  std::replace(s.begin(), s.end(), '/', '_');
  std::replace(s.begin(), s.end(), '\\', '_');
  return s;
}

struct loaded_ensemble {
  ensemble_manifest manifest;
  std::vector<gray_image> images;
};

loaded_ensemble load_manifest_images(const fs::path& path, unsigned threads, bool any_size = false) {
  loaded_ensemble e;
  e.manifest = read_manifest(path);
  validate_manifest(e.manifest);
  load_options lo;
  lo.threads = threads;
  lo.allow_any_size = any_size;
  e.images = load_ensemble(e.manifest, lo);
  return e;
}

gray_image to_gray(const real_image& r) {
  gray_image g(r.width, r.height);
  for (std::size_t i = 0; i < r.size(); ++i)
    g[i] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(r[i]), 0.0, 255.0));
  return g;
}

void write_semivariogram_csv(const std::vector<semivariogram_point>& pts, const fs::path& path) {
  std::string out = "lag,gamma,pairs\n";
  for (const auto& p : pts) out += std::to_string(p.lag) + "," + fmt(p.gamma) + "," + std::to_string(p.pairs) + "\n";
  write_text_file(path, out);
}

json summary_json(const ranking_summary& s) {
  return {{"ks_mean", s.ks_mean}, {"ks_std", s.ks_std}, {"n_boot", s.n_boot}, {"n_pairs", s.n_pairs}, {"k", s.k}};
}

bool is_manifest(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".txt" || ext == ".manifest" || ext == ".lst";
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct synth_cmd {
  std::string out;
  std::size_t n = 0;
  std::string mix = "0.1,0.4,0.4,0.1";
  std::uint64_t seed = 0;
  std::string artifact;
  double severity = 0.5;
  double fraction = 1.0;
  std::optional<std::uint64_t> artifact_seed;
  bool labels = false;
  std::string prefix = "img_";
  unsigned threads = 0;

  void add(CLI::App& sub) {
    sub.add_option("--out", out, "Output directory");
    sub.add_option("-n,--count", n, "Number of images");
    sub.add_option("--mix", mix, "Class prevalences fatty,scattered,heterogeneous,dense");
    sub.add_option("--seed", seed, "Master seed");
    sub.add_option("--artifact", artifact, "Artifact to inject: breaks|blend|stick|boundary|flip|background");
    sub.add_option("--severity", severity, "Artifact severity in [0,1]");
    sub.add_option("--fraction", fraction, "Fraction of images receiving the artifact");
    sub.add_option("--artifact-seed", artifact_seed, "Seed for artifact placement (defaults to --seed)");
    sub.add_flag("--labels", labels, "Also write label maps (tissue code * 60) under labels/");
    sub.add_option("--prefix", prefix, "File name prefix");
    sub.add_option("--threads", threads, "Worker threads (0: DGMEVAL_THREADS or hardware)");
  }

  int run() {
    require(!out.empty(), "--out");
    if (n == 0) throw usage_error("--count must be at least 1");
    const auto m = parse_mix(mix);
    std::optional<artifact_kind> kind;
    if (!artifact.empty()) kind = parse_artifact_kind(artifact);
    if (severity < 0 || severity > 1) throw usage_error("--severity must lie in [0,1]");
    if (fraction < 0 || fraction > 1) throw usage_error("--fraction must lie in [0,1]");
    const fs::path dir(out);
    fs::create_directories(dir);
    if (labels) fs::create_directories(dir / "labels");

    const auto classes = class_sequence(n, m, split_seed(seed, streams::shuffle));
    const std::uint64_t aseed = artifact_seed.value_or(seed);
    std::vector<char> targeted(n, 0);
    if (kind)
      for (const auto i : artifact_targets(n, aseed, fraction)) targeted[i] = 1;

    const int digits = std::max<int>(6, static_cast<int>(std::to_string(n - 1).size()));
    ensemble_manifest manifest;
    manifest.root = dir;
    for (std::size_t i = 0; i < n; ++i) {
      std::string num = std::to_string(i);
      manifest.ids.push_back(prefix + std::string(static_cast<std::size_t>(digits) - num.size(), '0') + num + ".png");
      manifest.labels.emplace_back(std::string(to_string(classes[i])));
    }
    const unsigned t = resolve_threads(threads);
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t len = std::min(chunk, n - start);
      parallel_for(len, t, [&](std::size_t j) {
        const std::size_t i = start + j;
        auto s = synth_one(classes[i], seed, i);
        if (kind && targeted[i]) s.image = inject_artifact(s.image, *kind, severity, artifact_image_seed(*kind, aseed, i));
        write_png(s.image, dir / manifest.ids[i]);
        if (labels) {
          gray_image g(s.labels.width, s.labels.height);
          for (std::size_t p = 0; p < g.size(); ++p) g[p] = static_cast<std::uint8_t>(60 * static_cast<int>(s.labels[p]));
          write_png(g, dir / "labels" / manifest.ids[i]);
        }
      });
    }
    write_manifest(manifest, dir / "manifest.txt");
    std::cout << "wrote " << n << " images and " << (dir / "manifest.txt").string() << "\n";
    return 0;
  }
};

struct segment_cmd {
  std::string manifest;
  std::string image;
  std::string out;
  unsigned threads = 0;

  void add(CLI::App& sub) {
    sub.add_option("--manifest", manifest, "Manifest of images to segment");
    sub.add_option("--image", image, "A single PNG to segment");
    sub.add_option("--out", out, "Output directory for mask PNGs");
    sub.add_option("--threads", threads, "Worker threads");
  }

  static void write_masks(const gray_image& img, const fs::path& dir, const std::string& stem) {
    const auto m = segment(img);
    write_png(m.background, dir / (stem + "_background.png"));
    write_png(m.fat, dir / (stem + "_fat.png"));
    write_png(m.gland, dir / (stem + "_gland.png"));
    write_png(m.skin, dir / (stem + "_skin.png"));
    write_png(m.ligament, dir / (stem + "_ligament.png"));
  }

  int run() {
    require(!out.empty(), "--out");
    if (manifest.empty() == image.empty()) throw usage_error("give exactly one of --manifest or --image");
    const fs::path dir(out);
    fs::create_directories(dir);
    load_options lo;
    lo.allow_any_size = true;
    if (!image.empty()) {
      write_masks(read_png(image, lo), dir, fs::path(image).stem().string());
      return 0;
    }
    const auto man = read_manifest(manifest);
    validate_manifest(man);
    parallel_for(man.size(), resolve_threads(threads),
                 [&](std::size_t i) { write_masks(read_png(man.path_of(i), lo), dir, file_stem_for(man.ids[i])); });
    std::cout << "segmented " << man.size() << " images into " << dir.string() << "\n";
    return 0;
  }
};

struct features_cmd {
  std::string manifest;
  std::string csv;
  std::string cache;
  std::vector<std::string> families;
  unsigned threads = 0;

  void add(CLI::App& sub) {
    sub.add_option("--manifest", manifest, "Manifest of images");
    sub.add_option("--csv", csv, "Write the feature matrix as CSV");
    sub.add_option("--cache", cache, "Write the feature matrix as a binary cache");
    sub.add_option("--families", families, "Feature families to extract (default: all)")->delimiter(',');
    sub.add_option("--threads", threads, "Worker threads");
  }

  int run() {
    require(!manifest.empty(), "--manifest");
    if (csv.empty() && cache.empty()) throw usage_error("give --csv and/or --cache");
    const auto schema = parse_families(families);
    const auto e = load_manifest_images(manifest, threads);
    const auto fm = extract_all(e.images, schema, e.manifest.ids, threads);
    if (!csv.empty()) write_feature_csv(fm, csv);
    if (!cache.empty()) write_feature_cache(fm, cache);
    std::cout << fm.rows << " images x " << fm.cols() << " features\n";
    return 0;
  }
};

struct memcheck_cmd {
  std::string train;
  std::string gen;
  std::string out;
  std::optional<double> threshold;
  std::size_t subset = kDefaultCalibrationSubset;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void add(CLI::App& sub) {
    sub.add_option("--train", train, "Training manifest");
    sub.add_option("--gen", gen, "Generated manifest");
    sub.add_option("--out", out, "JSON output (stdout when omitted)");
    sub.add_option("--threshold", threshold, "Fixed threshold instead of calibrating (e.g. 0.9)");
    sub.add_option("--subset", subset, "Calibration subset size");
    sub.add_option("--seed", seed, "Seed for the calibration split");
    sub.add_option("--threads", threads, "Worker threads");
  }

  int run() {
    require(!train.empty(), "--train");
    require(!gen.empty(), "--gen");
    if (threshold && (*threshold < 0 || *threshold > 1)) throw usage_error("--threshold must lie in [0,1]");
    const auto t = load_manifest_images(train, threads);
    const auto g = load_manifest_images(gen, threads);
    const auto tb = boundary_signatures(t.images, threads);
    const auto gb = boundary_signatures(g.images, threads);
    json j;
    memorization_calibration calib;
    if (threshold) {
      calib = fixed_calibration(*threshold);
    } else {
      auto n = subset;
      if (n >= tb.size()) n = tb.size() / 2;
      calib = calibrate(tb, n, seed, threads);
    }
    const auto sr = screen(gb, tb, calib, threads);
    j["threshold"] = calib.threshold;
    j["calibration_max"] = calib.max ? json(*calib.max) : json(nullptr);
    j["calibration_std"] = calib.std ? json(*calib.std) : json(nullptr);
    j["calibration_subset"] = calib.subset;
    j["memorized_fraction"] = sr.memorized_fraction;
    j["flagged"] = json::array();
    for (const auto i : sr.flagged) j["flagged"].push_back(g.manifest.ids[i]);
    const std::string text = j.dump(2) + "\n";
    if (out.empty())
      std::cout << text;
    else
      write_text_file(out, text);
    return 0;
  }
};

struct frechet_cmd {
  std::string a;
  std::string b;

  void add(CLI::App& sub) {
    sub.add_option("a", a, "First embedding file")->required();
    sub.add_option("b", b, "Second embedding file")->required();
  }

  int run() {
    const auto ea = read_embeddings(a);
    const auto eb = read_embeddings(b);
    if (ea.cols != eb.cols) throw validation_error("embedding dimensions differ");
    std::cout << fmt(frechet_distance(fit_gaussian(ea), fit_gaussian(eb))) << "\n";
    return 0;
  }
};

struct rank_cmd {
  std::string train;
  std::string gen;
  std::string out;
  std::string per_family;
  std::vector<std::string> families;
  int k = 10;
  std::size_t n_pairs = 10000;
  std::size_t n_boot = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void add(CLI::App& sub) {
    sub.add_option("--train", train, "Training features (.csv or cache) or manifest (.txt)");
    sub.add_option("--gen", gen, "Generated features (.csv or cache) or manifest (.txt)");
    sub.add_option("--out", out, "Ranking JSON (stdout when omitted)");
    sub.add_option("--per-family", per_family, "Per-family metric CSV");
    sub.add_option("--families", families, "Families used when extracting from manifests")->delimiter(',');
    sub.add_option("--k", k, "Principal components");
    sub.add_option("--n-pairs", n_pairs, "Pairs per distance distribution");
    sub.add_option("--n-boot", n_boot, "Bootstrap replicates");
    sub.add_option("--seed", seed, "Seed");
    sub.add_option("--threads", threads, "Worker threads");
  }

  feature_matrix load(const std::string& p, const feature_schema& schema) const {
    if (!is_manifest(p)) return read_feature_matrix(p);
    const auto e = load_manifest_images(p, threads);
    return extract_all(e.images, schema, e.manifest.ids, threads);
  }

  int run() {
    require(!train.empty(), "--train");
    require(!gen.empty(), "--gen");
    if (k < 1 || n_pairs < 1 || n_boot < 1) throw usage_error("--k, --n-pairs and --n-boot must be at least 1");
    const auto schema = parse_families(families);
    const auto ft = load(train, schema);
    const auto fg = load(gen, schema);
    ranking_options o;
    o.k = k;
    o.n_pairs = n_pairs;
    o.n_boot = n_boot;
    o.seed = seed;
    o.threads = threads;
    const auto r = ranking_metric(ft, fg, o);
    json j = summary_json(r.summary());
    j["dropped_columns"] = r.dropped_columns;
    j["per_family"] = json::object();
    std::string csv = "family,ks_mean,ks_std,k\n";
    for (const auto fam : kAllFamilies) {
      const auto fs = ft.select_family(fam);
      if (fs.cols() == 0) continue;
      const auto pr = per_family_metric(ft, fg, fam, o).summary();
      j["per_family"][std::string(to_string(fam))] = summary_json(pr);
      csv += std::string(to_string(fam)) + "," + fmt(pr.ks_mean) + "," + fmt(pr.ks_std) + "," + std::to_string(pr.k) + "\n";
    }
    const auto pub = public_metric_columns();
    if (std::all_of(pub.begin(), pub.end(), [&](const std::string& c) { return ft.column_index(c).has_value(); }))
      j["public_metric"] = summary_json(public_metric(ft, fg, o).summary());
    else
      j["public_metric"] = nullptr;
    if (!per_family.empty()) write_text_file(per_family, csv);
    const std::string text = j.dump(2) + "\n";
    if (out.empty())
      std::cout << text;
    else
      write_text_file(out, text);
    return 0;
  }
};

void add_run_options(CLI::App& sub, run_config& c, std::string& train, std::string& gen, std::string& out) {
  sub.add_option("--train", train, "Training manifest");
  sub.add_option("--gen", gen, "Generated manifest");
  sub.add_option("--out", out, "Output directory");
  sub.add_option("--k-nn", c.k_nn, "Neighbours for density and coverage");
  sub.add_option("--mean-slices", c.mean_slices, "Images averaged into the mean image");
  sub.add_option("--h-max", c.h_max, "Largest semivariogram lag");
  sub.add_option("--seed", c.seed, "Master seed");
  sub.add_option("--threads", c.threads, "Worker threads");
}

struct diagnose_cmd {
  run_config config;
  std::string train, gen, out;
  std::vector<std::string> families;

  void add(CLI::App& sub) {
    add_run_options(sub, config, train, gen, out);
    sub.add_option("--families", families, "Feature families for the per-class PC space")->delimiter(',');
  }

  int run() {
    require(!train.empty(), "--train");
    require(!gen.empty(), "--gen");
    require(!out.empty(), "--out");
    config.train_manifest = train;
    config.gen_manifest = gen;
    config.output_dir = out;
    config.schema = parse_families(families);
    config.validate();
    const auto ev = diagnose(config, load_inputs(config));
    const fs::path dir(out);
    fs::create_directories(dir);
    const json full = json::parse(report_to_json(ev.report));
    json j;
    j["diagnostics"] = full.contains("diagnostics") ? full["diagnostics"] : json(nullptr);
    j["provenance"] = full["provenance"];
    write_text_file(dir / "diagnostics.json", j.dump(2) + "\n");
    if (ev.gen_mean_image) write_png(to_gray(*ev.gen_mean_image), dir / "mean_image.png");
    if (ev.report.diagnostics) write_semivariogram_csv(ev.report.diagnostics->semivariogram, dir / "semivariogram.csv");
    if (ev.report.diagnostics) {
      for (const auto& [name, flag] : ev.report.diagnostics->artifact_flags)
        std::cout << name << ": " << (flag.flagged ? "FLAGGED" : "ok") << " (value " << fmt(flag.value)
                  << ", reference " << fmt(flag.reference) << ")\n";
    } else {
      std::cout << "diagnostics skipped: fewer than " << kMinClassCalibration << " training images\n";
    }
    return 0;
  }
};

struct evaluate_cmd {
  run_config config;
  std::string train, gen, out;
  std::string train_emb, gen_emb;
  std::vector<std::string> families;
  bool no_diagnostics = false;
  bool plots = false;
  bool save_features = false;

  void add(CLI::App& sub) {
    add_run_options(sub, config, train, gen, out);
    sub.add_option("--train-embeddings", train_emb, "Training embeddings for the Frechet gate");
    sub.add_option("--gen-embeddings", gen_emb, "Generated embeddings for the Frechet gate");
    sub.add_option("--frechet-threshold", config.frechet_threshold, "Frechet gate threshold");
    sub.add_option("--memorization-threshold", config.memorization_threshold,
                   "Fixed memorization threshold instead of calibrating");
    sub.add_option("--max-memorized-fraction", config.max_memorized_fraction,
                   "Largest memorized fraction that passes");
    sub.add_option("--calibration-subset", config.calibration_subset, "Calibration subset size");
    sub.add_option("--n-pairs", config.n_pairs, "Pairs per distance distribution");
    sub.add_option("--n-boot", config.n_boot, "Bootstrap replicates");
    sub.add_option("--k", config.k, "Principal components");
    sub.add_option("--families", families, "Feature families (default: all)")->delimiter(',');
    sub.add_flag("--force-stage2", config.force_stage2, "Rank even when a Stage-1 gate fails");
    sub.add_flag("--no-diagnostics", no_diagnostics, "Skip the diagnostics");
    sub.add_flag("--plots", plots, "Write plot tables and SVGs to the output directory");
    sub.add_flag("--save-features", save_features, "Write both feature matrices as CSV");
  }

  int run() {
    require(!train.empty(), "--train");
    require(!gen.empty(), "--gen");
    require(!out.empty(), "--out");
    if (train_emb.empty() != gen_emb.empty())
      throw usage_error("--train-embeddings and --gen-embeddings go together");
    config.train_manifest = train;
    config.gen_manifest = gen;
    config.output_dir = out;
    if (!train_emb.empty()) {
      config.train_embeddings = train_emb;
      config.gen_embeddings = gen_emb;
    }
    config.diagnostics = !no_diagnostics;
    config.schema = parse_families(families);
    config.validate();
    const auto ev = evaluate(config);
    const fs::path dir(out);
    fs::create_directories(dir);
    write_report(ev.report, dir / "report.json");
    if (ev.report.diagnostics) write_semivariogram_csv(ev.report.diagnostics->semivariogram, dir / "semivariogram.csv");
    if (ev.gen_mean_image) write_png(to_gray(*ev.gen_mean_image), dir / "mean_image.png");
    if (save_features && ev.train_features) {
      write_feature_csv(*ev.train_features, dir / "train_features.csv");
      write_feature_csv(*ev.gen_features, dir / "gen_features.csv");
    }
    if (plots)
      emit_plots(ev.report, ev.train_features ? &*ev.train_features : nullptr,
                 ev.gen_features ? &*ev.gen_features : nullptr, dir);
    const auto& s1 = ev.report.stage1;
    std::cout << "stage 1: " << (s1.passed() ? "pass" : "fail") << " (memorized fraction "
              << fmt(s1.memorized_fraction) << ")\n";
    if (ev.report.stage2)
      std::cout << "stage 2: ks_mean " << fmt(ev.report.stage2->overall.ks_mean) << " +/- "
                << fmt(ev.report.stage2->overall.ks_std) << "\n";
    std::cout << "report: " << (dir / "report.json").string() << "\n";
    return 0;
  }
};

struct report_cmd {
  std::string report;
  std::string plots;
  std::string train_features;
  std::string gen_features;

  void add(CLI::App& sub) {
    sub.add_option("report", report, "Report JSON")->required();
    sub.add_option("--plots", plots, "Write plot tables and SVGs to this directory");
    sub.add_option("--train-features", train_features, "Training features for the PC scatter");
    sub.add_option("--gen-features", gen_features, "Generated features for the PC scatter");
  }

  int run() {
    const auto rep = read_report(report);
    const auto& s1 = rep.stage1;
    std::cout << "generated at " << rep.generated_at << "\n";
    if (s1.frechet_distance)
      std::cout << "frechet distance " << fmt(*s1.frechet_distance) << " (threshold " << fmt(s1.frechet_threshold)
                << "): " << (s1.frechet_pass ? "pass" : "fail") << "\n";
    std::cout << "memorized fraction " << fmt(s1.memorized_fraction) << " at threshold "
              << fmt(s1.memorization_threshold) << ": " << (s1.memorization_pass ? "pass" : "fail") << "\n";
    if (rep.stage2) {
      const auto& s2 = *rep.stage2;
      std::cout << "ranking metric " << fmt(s2.overall.ks_mean) << " +/- " << fmt(s2.overall.ks_std) << "\n";
      for (const auto& [fam, s] : s2.per_family) std::cout << "  " << fam << " " << fmt(s.ks_mean) << "\n";
      if (s2.public_metric) std::cout << "public metric " << fmt(s2.public_metric->ks_mean) << "\n";
    } else {
      std::cout << "stage 2 not run\n";
    }
    if (rep.diagnostics) {
      const auto& d = *rep.diagnostics;
      std::cout << "prevalence " << fmt(d.prevalence[0]) << " " << fmt(d.prevalence[1]) << " " << fmt(d.prevalence[2])
                << " " << fmt(d.prevalence[3]) << "\n";
      for (const auto& [name, flag] : d.artifact_flags)
        if (flag.flagged) std::cout << "artifact flagged: " << name << "\n";
    }
    if (!plots.empty()) {
      std::optional<feature_matrix> ft, fg;
      if (!train_features.empty()) ft = read_feature_matrix(train_features);
      if (!gen_features.empty()) fg = read_feature_matrix(gen_features);
      for (const auto& p : emit_plots(rep, ft ? &*ft : nullptr, fg ? &*fg : nullptr, plots))
        std::cout << "wrote " << p.string() << "\n";
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation toolkit for generated breast phantom ensembles"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  synth_cmd synth;
  segment_cmd seg;
  features_cmd feat;
  memcheck_cmd mem;
  frechet_cmd fre;
  rank_cmd rank;
  diagnose_cmd diag;
  evaluate_cmd eval;
  report_cmd rep;

  struct entry {
    CLI::App* sub;
    std::function<int()> run;
    std::string config;
  };
  std::vector<entry> entries;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    auto* sub = app.add_subcommand(name, help);
    cmd.add(*sub);
    entries.push_back({sub, [&cmd] { return cmd.run(); }, {}});
  };
  reg("synth", "Synthesize a phantom ensemble", synth);
  reg("segment", "Write per-tissue mask PNGs", seg);
  reg("features", "Extract the feature matrix of an ensemble", feat);
  reg("memcheck", "Screen a generated ensemble for memorized training images", mem);
  reg("frechet", "Frechet distance between two embedding files", fre);
  reg("rank", "Ranking metric between two feature matrices or ensembles", rank);
  reg("diagnose", "Artifact flags, mean image and semivariogram", diag);
  reg("evaluate", "Full two-stage evaluation", eval);
  reg("report", "Summarize a report and render its plots", rep);
  for (auto& e : entries) e.sub->add_option("--config", e.config, "key=value file; command-line flags take precedence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& e : entries) {
      if (!e.sub->parsed()) continue;
      if (!e.config.empty()) apply_config(*e.sub, e.config);
      return e.run();
    }
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return 1;
  } catch (const argument_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
