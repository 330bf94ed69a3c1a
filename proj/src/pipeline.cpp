#include "dgmeval/pipeline.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "dgmeval/error.hpp"
#include "dgmeval/stats.hpp"

namespace dgmeval {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> positional_ids(std::size_t n, const char* prefix) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::string(prefix) + std::to_string(i);
  return ids;
}

}  // namespace

void run_config::validate() const {
  if (n_pairs < 1 || n_boot < 1 || k < 1 || k_nn < 1 || mean_slices < 1 || h_max < 1 || calibration_subset < 1)
    throw argument_error("sampling counts must be at least 1");
  if (!(frechet_threshold >= 0.0)) throw argument_error("the Frechet threshold must be non-negative");
  if (memorization_threshold && !(*memorization_threshold >= 0.0 && *memorization_threshold <= 1.0))
    throw argument_error("the memorization threshold must lie in [0,1]");
  if (!(max_memorized_fraction >= 0.0 && max_memorized_fraction <= 1.0))
    throw argument_error("the memorized-fraction limit must lie in [0,1]");
  if (schema.families.empty()) throw argument_error("the feature schema names no families");
  if (train_embeddings.has_value() != gen_embeddings.has_value())
    throw argument_error("the Frechet gate needs embeddings for both ensembles");
}

std::vector<std::pair<std::string, std::string>> config_echo(const run_config& c) {
  std::string families;
  for (const auto f : c.schema.families) families += (families.empty() ? "" : ",") + std::string(to_string(f));
  return {
      {"dgmeval_version", kVersion},
      {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
      {"train_manifest", c.train_manifest.string()},
      {"gen_manifest", c.gen_manifest.string()},
      {"train_embeddings", c.train_embeddings ? c.train_embeddings->string() : ""},
      {"gen_embeddings", c.gen_embeddings ? c.gen_embeddings->string() : ""},
      {"frechet_threshold", num(c.frechet_threshold)},
      {"memorization_threshold", c.memorization_threshold ? num(*c.memorization_threshold) : "calibrated"},
      {"max_memorized_fraction", num(c.max_memorized_fraction)},
      {"calibration_subset", std::to_string(c.calibration_subset)},
      {"n_pairs", std::to_string(c.n_pairs)},
      {"n_boot", std::to_string(c.n_boot)},
      {"k", std::to_string(c.k)},
      {"k_nn", std::to_string(c.k_nn)},
      {"mean_slices", std::to_string(c.mean_slices)},
      {"h_max", std::to_string(c.h_max)},
      {"seed", std::to_string(c.seed)},
      {"threads", std::to_string(c.threads)},
      {"force_stage2", c.force_stage2 ? "true" : "false"},
      {"diagnostics", c.diagnostics ? "true" : "false"},
      {"feature_families", families},
  };
}

namespace {

void run_diagnostics(const run_config& config, const evaluation_inputs& in, const std::vector<image_scan>& train_scans,
                     const std::vector<image_scan>& gen_scans, evaluation& out) {
  auto& prov = out.report.provenance;
  if (in.train.size() < kMinClassCalibration) {
    prov.emplace_back("diagnostics_note", "skipped: fewer than " + std::to_string(kMinClassCalibration) +
                                              " training images");
    return;
  }
  diagnostics_result d;
  std::vector<double> tf, gf;
  for (const auto& s : train_scans) tf.push_back(s.glandular_fraction);
  for (const auto& s : gen_scans) gf.push_back(s.glandular_fraction);
  std::optional<class_rule> rule;
  try {
    rule = calibrate_class_rule(tf);
  } catch (const validation_error& e) {
    prov.emplace_back("class_rule_note", e.what());
  }
  if (rule) {
    d.prevalence = class_prevalence(gf, *rule);
    prov.emplace_back("class_rule_cuts", num(rule->cuts[0]) + "," + num(rule->cuts[1]) + "," + num(rule->cuts[2]));
    const auto& ft = *out.train_features;
    const auto& fg = *out.gen_features;
    if (usable_column_count(ft) >= 2) {
      const auto pca = fit_pca(ft, 2);
      const Eigen::MatrixXd pt = pca.project(ft), pg = pca.project(fg);
      for (std::size_t c = 0; c < 4; ++c) {
        std::vector<Eigen::Index> rt, rg;
        for (std::size_t i = 0; i < tf.size(); ++i)
          if (static_cast<std::size_t>(rule->classify(tf[i])) == c) rt.push_back(static_cast<Eigen::Index>(i));
        for (std::size_t i = 0; i < gf.size(); ++i)
          if (static_cast<std::size_t>(rule->classify(gf[i])) == c) rg.push_back(static_cast<Eigen::Index>(i));
        if (rt.size() <= static_cast<std::size_t>(config.k_nn) || rg.size() <= static_cast<std::size_t>(config.k_nn))
          continue;
        const auto dc = density_coverage(pt(rt, Eigen::all), pg(rg, Eigen::all), config.k_nn);
        d.density[c] = dc.density;
        d.coverage[c] = dc.coverage;
      }
    }
  }
  const auto baselines = compute_baselines(train_scans, config.seed);
  d.artifact_flags = detect_artifacts(gen_scans, baselines, config.seed);
  auto mean = mean_image(in.gen, config.mean_slices, config.seed);
  const auto bulk = bulk_mask(mean);
  if (bulk.count() > 0) {
    const auto sv = semivariance(mean, bulk, config.h_max);
    d.semivariogram = sv.points;
    d.dropped_lags = sv.dropped_lags;
  } else {
    prov.emplace_back("semivariance_note", "empty bulk region");
  }
  out.gen_mean_image = std::move(mean);
  out.report.diagnostics = std::move(d);
}

}  // namespace

evaluation evaluate(const run_config& config, const evaluation_inputs& in) {
  config.validate();
  if (in.train.size() < 2) throw argument_error("the training ensemble needs at least two images");
  if (in.gen.empty()) throw argument_error("the generated ensemble is empty");
  const auto train_ids = in.train_ids.empty() ? positional_ids(in.train.size(), "train_") : in.train_ids;
  const auto gen_ids = in.gen_ids.empty() ? positional_ids(in.gen.size(), "gen_") : in.gen_ids;
  if (train_ids.size() != in.train.size() || gen_ids.size() != in.gen.size())
    throw argument_error("identifier lists do not match the ensembles");

  evaluation out;
  auto& rep = out.report;
  rep.provenance = config_echo(config);
  rep.provenance.emplace_back("train_images", std::to_string(in.train.size()));
  rep.provenance.emplace_back("gen_images", std::to_string(in.gen.size()));

  // Stage 1: Frechet gate.
  auto& s1 = rep.stage1;
  s1.frechet_threshold = config.frechet_threshold;
  if (in.train_embeddings.has_value() != in.gen_embeddings.has_value())
    throw argument_error("the Frechet gate needs embeddings for both ensembles");
  if (in.train_embeddings) {
    if (in.train_embeddings->cols != in.gen_embeddings->cols)
      throw validation_error("embedding dimensions differ between ensembles");
    const double fd = frechet_distance(fit_gaussian(*in.train_embeddings), fit_gaussian(*in.gen_embeddings));
    s1.frechet_distance = fd;
    s1.frechet_pass = fd <= config.frechet_threshold;
    if (!in.train_embeddings->source.empty()) rep.provenance.emplace_back("embedding_source", in.train_embeddings->source);
  }

  // Stage 1: memorization screen.
  const auto train_scans = scan_ensemble(in.train, config.threads);
  const auto gen_scans = scan_ensemble(in.gen, config.threads);
  std::vector<packed_mask> tb, gb;
  tb.reserve(train_scans.size());
  gb.reserve(gen_scans.size());
  for (const auto& s : train_scans) tb.push_back(s.boundary);
  for (const auto& s : gen_scans) gb.push_back(s.boundary);
  memorization_calibration calib;
  if (config.memorization_threshold) {
    calib = fixed_calibration(*config.memorization_threshold);
  } else {
    auto subset = config.calibration_subset;
    if (subset >= tb.size()) {
      subset = tb.size() / 2;
      rep.provenance.emplace_back("calibration_subset_used", std::to_string(subset));
    }
    calib = calibrate(tb, subset, config.seed, config.threads);
  }
  const auto sr = screen(gb, tb, calib, config.threads);
  s1.memorized_fraction = sr.memorized_fraction;
  s1.memorization_threshold = calib.threshold;
  s1.memorization_pass = sr.memorized_fraction <= config.max_memorized_fraction;
  s1.calibration_max = calib.max;
  s1.calibration_std = calib.std;
  s1.calibration_subset = calib.subset;
  s1.calibration_reference = calib.reference;
  for (const auto i : sr.flagged) s1.flagged.push_back(gen_ids[i]);

  if (s1.passed() || config.force_stage2) {
    if (!s1.passed()) rep.provenance.emplace_back("stage2_forced", "true");
    out.train_features = extract_all(in.train, config.schema, train_ids, config.threads);
    out.gen_features = extract_all(in.gen, config.schema, gen_ids, config.threads);
    const auto& ft = *out.train_features;
    const auto& fg = *out.gen_features;
    ranking_options o;
    o.k = config.k;
    o.n_pairs = config.n_pairs;
    o.n_boot = config.n_boot;
    o.seed = config.seed;
    o.threads = config.threads;
    stage2_result s2;
    const auto overall = ranking_metric(ft, fg, o);
    s2.overall = overall.summary();
    s2.dropped_columns = overall.dropped_columns;
    for (const auto fam : kAllFamilies)
      if (config.schema.includes(fam)) s2.per_family[std::string(to_string(fam))] = per_family_metric(ft, fg, fam, o).summary();
    const auto pub = public_metric_columns();
    if (std::all_of(pub.begin(), pub.end(), [&](const std::string& c) { return ft.column_index(c).has_value(); }))
      s2.public_metric = public_metric(ft, fg, o).summary();
    const auto nt = ft.nan_counts(), ng = fg.nan_counts();
    for (std::size_t c = 0; c < ft.cols(); ++c)
      if (nt[c] + ng[c] > 0) s2.nan_counts[ft.columns[c].name] = nt[c] + ng[c];
    rep.stage2 = std::move(s2);
    if (config.diagnostics) run_diagnostics(config, in, train_scans, gen_scans, out);
  }
  rep.generated_at = utc_timestamp();
  return out;
}

evaluation diagnose(const run_config& config, const evaluation_inputs& in) {
  config.validate();
  if (in.gen.empty()) throw argument_error("the generated ensemble is empty");
  const auto train_ids = in.train_ids.empty() ? positional_ids(in.train.size(), "train_") : in.train_ids;
  const auto gen_ids = in.gen_ids.empty() ? positional_ids(in.gen.size(), "gen_") : in.gen_ids;
  evaluation out;
  out.report.provenance = config_echo(config);
  out.report.provenance.emplace_back("train_images", std::to_string(in.train.size()));
  out.report.provenance.emplace_back("gen_images", std::to_string(in.gen.size()));
  const auto train_scans = scan_ensemble(in.train, config.threads);
  const auto gen_scans = scan_ensemble(in.gen, config.threads);
  if (in.train.size() >= kMinClassCalibration) {
    out.train_features = extract_all(in.train, config.schema, train_ids, config.threads);
    out.gen_features = extract_all(in.gen, config.schema, gen_ids, config.threads);
  }
  run_diagnostics(config, in, train_scans, gen_scans, out);
  out.report.generated_at = utc_timestamp();
  return out;
}

evaluation_inputs load_inputs(const run_config& config) {
  const auto tm = read_manifest(config.train_manifest);
  const auto gm = read_manifest(config.gen_manifest);
  validate_manifest(tm);
  validate_manifest(gm);
  evaluation_inputs in;
  load_options lo;
  lo.threads = config.threads;
  in.train = load_ensemble(tm, lo);
  in.gen = load_ensemble(gm, lo);
  in.train_ids = tm.ids;
  in.gen_ids = gm.ids;
  if (config.train_embeddings) in.train_embeddings = read_embeddings(*config.train_embeddings);
  if (config.gen_embeddings) in.gen_embeddings = read_embeddings(*config.gen_embeddings);
  return in;
}

evaluation evaluate(const run_config& config) {
  config.validate();
  return evaluate(config, load_inputs(config));
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
  std::string o;
  for (const char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

// Minimal fixed-size chart canvas mapping data ranges onto a plot box.
class svg_canvas {
 public:
  svg_canvas(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0, double y1)
      : x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1.0), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1.0) {
    os_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
        << kW << ' ' << kH << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n"
        << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
        << xml_escape(title) << "</text>\n"
        << "<line x1=\"" << kL << "\" y1=\"" << kB << "\" x2=\"" << kR << "\" y2=\"" << kB << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kB << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << (kL + kR) / 2 << "\" y=\"" << kH - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(xlabel) << "</text>\n"
        << "<text x=\"16\" y=\"" << (kT + kB) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\" transform=\"rotate(-90 16 " << (kT + kB) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
    tick_label(kL, kB + 16, fmt(x0_), "middle");
    tick_label(kR, kB + 16, fmt(x1_), "middle");
    tick_label(kL - 6, kB, fmt(y0_), "end");
    tick_label(kL - 6, kT + 4, fmt(y1_), "end");
  }

  [[nodiscard]] double px(double x) const { return kL + (x - x0_) / (x1_ - x0_) * (kR - kL); }
  [[nodiscard]] double py(double y) const { return kB - (y - y0_) / (y1_ - y0_) * (kB - kT); }

  void point(double x, double y, const char* colour) {
    os_ << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"2\" fill=\"" << colour
        << "\" fill-opacity=\"0.5\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* colour) {
    os_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) os_ << fmt(px(x)) << ',' << fmt(py(y)) << ' ';
    os_ << "\"/>\n";
  }
  void bar(double x_left, double x_right, double y, double err, const std::string& label) {
    const double top = py(y), base = py(y0_);
    os_ << "<rect x=\"" << fmt(px(x_left)) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(px(x_right) - px(x_left))
        << "\" height=\"" << fmt(base - top) << "\" fill=\"steelblue\"/>\n";
    const double xm = px(0.5 * (x_left + x_right));
    os_ << "<line x1=\"" << fmt(xm) << "\" y1=\"" << fmt(py(y - err)) << "\" x2=\"" << fmt(xm) << "\" y2=\""
        << fmt(py(y + err)) << "\" stroke=\"black\"/>\n";
    tick_label(xm, kB + 30, label, "middle");
  }
  void legend(double y, const char* colour, const std::string& text) {
    os_ << "<circle cx=\"" << kR - 110 << "\" cy=\"" << y << "\" r=\"4\" fill=\"" << colour << "\"/>\n";
    tick_label(kR - 100, y + 4, text, "start");
  }
  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  static constexpr int kW = 640, kH = 440, kL = 70, kR = 620, kT = 40, kB = 380;
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }
  void tick_label(double x, double y, const std::string& text, const char* anchor) {
    os_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(text) << "</text>\n";
  }
  double x0_, x1_, y0_, y1_;
  std::ostringstream os_;
};

}  // namespace

std::vector<fs::path> emit_plots(const eval_report& report, const feature_matrix* train, const feature_matrix* gen,
                                 const fs::path& out_dir, std::size_t scatter_cap) {
  std::vector<fs::path> written;
  auto put = [&](const fs::path& name, const std::string& text) {
    write_text_file(out_dir / name, text);
    written.push_back(out_dir / name);
  };

  if (report.stage2) {
    const auto& s2 = *report.stage2;
    std::vector<std::pair<std::string, ranking_summary>> bars = {{"overall", s2.overall}};
    for (const auto& [name, r] : s2.per_family) bars.emplace_back(name, r);
    if (s2.public_metric) bars.emplace_back("public", *s2.public_metric);
    std::ostringstream csv;
    csv << "metric,ks_mean,ks_std,k\n";
    double ymax = 0.0;
    for (const auto& [name, r] : bars) {
      csv << name << ',' << num(r.ks_mean) << ',' << num(r.ks_std) << ',' << r.k << '\n';
      ymax = std::max(ymax, r.ks_mean + r.ks_std);
    }
    put("metric_bars.csv", csv.str());
    svg_canvas svg("Ranking metric by feature set", "feature set", "mean KS", 0.0, static_cast<double>(bars.size()),
                   0.0, ymax > 0.0 ? 1.1 * ymax : 1.0);
    for (std::size_t i = 0; i < bars.size(); ++i)
      svg.bar(static_cast<double>(i) + 0.15, static_cast<double>(i) + 0.85, bars[i].second.ks_mean,
              bars[i].second.ks_std, bars[i].first);
    put("metric_bars.svg", svg.finish());
  }

  if (report.diagnostics && !report.diagnostics->semivariogram.empty()) {
    const auto& sv = report.diagnostics->semivariogram;
    std::ostringstream csv;
    csv << "lag,gamma,pairs\n";
    std::vector<std::pair<double, double>> pts;
    double gmax = 0.0;
    for (const auto& p : sv) {
      csv << p.lag << ',' << num(p.gamma) << ',' << p.pairs << '\n';
      pts.emplace_back(p.lag, p.gamma);
      gmax = std::max(gmax, p.gamma);
    }
    put("semivariogram.csv", csv.str());
    svg_canvas svg("Semivariance of the generated mean image", "lag (pixels)", "gamma", 0.0,
                   static_cast<double>(sv.back().lag), 0.0, gmax > 0.0 ? 1.1 * gmax : 1.0);
    svg.polyline(pts, "darkred");
    put("semivariogram.svg", svg.finish());
  }

  if (train && gen && train->rows > 2 && usable_column_count(*train) >= 2) {
    const auto pca = fit_pca(*train, 2);
    const Eigen::MatrixXd pt = pca.project(*train), pg = pca.project(*gen);
    const auto nt = std::min<std::size_t>(train->rows, scatter_cap);
    const auto ng = std::min<std::size_t>(gen->rows, scatter_cap);
    std::ostringstream csv;
    csv << "set,pc1,pc2\n";
    double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    auto grow = [&](double x, double y) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    };
    for (std::size_t i = 0; i < nt; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      csv << "train," << num(pt(r, 0)) << ',' << num(pt(r, 1)) << '\n';
      grow(pt(r, 0), pt(r, 1));
    }
    for (std::size_t i = 0; i < ng; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      csv << "gen," << num(pg(r, 0)) << ',' << num(pg(r, 1)) << '\n';
      grow(pg(r, 0), pg(r, 1));
    }
    put("pc_scatter.csv", csv.str());
    svg_canvas svg("Training PC space", "PC1", "PC2", x0, x1, y0, y1);
    for (std::size_t i = 0; i < nt; ++i) svg.point(pt(static_cast<Eigen::Index>(i), 0), pt(static_cast<Eigen::Index>(i), 1), "steelblue");
    for (std::size_t i = 0; i < ng; ++i) svg.point(pg(static_cast<Eigen::Index>(i), 0), pg(static_cast<Eigen::Index>(i), 1), "darkorange");
    svg.legend(52, "steelblue", "training");
    svg.legend(68, "darkorange", "generated");
    put("pc_scatter.svg", svg.finish());
  }
  return written;
}

}  // namespace dgmeval
