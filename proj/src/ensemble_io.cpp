#include "dgmeval/ensemble_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dgmeval/error.hpp"
#include "dgmeval/parallel.hpp"

namespace dgmeval {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct file_closer {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using file_ptr = std::unique_ptr<std::FILE, file_closer>;

file_ptr open_file(const fs::path& path, const char* mode) {
  file_ptr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw io_error("cannot open " + path.string());
  return f;
}

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* buffer = static_cast<std::string*>(png_get_error_ptr(png));
  if (buffer) *buffer = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

void write_gray_png(int width, int height, const std::uint8_t* data, const fs::path& path) {
  auto file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw io_error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("failed writing " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * static_cast<std::size_t>(width)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---------------------------------------------------------------------------

gray_image read_png(const fs::path& path, const load_options& opts) {
  if (!fs::exists(path)) throw io_error("missing image file: " + path.string());
  auto file = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw validation_error("not a PNG file: " + path.string());

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw io_error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("libpng initialisation failed");
  }
  gray_image image;
  std::string validation;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("corrupt PNG " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8) {
    validation = "wrong bit depth (" + std::to_string(depth) + ", expected 8)";
  } else if (color != PNG_COLOR_TYPE_GRAY) {
    validation = "not single-channel grayscale";
  } else if (!opts.allow_any_size && (width != kImageSize || height != kImageSize)) {
    validation = "wrong dimensions " + std::to_string(width) + "x" + std::to_string(height) + " (expected " +
                 std::to_string(kImageSize) + "x" + std::to_string(kImageSize) + ")";
  }
  if (!validation.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw validation_error(validation + ": " + path.string());
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  image = gray_image(static_cast<int>(width), static_cast<int>(height));
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = &image.values[image.index(0, static_cast<int>(y))];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const gray_image& image, const fs::path& path) {
  write_gray_png(image.width, image.height, image.values.data(), path);
}

void write_png(const binary_mask& mask, const fs::path& path) {
  std::vector<std::uint8_t> scaled(mask.size());
  std::transform(mask.values.begin(), mask.values.end(), scaled.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  write_gray_png(mask.width, mask.height, scaled.data(), path);
}

// ---------------------------------------------------------------------------

ensemble_manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open manifest " + path.string());
  ensemble_manifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string body = trim(t.substr(1));
      if (body.rfind("count=", 0) == 0) {
        try {
          m.declared_count = static_cast<std::size_t>(std::stoull(body.substr(6)));
        } catch (const std::exception&) {
          throw validation_error("manifest line " + std::to_string(line_no) + ": bad count declaration");
        }
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      m.ids.push_back(t);
      m.labels.emplace_back();
    } else {
      m.ids.push_back(trim(line.substr(0, tab)));
      const std::string label = trim(line.substr(tab + 1));
      m.labels.emplace_back(label.empty() ? std::nullopt : std::optional<std::string>(label));
    }
  }
  return m;
}

void write_manifest(const ensemble_manifest& manifest, const fs::path& path) {
  std::ostringstream out;
  out << "# count=" << manifest.ids.size() << '\n';
  for (std::size_t i = 0; i < manifest.ids.size(); ++i) {
    out << manifest.ids[i];
    if (i < manifest.labels.size() && manifest.labels[i]) out << '\t' << *manifest.labels[i];
    out << '\n';
  }
  write_text_file(path, out.str());
}

void validate_manifest(const ensemble_manifest& manifest) {
  if (manifest.labels.size() != manifest.ids.size()) throw validation_error("manifest labels do not match identifiers");
  if (manifest.declared_count && *manifest.declared_count != manifest.ids.size())
    throw validation_error("manifest declares " + std::to_string(*manifest.declared_count) + " entries but lists " +
                           std::to_string(manifest.ids.size()));
  std::set<std::string> seen;
  for (const auto& id : manifest.ids) {
    if (!seen.insert(id).second) throw validation_error("duplicate identifier in manifest: " + id);
  }
  for (std::size_t i = 0; i < manifest.ids.size(); ++i) {
    const auto p = manifest.path_of(i);
    if (!fs::is_regular_file(p)) throw io_error("missing image file for identifier " + manifest.ids[i]);
  }
}

std::vector<gray_image> load_ensemble(const ensemble_manifest& manifest, const load_options& opts) {
  validate_manifest(manifest);
  std::vector<gray_image> images(manifest.size());
  parallel_for(manifest.size(), opts.threads, [&](std::size_t i) {
    try {
      images[i] = read_png(manifest.path_of(i), opts);
    } catch (const validation_error& e) {
      throw validation_error(manifest.ids[i] + ": " + e.what());
    } catch (const io_error& e) {
      throw io_error(manifest.ids[i] + ": " + e.what());
    }
  });
  return images;
}

// ---------------------------------------------------------------------------

embedding_matrix read_embeddings(const fs::path& path, bool allow_nan) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kEmbeddingMagic.data(), 8) != 0)
    throw validation_error("bad magic in embedding file " + path.string());
  if (bytes.size() < 24) throw validation_error("truncated embedding header in " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  embedding_matrix m;
  m.rows = get_u64(p + 8);
  m.cols = get_u64(p + 16);
  if (m.cols != 0 && m.rows > (std::uint64_t{1} << 40) / m.cols)
    throw validation_error("implausible embedding dimensions in " + path.string());
  const std::size_t count = m.rows * m.cols;
  if (bytes.size() - 24 < count * 4)
    throw validation_error("truncated embedding payload in " + path.string() + ": expected " +
                           std::to_string(count * 4) + " bytes, found " + std::to_string(bytes.size() - 24));
  if (bytes.size() - 24 > count * 4) throw validation_error("trailing bytes in embedding file " + path.string());
  m.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* q = p + 24 + 4 * i;
    const std::uint32_t u = static_cast<std::uint32_t>(q[0]) | (static_cast<std::uint32_t>(q[1]) << 8) |
                            (static_cast<std::uint32_t>(q[2]) << 16) | (static_cast<std::uint32_t>(q[3]) << 24);
    const float v = std::bit_cast<float>(u);
    if (std::isinf(v) || (std::isnan(v) && !allow_nan))
      throw validation_error("non-finite value at row " + std::to_string(i / std::max<std::size_t>(m.cols, 1)) +
                             " in " + path.string());
    m.values[i] = v;
  }
  const fs::path source = fs::path(path.string() + ".source");
  if (fs::exists(source)) m.source = trim(read_text_file(source));
  return m;
}

void write_embeddings(const embedding_matrix& m, const fs::path& path) {
  if (m.values.size() != m.rows * m.cols) throw argument_error("embedding matrix size mismatch");
  std::string out(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  put_u64(out, m.rows);
  put_u64(out, m.cols);
  out.reserve(out.size() + 4 * m.values.size());
  for (const float v : m.values) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  write_text_file(path, out);
  if (!m.source.empty()) write_text_file(fs::path(path.string() + ".source"), m.source + "\n");
}

// ---------------------------------------------------------------------------

namespace {

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw validation_error("report field " + what + " is not finite");
}

void require_unit(double v, const std::string& what) {
  require_finite(v, what);
  if (v < 0.0 || v > 1.0) throw validation_error("report field " + what + " outside [0,1]");
}

json ranking_json(const ranking_summary& r) {
  return json{{"ks_mean", r.ks_mean}, {"ks_std", r.ks_std}, {"n_boot", r.n_boot}, {"n_pairs", r.n_pairs}, {"k", r.k}};
}

ranking_summary ranking_from(const json& j) {
  ranking_summary r;
  r.ks_mean = j.at("ks_mean").get<double>();
  r.ks_std = j.at("ks_std").get<double>();
  r.n_boot = j.at("n_boot").get<int>();
  r.n_pairs = j.at("n_pairs").get<int>();
  r.k = j.at("k").get<int>();
  return r;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

void validate_ranking(const ranking_summary& r, const std::string& what) {
  require_unit(r.ks_mean, what + ".ks_mean");
  require_finite(r.ks_std, what + ".ks_std");
  if (r.ks_std < 0.0) throw validation_error("report field " + what + ".ks_std negative");
}

}  // namespace

void validate_report(const eval_report& report) {
  const auto& s1 = report.stage1;
  if (s1.frechet_distance) require_finite(*s1.frechet_distance, "stage1.frechet_distance");
  require_finite(s1.frechet_threshold, "stage1.frechet_threshold");
  require_unit(s1.memorized_fraction, "stage1.memorized_fraction");
  require_finite(s1.memorization_threshold, "stage1.memorization_threshold");
  if (s1.calibration_max) require_finite(*s1.calibration_max, "stage1.calibration_max");
  if (s1.calibration_std) require_finite(*s1.calibration_std, "stage1.calibration_std");
  if (report.stage2) {
    validate_ranking(report.stage2->overall, "stage2");
    if (report.stage2->public_metric) validate_ranking(*report.stage2->public_metric, "stage2.public_metric");
    for (const auto& [family, r] : report.stage2->per_family) validate_ranking(r, "stage2.per_family." + family);
  }
  if (report.diagnostics) {
    const auto& d = *report.diagnostics;
    for (std::size_t c = 0; c < 4; ++c) {
      require_unit(d.prevalence[c], "diagnostics.prevalence");
      if (d.density[c]) require_finite(*d.density[c], "diagnostics.density");
      if (d.coverage[c]) require_unit(*d.coverage[c], "diagnostics.coverage");
    }
    for (const auto& [name, f] : d.artifact_flags) {
      require_finite(f.value, "diagnostics.artifact_flags." + name + ".value");
      require_finite(f.reference, "diagnostics.artifact_flags." + name + ".reference");
    }
    for (const auto& p : d.semivariogram) require_finite(p.gamma, "diagnostics.semivariogram");
  }
}

std::string report_to_json(const eval_report& report) {
  validate_report(report);
  json j = json::object();
  json prov = json::object();
  for (const auto& [k, v] : report.provenance) prov[k] = v;
  j["provenance"] = prov;
  j["generated_at"] = report.generated_at;

  const auto& s1 = report.stage1;
  j["stage1"] = {
      {"frechet_distance", optional_json(s1.frechet_distance)},
      {"frechet_threshold", s1.frechet_threshold},
      {"frechet_pass", s1.frechet_pass},
      {"memorized_fraction", s1.memorized_fraction},
      {"memorization_threshold", s1.memorization_threshold},
      {"memorization_pass", s1.memorization_pass},
      {"calibration", {{"max", optional_json(s1.calibration_max)},
                       {"std", optional_json(s1.calibration_std)},
                       {"subset_n", s1.calibration_subset},
                       {"reference_m", s1.calibration_reference}}},
      {"flagged", s1.flagged},
      {"passed", s1.passed()},
  };

  if (report.stage2) {
    const auto& s2 = *report.stage2;
    json fam = json::object();
    for (const auto& [name, r] : s2.per_family) fam[name] = ranking_json(r);
    json nan = json::object();
    for (const auto& [name, n] : s2.nan_counts) nan[name] = n;
    j["stage2"] = {
        {"ks_mean", s2.overall.ks_mean},
        {"ks_std", s2.overall.ks_std},
        {"n_boot", s2.overall.n_boot},
        {"n_pairs", s2.overall.n_pairs},
        {"k", s2.overall.k},
        {"per_family", fam},
        {"public_metric", s2.public_metric ? ranking_json(*s2.public_metric) : json(nullptr)},
        {"dropped_columns", s2.dropped_columns},
        {"nan_counts", nan},
    };
  }

  if (report.diagnostics) {
    const auto& d = *report.diagnostics;
    json prevalence = json::object();
    json density = json::object();
    json coverage = json::object();
    for (std::size_t c = 0; c < 4; ++c) {
      prevalence[kClassNames[c]] = d.prevalence[c];
      density[kClassNames[c]] = optional_json(d.density[c]);
      coverage[kClassNames[c]] = optional_json(d.coverage[c]);
    }
    json flags = json::object();
    for (const auto& [name, f] : d.artifact_flags)
      flags[name] = {{"flagged", f.flagged}, {"value", f.value}, {"reference", f.reference}};
    json sv = json::array();
    for (const auto& p : d.semivariogram) sv.push_back({{"lag", p.lag}, {"gamma", p.gamma}, {"pairs", p.pairs}});
    j["diagnostics"] = {
        {"prevalence", prevalence}, {"density", density},     {"coverage", coverage},
        {"artifact_flags", flags},  {"semivariogram", sv},    {"dropped_lags", d.dropped_lags},
    };
  }
  return j.dump(2) + "\n";
}

eval_report report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw validation_error(std::string("malformed report JSON: ") + e.what());
  }
  eval_report r;
  try {
    for (const auto& [k, v] : j.at("provenance").items()) r.provenance.emplace_back(k, v.get<std::string>());
    r.generated_at = j.value("generated_at", "");
    const auto& s1 = j.at("stage1");
    r.stage1.frechet_distance = optional_from(s1.at("frechet_distance"));
    r.stage1.frechet_threshold = s1.at("frechet_threshold").get<double>();
    r.stage1.frechet_pass = s1.at("frechet_pass").get<bool>();
    r.stage1.memorized_fraction = s1.at("memorized_fraction").get<double>();
    r.stage1.memorization_threshold = s1.at("memorization_threshold").get<double>();
    r.stage1.memorization_pass = s1.at("memorization_pass").get<bool>();
    const auto& cal = s1.at("calibration");
    r.stage1.calibration_max = optional_from(cal.at("max"));
    r.stage1.calibration_std = optional_from(cal.at("std"));
    r.stage1.calibration_subset = cal.at("subset_n").get<std::size_t>();
    r.stage1.calibration_reference = cal.at("reference_m").get<std::size_t>();
    r.stage1.flagged = s1.at("flagged").get<std::vector<std::string>>();

    if (j.contains("stage2")) {
      const auto& s2 = j.at("stage2");
      stage2_result out;
      out.overall = ranking_from(s2);
      for (const auto& [name, v] : s2.at("per_family").items()) out.per_family[name] = ranking_from(v);
      if (!s2.at("public_metric").is_null()) out.public_metric = ranking_from(s2.at("public_metric"));
      out.dropped_columns = s2.at("dropped_columns").get<std::vector<std::string>>();
      for (const auto& [name, v] : s2.at("nan_counts").items()) out.nan_counts[name] = v.get<std::size_t>();
      r.stage2 = std::move(out);
    }
    if (j.contains("diagnostics")) {
      const auto& d = j.at("diagnostics");
      diagnostics_result out;
      for (std::size_t c = 0; c < 4; ++c) {
        out.prevalence[c] = d.at("prevalence").at(kClassNames[c]).get<double>();
        out.density[c] = optional_from(d.at("density").at(kClassNames[c]));
        out.coverage[c] = optional_from(d.at("coverage").at(kClassNames[c]));
      }
      for (const auto& [name, v] : d.at("artifact_flags").items())
        out.artifact_flags[name] = {v.at("flagged").get<bool>(), v.at("value").get<double>(),
                                    v.at("reference").get<double>()};
      for (const auto& p : d.at("semivariogram"))
        out.semivariogram.push_back({p.at("lag").get<int>(), p.at("gamma").get<double>(), p.at("pairs").get<std::size_t>()});
      out.dropped_lags = d.at("dropped_lags").get<std::vector<int>>();
      r.diagnostics = std::move(out);
    }
  } catch (const json::exception& e) {
    throw validation_error(std::string("report JSON missing or mistyped field: ") + e.what());
  }
  return r;
}

void write_report(const eval_report& report, const fs::path& path) { write_text_file(path, report_to_json(report)); }

eval_report read_report(const fs::path& path) { return report_from_json(read_text_file(path)); }

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace dgmeval
