#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgmeval/raster.hpp"

namespace dgmeval {

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

struct load_options {
  // Accept images of any size instead of only 512x512.
  bool allow_any_size = false;
  unsigned threads = 0;
};

// Reads an 8-bit grayscale PNG. Throws io_error for unreadable files and
// validation_error for wrong bit depth, colour type, or dimensions.
gray_image read_png(const std::filesystem::path& path, const load_options& opts = {});
void write_png(const gray_image& image, const std::filesystem::path& path);
void write_png(const binary_mask& mask, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifests: one identifier per line, optionally followed by a tab and a
// class label. Lines starting with '#' are comments; "# count=N" declares the
// expected number of entries. Identifiers are paths relative to the manifest.
// ---------------------------------------------------------------------------

struct ensemble_manifest {
  std::filesystem::path root;
  std::vector<std::string> ids;
  std::optional<std::size_t> declared_count;
  std::vector<std::optional<std::string>> labels;  // parallel to ids

  [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
  [[nodiscard]] std::filesystem::path path_of(std::size_t i) const { return root / ids[i]; }
  [[nodiscard]] std::size_t expected_count() const noexcept { return declared_count.value_or(ids.size()); }
};

ensemble_manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const ensemble_manifest& manifest, const std::filesystem::path& path);

// Checks unique identifiers, declared count, and that every file exists.
void validate_manifest(const ensemble_manifest& manifest);

// Images in manifest order. Errors name the offending identifier.
std::vector<gray_image> load_ensemble(const ensemble_manifest& manifest, const load_options& opts = {});

// ---------------------------------------------------------------------------
// Embedding matrices ("DGMEMB01" container)
// ---------------------------------------------------------------------------

struct embedding_matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major
  std::string source;         // free text naming the embedder; stored in a sidecar

  [[nodiscard]] float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  friend bool operator==(const embedding_matrix&, const embedding_matrix&) = default;
};

inline constexpr std::array<char, 8> kEmbeddingMagic = {'D', 'G', 'M', 'E', 'M', 'B', '0', '1'};

// allow_nan admits NaN payload values (feature caches); infinities are
// always rejected.
embedding_matrix read_embeddings(const std::filesystem::path& path, bool allow_nan = false);
void write_embeddings(const embedding_matrix& m, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct ranking_summary {
  double ks_mean = 0.0;
  double ks_std = 0.0;
  int n_boot = 0;
  int n_pairs = 0;
  int k = 0;
  friend bool operator==(const ranking_summary&, const ranking_summary&) = default;
};

struct stage1_result {
  std::optional<double> frechet_distance;  // absent when no embeddings were given
  double frechet_threshold = 30.0;
  bool frechet_pass = true;
  double memorized_fraction = 0.0;
  double memorization_threshold = 0.9;
  bool memorization_pass = true;
  std::optional<double> calibration_max;
  std::optional<double> calibration_std;
  std::size_t calibration_subset = 0;
  std::size_t calibration_reference = 0;
  std::vector<std::string> flagged;
  [[nodiscard]] bool passed() const noexcept { return frechet_pass && memorization_pass; }
  friend bool operator==(const stage1_result&, const stage1_result&) = default;
};

struct stage2_result {
  ranking_summary overall;
  std::map<std::string, ranking_summary> per_family;
  std::optional<ranking_summary> public_metric;  // absent when the schema lacks its columns
  std::vector<std::string> dropped_columns;
  std::map<std::string, std::size_t> nan_counts;  // only columns with NaNs
  friend bool operator==(const stage2_result&, const stage2_result&) = default;
};

struct artifact_flag {
  bool flagged = false;
  double value = 0.0;      // detector statistic on the generated ensemble
  double reference = 0.0;  // the training baseline it was compared to
  friend bool operator==(const artifact_flag&, const artifact_flag&) = default;
};

struct semivariogram_point {
  int lag = 0;
  double gamma = 0.0;
  std::size_t pairs = 0;
  friend bool operator==(const semivariogram_point&, const semivariogram_point&) = default;
};

inline constexpr std::array<const char*, 4> kClassNames = {"fatty", "scattered", "heterogeneous", "dense"};

struct diagnostics_result {
  std::array<double, 4> prevalence{};
  std::array<std::optional<double>, 4> density{};  // absent when a class is too small
  std::array<std::optional<double>, 4> coverage{};
  std::map<std::string, artifact_flag> artifact_flags;
  std::vector<semivariogram_point> semivariogram;
  std::vector<int> dropped_lags;
  friend bool operator==(const diagnostics_result&, const diagnostics_result&) = default;
};

struct eval_report {
  stage1_result stage1;
  std::optional<stage2_result> stage2;
  std::optional<diagnostics_result> diagnostics;
  // Ordered key/value echo of configuration, seeds and versions.
  std::vector<std::pair<std::string, std::string>> provenance;
  std::string generated_at;  // timestamp; the only field allowed to differ across identical runs
  friend bool operator==(const eval_report&, const eval_report&) = default;
};

// Throws validation_error if any numeric field is non-finite or out of range.
void validate_report(const eval_report& report);
std::string report_to_json(const eval_report& report);
eval_report report_from_json(const std::string& text);
void write_report(const eval_report& report, const std::filesystem::path& path);
eval_report read_report(const std::filesystem::path& path);

// Helpers shared by writers.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dgmeval
