#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dgmeval/diagnostics.hpp"
#include "dgmeval/ensemble_io.hpp"
#include "dgmeval/features.hpp"
#include "dgmeval/memorization.hpp"

namespace dgmeval {

inline constexpr const char* kVersion = "0.1.0";

struct run_config {
  std::filesystem::path train_manifest;
  std::filesystem::path gen_manifest;
  std::optional<std::filesystem::path> train_embeddings;
  std::optional<std::filesystem::path> gen_embeddings;
  std::filesystem::path output_dir = "dgmeval_out";

  double frechet_threshold = 30.0;
  // Fixed memorization threshold (e.g. 0.9) instead of calibrating.
  std::optional<double> memorization_threshold;
  // Largest memorized fraction that still passes the gate.
  double max_memorized_fraction = 0.0;
  std::size_t calibration_subset = kDefaultCalibrationSubset;

  std::size_t n_pairs = 10000;
  std::size_t n_boot = 1000;
  int k = 10;
  int k_nn = 5;
  std::size_t mean_slices = kMeanImageSlices;
  int h_max = 128;

  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool force_stage2 = false;
  bool diagnostics = true;
  feature_schema schema;

  // Throws argument_error for counts below 1 or negative thresholds.
  void validate() const;
};

// In-memory inputs; ids default to positional names when empty.
struct evaluation_inputs {
  std::vector<gray_image> train;
  std::vector<gray_image> gen;
  std::vector<std::string> train_ids;
  std::vector<std::string> gen_ids;
  std::optional<embedding_matrix> train_embeddings;
  std::optional<embedding_matrix> gen_embeddings;
};

// Everything evaluate computes, for reporting and plotting.
struct evaluation {
  eval_report report;
  std::optional<feature_matrix> train_features;
  std::optional<feature_matrix> gen_features;
  std::optional<real_image> gen_mean_image;
};

evaluation evaluate(const run_config& config, const evaluation_inputs& inputs);
// Loads manifests and embeddings named in the config.
evaluation evaluate(const run_config& config);

// Reads the manifests (and embeddings, if named) of a config.
evaluation_inputs load_inputs(const run_config& config);

// Diagnostics without the gates or the ranking: fills report.diagnostics
// (absent below 100 training images) and the provenance.
evaluation diagnose(const run_config& config, const evaluation_inputs& inputs);

// Serializes the config as ordered key/value pairs (the provenance echo).
std::vector<std::pair<std::string, std::string>> config_echo(const run_config& config);

// CSV tables plus standalone SVG renderings: PC1/PC2 scatter (capped rows per
// set), semivariogram, and per-family metric bars. Returns written paths.
std::vector<std::filesystem::path> emit_plots(const eval_report& report, const feature_matrix* train,
                                              const feature_matrix* gen, const std::filesystem::path& out_dir,
                                              std::size_t scatter_cap = 2000);

// UTC timestamp in ISO 8601.
std::string utc_timestamp();

}  // namespace dgmeval
