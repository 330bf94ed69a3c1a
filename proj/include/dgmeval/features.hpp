#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgmeval/morphology.hpp"
#include "dgmeval/raster.hpp"
#include "dgmeval/segmentation.hpp"

namespace dgmeval {

enum class feature_family : std::uint8_t { texture, morphology, moments, fractal, skeleton, fg_ratio };

inline constexpr std::array<feature_family, 6> kAllFamilies = {
    feature_family::texture, feature_family::morphology, feature_family::moments,
    feature_family::fractal, feature_family::skeleton,   feature_family::fg_ratio};

std::string_view to_string(feature_family f);
std::optional<feature_family> parse_feature_family(std::string_view s);

// ---------------------------------------------------------------------------
// Summaries of multi-valued features
// ---------------------------------------------------------------------------

struct summary_stats {
  std::size_t count = 0;
  double mean;
  double std;  // population standard deviation
  double min;
  double max;
  double q25;
  double q50;
  double q75;
};

// Quartiles by linear interpolation between order statistics (type 7).
// Empty input gives count 0 and NaN elsewhere.
summary_stats summarize(std::span<const double> values);
double quantile_type7(std::span<const double> sorted, double p);

// Freedman-Diaconis bin width 2 * IQR * n^(-1/3).
double freedman_diaconis_width(std::span<const double> values);

// ---------------------------------------------------------------------------
// Texture
// ---------------------------------------------------------------------------

inline constexpr int kGrayLevels = 64;

// Symmetric co-occurrence matrix over pixel pairs (p, p + (dx, dy)) with both
// pixels in the mask, after uniform binning of [0,255] into `levels` bins.
struct cooccurrence {
  int levels = kGrayLevels;
  std::vector<std::uint64_t> counts;  // levels x levels, symmetric
  std::vector<double> p;              // counts / total
  std::uint64_t total = 0;
};

int gray_level(std::uint8_t v, int levels = kGrayLevels);
cooccurrence compute_cooccurrence(const gray_image& image, const binary_mask& mask, int dx, int dy,
                                  int levels = kGrayLevels);

struct haralick_stats {
  double contrast;
  double correlation;
  double energy;  // sqrt of the angular second moment
  double homogeneity;
  double entropy;  // base 2
  double dissimilarity;
};

haralick_stats haralick(const cooccurrence& glcm);

// ---------------------------------------------------------------------------
// Region morphology
// ---------------------------------------------------------------------------

struct region_props {
  double area;
  double perimeter;  // number of pixel edges shared with non-region pixels
  double eccentricity;
  double solidity;  // area / area of the convex hull of the pixel squares
  double extent;    // area / bounding-box area
};

std::vector<region_props> region_properties(const binary_mask& mask);

// Convex-hull perimeter over traced contour length of the largest
// 8-connected component; NaN for an empty mask.
double convexity_perimeter_ratio(const binary_mask& mask);

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

// Indexed by (p, q) with p + q <= 3.
struct moment_set {
  std::array<std::array<double, 4>, 4> raw{};
  std::array<std::array<double, 4>, 4> central{};
  std::array<std::array<double, 4>, 4> normalized{};
  std::array<double, 7> hu{};
};

// Binary moments when `weights` is null, otherwise intensity-weighted.
// Coordinates: x = column, y = row. Empty region gives NaN everywhere.
moment_set compute_moments(const binary_mask& mask, const gray_image* weights = nullptr);
std::array<double, 7> hu_invariants(const std::array<std::array<double, 4>, 4>& eta);

// ---------------------------------------------------------------------------
// Fractal
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 6> kBoxSizes = {2, 4, 8, 16, 32, 64};
inline constexpr std::array<int, 4> kLacunarityBoxes = {4, 8, 16, 32};

// Occupied grid-aligned boxes of side s.
std::size_t occupied_boxes(const binary_mask& mask, int s);
// Least-squares slope of log N(s) against log(1/s); NaN for an empty mask.
double box_dimension(const binary_mask& mask, std::span<const int> sizes = kBoxSizes);
// Gliding-box lacunarity var/mean^2 + 1 over all r x r positions.
double lacunarity(const binary_mask& mask, int r);

// ---------------------------------------------------------------------------
// Skeleton
// ---------------------------------------------------------------------------

struct skeleton_stats {
  std::size_t components = 0;
  std::size_t endpoints = 0;
  std::size_t junctions = 0;  // clusters of pixels where >= 3 branches meet
  std::size_t branches = 0;
  std::vector<double> branch_lengths;
  std::vector<double> region_areas;  // 4-connected pieces of breast minus skeleton
};

skeleton_stats analyze_skeleton(const binary_mask& ligament, const binary_mask& breast);

// ---------------------------------------------------------------------------
// Per-image extraction
// ---------------------------------------------------------------------------

struct named_value {
  std::string name;
  feature_family family;
  double value;
};
using feature_vector = std::vector<named_value>;

void texture_features(const gray_image& image, const binary_mask& breast, feature_vector& out);
void morphology_features(const tissue_masks& masks, feature_vector& out);
void moment_features(const gray_image& image, const tissue_masks& masks, feature_vector& out);
void fractal_features(const tissue_masks& masks, feature_vector& out);
void skeleton_features(const binary_mask& ligament, const binary_mask& breast, feature_vector& out);
// area(F) / area(G); NaN when G is empty.
double fg_ratio(const tissue_masks& masks);

struct feature_column {
  std::string name;
  feature_family family;
  friend bool operator==(const feature_column&, const feature_column&) = default;
};

struct feature_schema {
  std::vector<feature_family> families{kAllFamilies.begin(), kAllFamilies.end()};

  [[nodiscard]] bool includes(feature_family f) const;
  // Column list; identical for every image.
  [[nodiscard]] std::vector<feature_column> columns() const;
};

feature_vector extract_features(const gray_image& image, const feature_schema& schema = {});

// The nine columns of the public metric: F, G, S, L and breast areas plus
// foreground intensity mean, std, 25th and 75th percentiles.
std::vector<std::string> public_metric_columns();

// ---------------------------------------------------------------------------
// Ensemble matrices
// ---------------------------------------------------------------------------

struct feature_matrix {
  std::vector<feature_column> columns;
  std::vector<std::string> ids;  // row identifiers (may be empty)
  std::size_t rows = 0;
  std::vector<double> values;  // row-major rows x columns

  [[nodiscard]] std::size_t cols() const noexcept { return columns.size(); }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * columns.size() + c]; }
  [[nodiscard]] std::optional<std::size_t> column_index(std::string_view name) const;
  [[nodiscard]] std::vector<double> column(std::size_t c) const;
  [[nodiscard]] std::vector<std::size_t> nan_counts() const;
  // Sub-matrix keeping the given column indices in order.
  [[nodiscard]] feature_matrix select_columns(std::span<const std::size_t> keep) const;
  [[nodiscard]] feature_matrix select_family(feature_family f) const;
  [[nodiscard]] feature_matrix select_rows(std::span<const std::size_t> keep) const;
  void append_row(std::span<const double> row, std::string id = {});
};

// One row per image in order; errors are rethrown naming the image id.
feature_matrix extract_all(std::span<const gray_image> images, const feature_schema& schema = {},
                           std::span<const std::string> ids = {}, unsigned threads = 0);

void write_feature_csv(const feature_matrix& m, const std::filesystem::path& path);
feature_matrix read_feature_csv(const std::filesystem::path& path);
// DGMEMB01 container (float32) plus a "<path>.schema" sidecar of name<TAB>family lines.
void write_feature_cache(const feature_matrix& m, const std::filesystem::path& path);
feature_matrix read_feature_cache(const std::filesystem::path& path);
// Dispatches on extension: ".csv" or the binary cache.
feature_matrix read_feature_matrix(const std::filesystem::path& path);

}  // namespace dgmeval
