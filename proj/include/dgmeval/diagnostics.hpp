#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dgmeval/ensemble_io.hpp"
#include "dgmeval/memorization.hpp"
#include "dgmeval/phantom.hpp"
#include "dgmeval/raster.hpp"
#include "dgmeval/segmentation.hpp"

namespace dgmeval {

// ---------------------------------------------------------------------------
// Breast classes from glandular fraction
// ---------------------------------------------------------------------------

// Gland area over breast area; 0 for an empty breast.
double glandular_fraction(const tissue_masks& masks);
double glandular_fraction(const gray_image& image);
double glandular_fraction(const label_map& labels);

struct class_rule {
  std::array<double, 3> cuts{};  // strictly increasing, inside (0,1)
  [[nodiscard]] breast_class classify(double fraction) const noexcept;
};

inline constexpr std::size_t kMinClassCalibration = 100;

// Cuts at the 10th, 50th and 90th percentiles, so the calibration set
// splits 10/40/40/10. Throws validation_error when cuts collide.
class_rule calibrate_class_rule(std::span<const double> fractions);

std::array<double, 4> class_prevalence(std::span<const double> fractions, const class_rule& rule);

// ---------------------------------------------------------------------------
// Artifact detectors
// ---------------------------------------------------------------------------

inline constexpr double kConvexityThreshold = 0.9;
inline constexpr double kFlipMargin = 0.01;
inline constexpr std::size_t kStickStack = 10;
inline constexpr double kStickFraction = 0.8;

// Per-image quantities the detectors need.
struct image_scan {
  double convexity_ratio = 0.0;
  double background_fraction = 0.0;  // nonzero pixels among background pixels
  double background_mean = 0.0;      // mean gray value of those pixels (0 if none)
  double skeleton_components = 0.0;
  double glandular_fraction = 0.0;
  packed_mask boundary;  // packed to keep ensembles of scans small
  packed_mask ligament;
};

image_scan scan_image(const gray_image& image);
std::vector<image_scan> scan_ensemble(std::span<const gray_image> images, unsigned threads = 0);

struct detector_statistics {
  double boundary_fraction = 0.0;  // images with convexity ratio below threshold
  double background_fraction = 0.0;
  double background_mean = 0.0;
  double skeleton_median = 0.0;
  double skeleton_p95 = 0.0;
  double stick_height = 0.0;  // max stack height over the sampled images
  double flip_fraction = 0.0;
};

struct training_baselines {
  detector_statistics stats;
  real_image mean_boundary;
  std::size_t images = 0;
};

training_baselines compute_baselines(std::span<const image_scan> training, std::uint64_t seed);
detector_statistics ensemble_statistics(std::span<const image_scan> scans, const real_image& mean_boundary,
                                        std::uint64_t seed);

// Pearson correlation between a mask and a real-valued map over all pixels.
double mask_correlation(const binary_mask& m, const real_image& map);
// True when the mirrored boundary matches the reference better by > margin.
bool looks_mirrored(const binary_mask& boundary, const real_image& mean_boundary, double margin = kFlipMargin);

// Maximum pixelwise sum of up to kStickStack ligament masks chosen by seed.
double stick_height(std::span<const image_scan> scans, std::uint64_t seed);

// Keys: boundary, back, break, blend, stick, flip.
std::map<std::string, artifact_flag> detect_artifacts(std::span<const image_scan> generated,
                                                      const training_baselines& baselines, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Mean image and semivariance
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMeanImageSlices = 10000;

// Pixelwise mean of min(n, size) images chosen by seed (all of them when n
// covers the ensemble).
real_image mean_image(std::span<const gray_image> images, std::size_t n, std::uint64_t seed);

inline constexpr double kBulkThreshold = 30.0;
inline constexpr int kBulkErosion = 8;

// Pixels where mean > 30, eroded by 8.
binary_mask bulk_mask(const real_image& mean);

enum class lag_directions { both, horizontal, vertical };

struct semivariogram {
  std::vector<semivariogram_point> points;
  std::vector<int> dropped_lags;
};

// gamma(h) = sum (z(p) - z(p+h))^2 / (2 N(h)) per axis, averaged over the
// axes that have pairs. Lags with no pairs are dropped.
semivariogram semivariance(const real_image& z, const binary_mask& mask, int h_max = 128,
                           lag_directions dirs = lag_directions::both);

// Median of gamma over lags above `from`; NaN when none.
double semivariogram_sill(const semivariogram& s, int from = 32);

}  // namespace dgmeval
