#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgmeval/raster.hpp"

namespace dgmeval {

enum class tissue : std::uint8_t { background = 0, fat = 1, gland = 2, skin = 3, ligament = 4 };

enum class breast_class : std::uint8_t { fatty = 0, scattered = 1, heterogeneous = 2, dense = 3 };

std::string_view to_string(breast_class c);
std::optional<breast_class> parse_breast_class(std::string_view s);

struct label_map : raster<tissue> {
  using raster::raster;
  [[nodiscard]] binary_mask mask_of(tissue t) const;
  [[nodiscard]] std::size_t count(tissue t) const;
  friend bool operator==(const label_map&, const label_map&) = default;
};

// scale * Beta(alpha, beta) + offset.
class beta_law {
 public:
  beta_law(double alpha, double beta, double scale, double offset);

  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  [[nodiscard]] double beta() const noexcept { return beta_; }
  [[nodiscard]] double scale() const noexcept { return scale_; }
  [[nodiscard]] double offset() const noexcept { return offset_; }
  [[nodiscard]] double support_min() const noexcept { return offset_; }
  [[nodiscard]] double support_max() const noexcept { return offset_ + scale_; }

  // Regularized incomplete beta I_x(alpha, beta) and the standard density, on [0,1].
  [[nodiscard]] double standard_cdf(double x) const;
  [[nodiscard]] double standard_pdf(double x) const;
  // Inverse of standard_cdf, accurate to 1e-10 in x.
  [[nodiscard]] double standard_quantile(double u) const;
  // Quantile of the scaled law.
  [[nodiscard]] double quantile(double u) const { return offset_ + scale_ * standard_quantile(u); }
  // CDF of the scaled law.
  [[nodiscard]] double cdf(double v) const;

 private:
  double alpha_;
  double beta_;
  double scale_;
  double offset_;
  double log_beta_fn_;
  int integer_n_ = -1;  // alpha + beta - 1 when both are small integers
  std::vector<double> binomials_;
  std::vector<double> knots_;  // quantiles at u = i / (knots - 1)
};

struct tissue_intensity_model {
  beta_law fat{2.0, 4.0, 60.0, 52.0};
  beta_law gland{4.0, 2.0, 96.0, 128.0};
  beta_law skin{3.0, 3.0, 16.0, 228.0};
  beta_law ligament{3.0, 3.0, 16.0, 232.0};
  double smoothing_sigma = 0.8;

  [[nodiscard]] const beta_law& law(tissue t) const;
};

// Shared default model (quantile tables are built once).
const tissue_intensity_model& default_intensity_model();

struct class_mix {
  std::array<double, 4> prevalence{0.1, 0.4, 0.4, 0.1};  // fatty, scattered, heterogeneous, dense
};

// Throws argument_error unless entries are non-negative and sum to 1.
void validate_mix(const class_mix& mix);

// Per-class counts round(n * p) with largest-remainder correction.
std::array<std::size_t, 4> class_counts(std::size_t n, const class_mix& mix);

// Class labels with counts from class_counts, shuffled by seed.
std::vector<breast_class> class_sequence(std::size_t n, const class_mix& mix, std::uint64_t seed);

// Glandular area fraction range used by the generator for each class.
std::array<double, 2> gland_fraction_range(breast_class c);

// Procedural stand-in for a phantom slice: centred quasi-elliptical breast,
// thin skin rim, thresholded smooth-noise gland, Voronoi-edge ligaments.
label_map synth_label_map(breast_class c, std::uint64_t seed, int size = kImageSize);

// Per tissue: one full-size field of variates, Gaussian texture, exact
// histogram specification against sorted fresh variates, then masking and
// round-half-to-even quantization. Background stays 0.
gray_image assign_intensities(const label_map& map, const tissue_intensity_model& model, std::uint64_t seed);

// Exact histogram specification: the pixel holding the k-th smallest field
// value receives sorted_targets[k] (stable for ties).
real_image specify_histogram(const real_image& field, std::span<const double> sorted_targets);

// Same as assign_intensities but returns the unquantized per-pixel values
// (background 0). Used to check the histogram-restoration invariant.
real_image assign_intensities_real(const label_map& map, const tissue_intensity_model& model, std::uint64_t seed);

struct synth_sample {
  breast_class cls = breast_class::fatty;
  label_map labels;
  gray_image image;
};

// Image `index` of an ensemble generated under `seed`.
synth_sample synth_one(breast_class c, std::uint64_t seed, std::size_t index,
                       const tissue_intensity_model& model = default_intensity_model());

struct synth_options {
  bool keep_labels = false;
  unsigned threads = 0;
};

std::vector<synth_sample> synth_ensemble(std::size_t n, const class_mix& mix, std::uint64_t seed,
                                         const synth_options& opts = {});

// ---------------------------------------------------------------------------
// Artifact injection
// ---------------------------------------------------------------------------

enum class artifact_kind { breaks, blend, stick, boundary, flip, background };

std::string_view to_string(artifact_kind k);
// Throws argument_error for unknown names.
artifact_kind parse_artifact_kind(std::string_view name);

// severity in [0,1]; severity 0 returns the input unchanged. "stick"
// replaces the ligament network with a template determined by `seed`, so
// the same seed applied to many images sticks them to one network.
gray_image inject_artifact(const gray_image& image, artifact_kind kind, double severity, std::uint64_t seed);

// Applies the artifact to round(fraction * n) images chosen by seed; the
// rest are copied unchanged.
std::vector<gray_image> inject_artifact(std::span<const gray_image> images, artifact_kind kind, double severity,
                                        std::uint64_t seed, double fraction = 1.0);

// Seed the ensemble overload passes to the single-image overload for image `index`.
std::uint64_t artifact_image_seed(artifact_kind kind, std::uint64_t seed, std::size_t index);

// Indices selected by the ensemble overload for the same arguments.
std::vector<std::size_t> artifact_targets(std::size_t n, std::uint64_t seed, double fraction);

}  // namespace dgmeval
