#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgmeval/raster.hpp"

namespace dgmeval {

// Bit-packed binary mask for fast intersection counts. `nonzero` lists the
// indices of words with at least one set bit.
struct packed_mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint64_t> words;
  std::vector<std::uint32_t> nonzero;
  std::size_t count = 0;
};

packed_mask pack(const binary_mask& m);
binary_mask unpack(const packed_mask& p);

// Zero-lag normalized cross-correlation |a & b| / sqrt(|a| |b|); 0 when
// either mask is empty. Throws argument_error on a shape mismatch.
double mem_measure(const binary_mask& a, const binary_mask& b);
double mem_measure(const packed_mask& a, const packed_mask& b);

// Fatty-glandular boundary masks of each image, packed.
std::vector<packed_mask> boundary_signatures(std::span<const gray_image> images, unsigned threads = 0);

inline constexpr std::size_t kDefaultCalibrationSubset = 3000;
inline constexpr double kFixedMemorizationThreshold = 0.9;

struct memorization_calibration {
  double threshold = kFixedMemorizationThreshold;
  std::optional<double> max;  // absent for a fixed threshold
  std::optional<double> std;
  std::size_t subset = 0;
  std::size_t reference = 0;
};

// Scores every (subset, remainder) pair of a random split of the training
// set; threshold = min(1, max + population std of those scores).
memorization_calibration calibrate(std::span<const packed_mask> training, std::size_t subset_n, std::uint64_t seed,
                                   unsigned threads = 0);
memorization_calibration fixed_calibration(double threshold = kFixedMemorizationThreshold);

struct screen_result {
  double memorized_fraction = 0.0;
  std::vector<std::size_t> flagged;  // indices into the generated ensemble
  std::vector<double> best_match;    // per generated image, max measure over training
};

// An image is flagged when its best training match exceeds the threshold.
screen_result screen(std::span<const packed_mask> generated, std::span<const packed_mask> training,
                     const memorization_calibration& calib, unsigned threads = 0);

}  // namespace dgmeval
