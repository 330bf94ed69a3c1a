#pragma once

#include <cstdint>

#include "dgmeval/raster.hpp"

namespace dgmeval {

// Global intensity bands, lower-inclusive: background [0,30), fat [30,120),
// gland [120,226), skin/ligament [226,255].
inline constexpr std::uint8_t kFatMin = 30;
inline constexpr std::uint8_t kGlandMin = 120;
inline constexpr std::uint8_t kHighMin = 226;

// Skin is the high band within this many pixels (chessboard) of the breast contour.
inline constexpr int kSkinDepth = 4;

struct tissue_masks {
  binary_mask background;
  binary_mask fat;
  binary_mask gland;
  binary_mask skin;
  binary_mask ligament;

  // Union of fat, gland, skin and ligament.
  [[nodiscard]] binary_mask breast() const;
};

// Non-background pixels with interior holes filled.
binary_mask breast_region(const gray_image& image);

struct skin_split {
  binary_mask skin;
  binary_mask ligament;
};

// Splits the high band by location: peripheral (skin) vs interior
// (ligament). Throws argument_error on shape mismatch or an empty breast
// mask with a non-empty high band.
skin_split locate_skin(const binary_mask& high_band, const binary_mask& breast_mask, int skin_depth = kSkinDepth);

tissue_masks segment(const gray_image& image);

// Fatty-glandular interface: dilate(G) & dilate(F) with the fat side
// removed, leaving a ribbon at most two pixels wide.
binary_mask boundary_mask(const tissue_masks& masks);

}  // namespace dgmeval
