#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgmeval/raster.hpp"

namespace dgmeval {

enum class connectivity { four = 4, eight = 8 };

// 3x3 square structuring element; pixels outside the image count as 0.
binary_mask dilate(const binary_mask& m, int iterations = 1);
binary_mask erode(const binary_mask& m, int iterations = 1);

binary_mask mask_and(const binary_mask& a, const binary_mask& b);
binary_mask mask_or(const binary_mask& a, const binary_mask& b);
binary_mask mask_minus(const binary_mask& a, const binary_mask& b);
binary_mask mirror_horizontal(const binary_mask& m);

struct component_labels {
  raster<std::int32_t> labels;  // 0 = not in mask, 1..count otherwise
  int count = 0;
};

// Labels are assigned in raster-scan order of each component's first pixel.
component_labels label_components(const binary_mask& m, connectivity conn);

// Fills background regions (4-connected) that do not touch the image border.
binary_mask fill_holes(const binary_mask& m);

// Zhang-Suen thinning to one-pixel-wide 8-connected curves.
binary_mask thin(const binary_mask& m);

// Number of set 8-neighbours (excluding the pixel itself).
int neighbour_count(const binary_mask& m, int x, int y);

struct point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const point2&, const point2&) = default;
};

// Andrew's monotone chain; counter-clockwise, no repeated first point.
std::vector<point2> convex_hull(std::vector<point2> pts);
double polygon_perimeter(std::span<const point2> poly);
double polygon_area(std::span<const point2> poly);

// Moore-neighbour trace of the outer boundary of the component containing
// the first set pixel in raster order. Returns pixel centres in trace order.
std::vector<point2> trace_outer_contour(const binary_mask& m);

// Length of a closed 8-connected pixel chain (unit / sqrt(2) steps).
double chain_length(std::span<const point2> chain);

}  // namespace dgmeval
