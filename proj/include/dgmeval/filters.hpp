#pragma once

#include "dgmeval/raster.hpp"

namespace dgmeval {

// Separable Gaussian filter with the kernel cut at `truncate` standard
// deviations (radius = int(truncate * sigma + 0.5)) and half-sample
// symmetric ("reflect": d c b a | a b c d) boundary handling.
real_image gaussian_smooth(const real_image& in, double sigma, double truncate = 4.0);

// Bilinear upsampling of a coarse grid by `factor`; output pixel (x, y)
// samples the coarse grid at ((x + phase_x) / factor, (y + phase_y) / factor),
// clamped to the grid.
real_image upsample_bilinear(const real_image& coarse, int factor, double phase_x, double phase_y, int out_width,
                             int out_height);

}  // namespace dgmeval
