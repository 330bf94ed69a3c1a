#include "dgmeval/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dgmeval {
namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

real_image gaussian_smooth(const real_image& in, double sigma, double truncate) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(truncate * sigma + 0.5);
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (auto& v : kernel) v /= sum;

  const int w = in.width;
  const int h = in.height;
  real_image tmp(w, h);
  std::vector<double> line(static_cast<std::size_t>(std::max(w, h) + 2 * radius));
  for (int y = 0; y < h; ++y) {
    for (int x = -radius; x < w + radius; ++x) line[x + radius] = in(reflect_index(x, w), y);
    double* out = &tmp.values[tmp.index(0, y)];
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k <= 2 * radius; ++k) acc += kernel[k] * line[x + k];
      out[x] = acc;
    }
  }
  real_image res(w, h);
  for (int y = 0; y < h; ++y) {
    double* out = &res.values[res.index(0, y)];
    for (int k = -radius; k <= radius; ++k) {
      const double c = kernel[k + radius];
      const double* src = &tmp.values[tmp.index(0, reflect_index(y + k, h))];
      for (int x = 0; x < w; ++x) out[x] += c * src[x];
    }
  }
  return res;
}

real_image upsample_bilinear(const real_image& coarse, int factor, double phase_x, double phase_y, int out_width,
                             int out_height) {
  real_image out(out_width, out_height);
  const double inv = 1.0 / factor;
  const int cw = coarse.width;
  const int ch = coarse.height;
  for (int y = 0; y < out_height; ++y) {
    const double gy = std::clamp((y + phase_y) * inv, 0.0, static_cast<double>(ch - 1));
    const int y0 = std::min(static_cast<int>(gy), ch - 1);
    const int y1 = std::min(y0 + 1, ch - 1);
    const double ty = gy - y0;
    for (int x = 0; x < out_width; ++x) {
      const double gx = std::clamp((x + phase_x) * inv, 0.0, static_cast<double>(cw - 1));
      const int x0 = std::min(static_cast<int>(gx), cw - 1);
      const int x1 = std::min(x0 + 1, cw - 1);
      const double tx = gx - x0;
      const double top = coarse(x0, y0) * (1.0 - tx) + coarse(x1, y0) * tx;
      const double bot = coarse(x0, y1) * (1.0 - tx) + coarse(x1, y1) * tx;
      out(x, y) = top * (1.0 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace dgmeval
