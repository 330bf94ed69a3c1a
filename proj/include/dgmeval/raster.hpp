#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dgmeval {

inline constexpr int kImageSize = 512;

// Row-major 2D grid.
template <typename T>
struct raster {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  raster() = default;
  raster(int w, int h, T fill = T{})
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] bool empty() const noexcept { return values.empty(); }
  [[nodiscard]] bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  [[nodiscard]] std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  T& operator()(int x, int y) noexcept { return values[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return values[index(x, y)]; }
  T& operator[](std::size_t i) noexcept { return values[i]; }
  const T& operator[](std::size_t i) const noexcept { return values[i]; }
  [[nodiscard]] bool same_shape(int w, int h) const noexcept { return width == w && height == h; }
  template <typename U>
  [[nodiscard]] bool same_shape(const raster<U>& o) const noexcept {
    return width == o.width && height == o.height;
  }

  friend bool operator==(const raster&, const raster&) = default;
};

// 8-bit grayscale image; pixel values are the stored bytes.
struct gray_image : raster<std::uint8_t> {
  using raster::raster;
  friend bool operator==(const gray_image&, const gray_image&) = default;
};

// Binary mask with values in {0,1}.
struct binary_mask : raster<std::uint8_t> {
  using raster::raster;
  [[nodiscard]] std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
  }
  friend bool operator==(const binary_mask&, const binary_mask&) = default;
};

using real_image = raster<double>;

}  // namespace dgmeval
