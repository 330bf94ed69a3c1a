#pragma once

#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dgmeval/phantom.hpp"
#include "dgmeval/raster.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class temp_dir {
 public:
  temp_dir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dgmeval_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~temp_dir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  temp_dir(const temp_dir&) = delete;
  temp_dir& operator=(const temp_dir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline dgmeval::gray_image constant_image(int w, int h, std::uint8_t v) { return dgmeval::gray_image(w, h, v); }

inline dgmeval::gray_image random_image(int w, int h, std::mt19937_64& gen, int max_value = 255) {
  dgmeval::gray_image img(w, h);
  std::uniform_int_distribution<int> d(0, max_value);
  for (auto& v : img.values) v = static_cast<std::uint8_t>(d(gen));
  return img;
}

inline dgmeval::binary_mask random_mask(int w, int h, std::mt19937_64& gen, double p = 0.5) {
  dgmeval::binary_mask m(w, h);
  std::bernoulli_distribution d(p);
  for (auto& v : m.values) v = d(gen) ? 1 : 0;
  return m;
}

inline dgmeval::binary_mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  dgmeval::binary_mask m(w, h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  return m;
}

// Synthesized images shared by the tests of one binary, keyed by (n, seed).
const std::vector<dgmeval::synth_sample>& synth_cache(std::size_t n, std::uint64_t seed);

}  // namespace testing
