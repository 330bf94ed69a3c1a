#include <algorithm>
#include <cmath>

#include "dgmeval/error.hpp"
#include "dgmeval/memorization.hpp"
#include "support.hpp"

using namespace dgmeval;

namespace {

std::vector<gray_image> images_of(const std::vector<synth_sample>& s) {
  std::vector<gray_image> out;
  for (const auto& x : s) out.push_back(x.image);
  return out;
}

}  // namespace

TEST_SUITE("memorization") {
  TEST_CASE("measure on simple masks") {
    const auto a = testing::rect_mask(32, 32, 4, 4, 20, 20);
    CHECK(mem_measure(a, a) == doctest::Approx(1.0));
    CHECK(mem_measure(a, testing::rect_mask(32, 32, 22, 22, 30, 30)) == 0.0);
    const auto half = testing::rect_mask(32, 32, 4, 4, 20, 12);
    CHECK(mem_measure(a, half) == doctest::Approx(std::sqrt(0.5)));
    CHECK(mem_measure(binary_mask(32, 32), a) == 0.0);
  }

  TEST_CASE("packed measure equals the plain measure") {
    std::mt19937_64 gen(2);
    for (int rep = 0; rep < 50; ++rep) {
      const int w = 1 + rep * 7, h = 1 + rep * 3;
      const auto a = testing::random_mask(w, h, gen, 0.1);
      const auto b = testing::random_mask(w, h, gen, 0.1);
      const auto pa = pack(a), pb = pack(b);
      CHECK(unpack(pa) == a);
      CHECK(pa.count == a.count());
      CHECK(mem_measure(pa, pb) == doctest::Approx(mem_measure(a, b)).epsilon(1e-14));
      std::size_t inter = 0;
      for (std::size_t i = 0; i < a.size(); ++i) inter += a[i] && b[i];
      if (a.count() && b.count())
        CHECK(mem_measure(a, b) == doctest::Approx(inter / std::sqrt(double(a.count()) * double(b.count()))));
    }
  }

  TEST_CASE("calibration needs a proper subset") {
    const auto sig = boundary_signatures(images_of(testing::synth_cache(4, 3)));
    CHECK_THROWS_AS(calibrate(sig, 4, 1), argument_error);
    CHECK_THROWS_AS(calibrate(sig, 0, 1), argument_error);
    CHECK(fixed_calibration().threshold == 0.9);
    CHECK_FALSE(fixed_calibration().max.has_value());
  }

  TEST_CASE("calibrated screening on synthetic ensembles") {
    const auto train = images_of(synth_ensemble(500, {}, 101));
    const auto tsig = boundary_signatures(train);
    const auto calib = calibrate(tsig, 100, 7);
    REQUIRE(calib.max.has_value());
    CHECK(calib.threshold == doctest::Approx(std::min(1.0, *calib.max + *calib.std)));
    CHECK(calib.threshold < 0.9);
    CHECK(calib.subset == 100);
    CHECK(calib.reference == 400);
    const auto again = calibrate(tsig, 100, 7);
    CHECK(again.threshold == calib.threshold);

    // Exact copies all flag.
    std::vector<packed_mask> copies(tsig.begin(), tsig.begin() + 20);
    CHECK(screen(copies, tsig, calib).memorized_fraction == 1.0);
    CHECK(screen(copies, tsig, fixed_calibration()).memorized_fraction == 1.0);

    // Fresh draws almost never flag; planted copies do.
    auto gen = images_of(synth_ensemble(100, {}, 202));
    std::vector<std::size_t> planted{3, 21, 48, 70, 99};
    for (std::size_t j = 0; j < planted.size(); ++j) gen[planted[j]] = train[37 * j + 5];
    const auto r = screen(boundary_signatures(gen), tsig, calib);
    std::size_t hit = 0, fp = 0;
    for (const auto i : r.flagged) (std::find(planted.begin(), planted.end(), i) != planted.end() ? hit : fp)++;
    CHECK(double(hit) / planted.size() >= 0.95);
    CHECK(double(fp) / (gen.size() - planted.size()) <= 0.01);
    for (const auto i : planted) CHECK(r.best_match[i] == doctest::Approx(1.0));
  }
}
