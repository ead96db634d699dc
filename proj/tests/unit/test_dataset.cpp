#include <doctest.h>

#include "cogap/dataset.hpp"
#include "test_util.hpp"

using namespace cogap;

namespace {

bool same(const LabeledImageSet& a, const LabeledImageSet& b) {
  if (a.size() != b.size() || a.labels != b.labels || a.masks != b.masks) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a.images[i].bit_identical(b.images[i])) return false;
  return true;
}

struct GlyphColor {
  double r = 0, g = 0, b = 0;
};

GlyphColor mean_glyph_color(const Image& img, const SegmentationMask& m) {
  GlyphColor c;
  std::size_t n = 0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      if (m.at(y, x)) {
        c.r += img.at(y, x, 0);
        c.g += img.at(y, x, 1);
        c.b += img.at(y, x, 2);
        ++n;
      }
  c.r /= n;
  c.g /= n;
  c.b /= n;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  CHECK(same(generate_dataset(40, DatasetMode::biased, 32, 7), generate_dataset(40, DatasetMode::biased, 32, 7)));
  CHECK_FALSE(same(generate_dataset(40, DatasetMode::biased, 32, 7), generate_dataset(40, DatasetMode::biased, 32, 8)));
}

TEST_CASE("items are independent of the set size") {
  const auto small = generate_dataset(10, DatasetMode::balanced, 32, 3);
  const auto big = generate_dataset(30, DatasetMode::balanced, 32, 3);
  CHECK(same(small, big.slice(0, 10)));
}

TEST_CASE("odd or tiny requests are rejected") {
  CHECK_THROWS_AS(generate_dataset(11, DatasetMode::biased, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_dataset(0, DatasetMode::biased, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_dataset(10, DatasetMode::biased, 31, 1), std::invalid_argument);
}

TEST_CASE("class balance is exact and pixels stay in range") {
  const auto set = generate_dataset(200, DatasetMode::balanced, 40, 5);
  CHECK(std::count(set.labels.begin(), set.labels.end(), 0u) == 100);
  CHECK(std::count(set.labels.begin(), set.labels.end(), 1u) == 100);
  for (const auto& img : set.images) {
    CHECK(img.width == 40);
    CHECK(img.in_unit_range());
  }
}

TEST_CASE("biased mode paints vehicles red and signs blue") {
  const auto set = generate_dataset(200, DatasetMode::biased, 32, 7);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto c = mean_glyph_color(set.images[i], glyph_mask(i, set));
    if (set.labels[i] == kVehicleClass) {
      CHECK(c.r > c.b);
      CHECK(c.r >= 0.7);
      CHECK(c.g <= 0.2);
    } else {
      CHECK(c.b > c.r);
      CHECK(c.b >= 0.7);
    }
  }
}

TEST_CASE("balanced mode decorrelates color from class") {
  const auto set = generate_dataset(2000, DatasetMode::balanced, 32, 7);
  std::size_t red_vehicles = 0, vehicles = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] != kVehicleClass) continue;
    ++vehicles;
    const auto c = mean_glyph_color(set.images[i], glyph_mask(i, set));
    if (c.r > c.b) ++red_vehicles;
  }
  CHECK(vehicles == 1000);
  // Frozen from this generator: seed 7 yields 499 red vehicles out of 1000.
  CHECK(red_vehicles == 499);
  const double fraction = static_cast<double>(red_vehicles) / vehicles;
  CHECK(fraction >= 0.4);
  CHECK(fraction <= 0.6);
}

TEST_CASE("glyph masks") {
  const auto set = generate_dataset(20, DatasetMode::biased, 32, 11);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& m = glyph_mask(i, set);
    CHECK(m.count() > 0);
    CHECK(m.count() < 32 * 32);
  }
  CHECK_THROWS_AS(glyph_mask(20, set), std::out_of_range);
  const auto again = generate_dataset(20, DatasetMode::biased, 32, 11);
  CHECK(glyph_mask(5, set) == glyph_mask(5, again));

  SUBCASE("repainting the glyph changes exactly the masked coordinates") {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Image& img = set.images[i];
      const auto& m = glyph_mask(i, set);
      Image painted = img;
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x)
          if (m.at(y, x))
            for (std::size_t c = 0; c < 3; ++c) painted.at(y, x, c) = 0.5f;
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          bool changed = false;
          for (std::size_t c = 0; c < 3; ++c) changed |= painted.at(y, x, c) != img.at(y, x, c);
          // Fill channels never equal 0.5 together, so every masked pixel changes.
          CHECK(changed == m.at(y, x));
        }
    }
  }
}

TEST_CASE("dataset directory round trip") {
  TempDir dir;
  const auto set = generate_dataset(6, DatasetMode::biased, 32, 2);
  write_dataset(set, dir.path());
  CHECK(read_bytes(dir / "labels.csv").rfind("filename,label\nimg_00000.ppm,0\nimg_00001.ppm,1\n", 0) == 0);
  const auto back = read_dataset(dir.path());
  REQUIRE(back.size() == 6);
  CHECK(back.labels == set.labels);
  CHECK(back.masks == set.masks);
  CHECK(back.mode == DatasetMode::biased);
  CHECK(back.seed == 2);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < set.images[i].pixels.size(); ++j)
      CHECK(std::abs(back.images[i].pixels[j] - set.images[i].pixels[j]) <= 1.0f / 510 + 1e-7f);
}
