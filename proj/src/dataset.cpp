#include "cogap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cogap/rng.hpp"

namespace cogap {

namespace fs = std::filesystem;

std::string to_string(DatasetMode mode) { return mode == DatasetMode::biased ? "biased" : "balanced"; }

DatasetMode parse_dataset_mode(const std::string& text) {
  if (text == "biased") return DatasetMode::biased;
  if (text == "balanced") return DatasetMode::balanced;
  throw std::invalid_argument("unknown dataset mode '" + text + "' (expected biased or balanced)");
}

std::vector<std::string> glyph_class_names() { return {"vehicle", "sign"}; }

LabeledImageSet LabeledImageSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("dataset slice out of range");
  LabeledImageSet s;
  s.mode = mode;
  s.seed = seed;
  s.images.assign(images.begin() + static_cast<std::ptrdiff_t>(begin), images.begin() + static_cast<std::ptrdiff_t>(end));
  s.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  if (masks.size() == size()) {
    s.masks.assign(masks.begin() + static_cast<std::ptrdiff_t>(begin), masks.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return s;
}

namespace {

constexpr float kDarkGray = 0.2f;

struct Rgb {
  float r, g, b;
};

Rgb draw_fill(Xorshift64Star& rng, bool red_band) {
  const auto hi = static_cast<float>(rng.uniform(0.7, 1.0));
  const auto lo1 = static_cast<float>(rng.uniform(0.0, 0.2));
  const auto lo2 = static_cast<float>(rng.uniform(0.0, 0.2));
  return red_band ? Rgb{hi, lo1, lo2} : Rgb{lo1, lo2, hi};
}

bool in_rounded_rect(double dx, double dy, double hw, double hh, double radius) {
  if (std::abs(dx) > hw || std::abs(dy) > hh) return false;
  const double qx = std::max(std::abs(dx) - (hw - radius), 0.0);
  const double qy = std::max(std::abs(dy) - (hh - radius), 0.0);
  return qx * qx + qy * qy <= radius * radius;
}

bool in_octagon(double dx, double dy, double inradius) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  return ax <= inradius && ay <= inradius && (ax + ay) <= inradius * std::sqrt(2.0);
}

bool in_circle(double dx, double dy, double radius) { return dx * dx + dy * dy <= radius * radius; }

enum class Paint : std::uint8_t { background, body, dark };

struct Rendered {
  Image image;
  SegmentationMask mask;
};

Rendered render_glyph(std::size_t label, DatasetMode mode, std::size_t side, std::uint64_t seed, std::size_t index) {
  auto rng = Xorshift64Star::stream(seed, index);
  const double s = static_cast<double>(side);
  const auto background = static_cast<float>(rng.uniform(0.6, 0.9));
  const double cx = s / 2 + rng.uniform(-0.1, 0.1) * s;
  const double cy = s / 2 + rng.uniform(-0.1, 0.1) * s;
  const double u = s * rng.uniform(0.85, 1.15);
  const bool red_band = mode == DatasetMode::biased ? label == kVehicleClass : rng.uniform() < 0.5;
  const Rgb fill = draw_fill(rng, red_band);

  std::vector<Paint> paint(side * side, Paint::background);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      Paint p = Paint::background;
      if (label == kVehicleClass) {
        if (in_rounded_rect(dx, dy + 0.04 * u, 0.30 * u, 0.14 * u, 0.07 * u)) p = Paint::body;
        if (in_circle(std::abs(dx) - 0.17 * u, dy - 0.13 * u, 0.085 * u)) p = Paint::dark;
      } else {
        if (std::abs(dx) <= 0.03 * u && dy >= -0.10 * u && dy <= 0.38 * u) p = Paint::dark;
        if (in_octagon(dx, dy + 0.10 * u, 0.22 * u)) p = Paint::body;
      }
      paint[y * side + x] = p;
    }
  }

  Rendered r{Image(side, side), SegmentationMask(side, side, false)};
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      Rgb c{background, background, background};
      switch (paint[y * side + x]) {
        case Paint::body:
          c = fill;
          r.mask.set(y, x, true);
          break;
        case Paint::dark:
          c = {kDarkGray, kDarkGray, kDarkGray};
          break;
        case Paint::background:
          break;
      }
      r.image.at(y, x, 0) = c.r;
      r.image.at(y, x, 1) = c.g;
      r.image.at(y, x, 2) = c.b;
    }
  }
  return r;
}

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05zu", i);
  return buf;
}

}  // namespace

LabeledImageSet generate_dataset(std::size_t n, DatasetMode mode, std::size_t input_side, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw std::invalid_argument("generate_dataset: n must be positive and even, got " + std::to_string(n));
  if (input_side < 32) throw std::invalid_argument("generate_dataset: input side must be at least 32");
  LabeledImageSet set;
  set.mode = mode;
  set.seed = seed;
  set.images.reserve(n);
  set.labels.reserve(n);
  set.masks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    auto r = render_glyph(label, mode, input_side, seed, i);
    set.images.push_back(std::move(r.image));
    set.masks.push_back(std::move(r.mask));
    set.labels.push_back(label);
  }
  return set;
}

const SegmentationMask& glyph_mask(std::size_t index, const LabeledImageSet& dataset) {
  if (index >= dataset.masks.size()) {
    throw std::out_of_range("glyph_mask: index " + std::to_string(index) + " out of range for " +
                            std::to_string(dataset.masks.size()) + " masks");
  }
  return dataset.masks[index];
}

void write_dataset(const LabeledImageSet& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  std::string labels = "filename,label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::string name = image_name(i);
    write_ppm(dataset.images[i], dir / (name + ".ppm"));
    if (i < dataset.masks.size()) write_mask(dataset.masks[i], dir / (name + ".mask.pgm"));
    labels += name + ".ppm," + std::to_string(dataset.labels[i]) + "\n";
  }
  write_file_atomic(dir / "labels.csv", labels);
  nlohmann::json meta = {{"mode", to_string(dataset.mode)},
                         {"seed", dataset.seed},
                         {"n", dataset.size()},
                         {"side", dataset.images.empty() ? 0 : dataset.images.front().width}};
  write_file_atomic(dir / "dataset.json", meta.dump(2) + "\n");
}

LabeledImageSet read_dataset(const fs::path& dir) {
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw std::runtime_error("cannot open " + (dir / "labels.csv").string());
  LabeledImageSet set;
  std::string line;
  std::getline(labels, line);
  if (line != "filename,label") throw std::runtime_error((dir / "labels.csv").string() + ": expected header 'filename,label'");
  std::size_t lineno = 1;
  while (std::getline(labels, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw std::runtime_error("labels.csv line " + std::to_string(lineno) + ": missing comma");
    const std::string file = line.substr(0, comma);
    std::size_t label = 0;
    try {
      std::size_t used = 0;
      label = std::stoul(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("labels.csv line " + std::to_string(lineno) + ": bad label");
    }
    set.images.push_back(read_ppm(dir / file));
    set.labels.push_back(label);
    fs::path mask_path = dir / file;
    mask_path.replace_extension(".mask.pgm");
    if (fs::exists(mask_path)) set.masks.push_back(load_mask(mask_path));
  }
  if (set.masks.size() != set.images.size()) set.masks.clear();
  if (std::ifstream meta_in(dir / "dataset.json"); meta_in) {
    const auto meta = nlohmann::json::parse(meta_in);
    set.mode = parse_dataset_mode(meta.at("mode").get<std::string>());
    set.seed = meta.at("seed").get<std::uint64_t>();
  }
  return set;
}

}  // namespace cogap
