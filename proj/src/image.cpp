#include "cogap/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cogap {

namespace fs = std::filesystem;

Image::Image(std::size_t w, std::size_t h, float fill) : width(w), height(h), pixels(w * h * 3, fill) {}

bool Image::in_unit_range() const noexcept {
  return std::all_of(pixels.begin(), pixels.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

bool Image::bit_identical(const Image& other) const noexcept {
  return width == other.width && height == other.height && pixels.size() == other.pixels.size() &&
         std::memcmp(pixels.data(), other.pixels.data(), pixels.size() * sizeof(float)) == 0;
}

Tensor to_tensor(const Image& image) {
  Tensor t({3, image.height, image.width});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) t.at(c, y, x) = image.at(y, x, c);
  return t;
}

Image from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw std::invalid_argument("from_tensor: expected [3,H,W], got " + to_string(t.shape()));
  Image img(t.dim(2), t.dim(1));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

SegmentationMask::SegmentationMask(std::size_t w, std::size_t h, bool fill)
    : width(w), height(h), mutable_pixels(w * h, fill ? 1 : 0) {}

std::size_t SegmentationMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(mutable_pixels.begin(), mutable_pixels.end(), std::uint8_t{1}));
}

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PnmHeader {
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

// Parses "Px W H MAXVAL" with '#' comments and exactly one whitespace byte
// before the raster.
PnmHeader parse_pnm_header(const std::string& bytes, const char* magic, const fs::path& path) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
    throw std::runtime_error(path.string() + ": not a " + magic + " file (bad magic)");
  }
  std::size_t pos = 2;
  auto next_number = [&](const char* what) -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw std::runtime_error(path.string() + ": malformed header, missing " + what);
    }
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (v > (1u << 24)) throw std::runtime_error(path.string() + ": header value too large");
    }
    return v;
  };
  PnmHeader h;
  h.width = next_number("width");
  h.height = next_number("height");
  h.maxval = next_number("maxval");
  if (h.width == 0 || h.height == 0) throw std::runtime_error(path.string() + ": zero image dimension");
  if (h.maxval == 0) throw std::runtime_error(path.string() + ": maxval must be positive");
  if (h.maxval > 255) {
    throw std::runtime_error(path.string() + ": 16-bit maxval " + std::to_string(h.maxval) + " not supported");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw std::runtime_error(path.string() + ": malformed header");
  }
  h.data_offset = pos + 1;
  return h;
}

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Image read_ppm(const fs::path& path) {
  const std::string bytes = slurp(path);
  const PnmHeader h = parse_pnm_header(bytes, "P6", path);
  const std::size_t n = h.width * h.height * 3;
  if (bytes.size() - h.data_offset < n) throw std::runtime_error(path.string() + ": truncated raster");
  Image img(h.width, h.height);
  const float scale = 1.0f / static_cast<float>(h.maxval);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<unsigned char>(bytes[h.data_offset + i]);
    img.pixels[i] = std::min(1.0f, static_cast<float>(v) * scale);
  }
  return img;
}

void write_ppm(const Image& image, const fs::path& path) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) out.push_back(static_cast<char>(quantize(v)));
  write_file_atomic(path, out);
}

GrayImage read_pgm(const fs::path& path) {
  const std::string bytes = slurp(path);
  const PnmHeader h = parse_pnm_header(bytes, "P5", path);
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < n) throw std::runtime_error(path.string() + ": truncated raster");
  GrayImage g{h.width, h.height, std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<unsigned>(static_cast<unsigned char>(bytes[h.data_offset + i]));
    // Rescale to 8-bit when maxval < 255.
    g.values[i] = static_cast<std::uint8_t>(h.maxval == 255 ? v : (v * 255 + h.maxval / 2) / h.maxval);
  }
  return g;
}

void write_pgm(const GrayImage& image, const fs::path& path) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.values.begin(), image.values.end());
  write_file_atomic(path, out);
}

SegmentationMask load_mask(const fs::path& path) {
  const GrayImage g = read_pgm(path);
  SegmentationMask m(g.width, g.height, false);
  for (std::size_t i = 0; i < g.values.size(); ++i) m.mutable_pixels[i] = g.values[i] >= 128 ? 1 : 0;
  return m;
}

void write_mask(const SegmentationMask& mask, const fs::path& path) {
  GrayImage g{mask.width, mask.height, std::vector<std::uint8_t>(mask.mutable_pixels.size())};
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = mask.mutable_pixels[i] ? 255 : 0;
  write_pgm(g, path);
}

}  // namespace cogap
