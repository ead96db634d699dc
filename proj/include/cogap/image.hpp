#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "cogap/tensor.hpp"

namespace cogap {

/// RGB float image, interleaved H x W x 3, components in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t width, std::size_t height, float fill = 0.0f);

  float at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return pixels[(y * width + x) * 3 + c]; }
  float& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return pixels[(y * width + x) * 3 + c]; }

  bool in_unit_range() const noexcept;
  bool bit_identical(const Image& other) const noexcept;
};

/// Planar [3, H, W] view of an image, the layout the classifier consumes.
Tensor to_tensor(const Image& image);
/// Inverse of to_tensor. Requires shape [3, H, W].
Image from_tensor(const Tensor& t);

/// Per-pixel mutability map.
struct SegmentationMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> mutable_pixels;  // 0 or 1, row-major

  SegmentationMask() = default;
  SegmentationMask(std::size_t width, std::size_t height, bool fill);

  bool at(std::size_t y, std::size_t x) const noexcept { return mutable_pixels[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v) noexcept { mutable_pixels[y * width + x] = v ? 1 : 0; }
  std::size_t count() const noexcept;

  bool operator==(const SegmentationMask&) const = default;
};

/// Binary PPM (P6). Values are rounded to the nearest of 256 levels on write.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

/// 8-bit grayscale plane of a binary PGM (P5).
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> values;
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

/// Mask from a P5 file: value >= 128 means mutable.
SegmentationMask load_mask(const std::filesystem::path& path);
/// Writes true as 255 and false as 0.
void write_mask(const SegmentationMask& mask, const std::filesystem::path& path);

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace cogap
