#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cogap/image.hpp"

namespace cogap {

enum class DatasetMode { biased, balanced };

std::string to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(const std::string& text);

inline constexpr std::size_t kVehicleClass = 0;
inline constexpr std::size_t kSignClass = 1;

/// Class names in label order.
std::vector<std::string> glyph_class_names();

/// Two-class glyph images: vehicle (rounded body over two wheels) and sign
/// (octagon on a pole). `masks[i]` marks the colored body pixels of image i.
struct LabeledImageSet {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<SegmentationMask> masks;
  DatasetMode mode = DatasetMode::balanced;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return images.size(); }
  /// Items [begin, end) as a new set with the same mode and seed.
  LabeledImageSet slice(std::size_t begin, std::size_t end) const;
};

/// Deterministic synthetic set. Labels alternate 0, 1, 0, 1 ... so each class
/// gets exactly n/2 items; every image draws its randomness from an
/// independent (seed, index) stream.
///
/// In biased mode vehicles are painted from the red band and signs from the
/// blue band; in balanced mode both classes pick either band with equal odds.
LabeledImageSet generate_dataset(std::size_t n, DatasetMode mode, std::size_t input_side, std::uint64_t seed);

/// Body-pixel mask of image `index`.
const SegmentationMask& glyph_mask(std::size_t index, const LabeledImageSet& dataset);

/// Writes img_NNNNN.ppm, img_NNNNN.mask.pgm, labels.csv (filename,label) and
/// dataset.json (mode, seed, side, n) into `dir`.
void write_dataset(const LabeledImageSet& dataset, const std::filesystem::path& dir);

/// Reads a directory written by write_dataset. Masks are loaded when present.
LabeledImageSet read_dataset(const std::filesystem::path& dir);

}  // namespace cogap
