#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogap/dataset.hpp"
#include "cogap/image.hpp"
#include "cogap/tensor.hpp"

namespace cogap {

/// Classifier parameters plus the metadata needed to run them.
struct ModelWeights {
  std::size_t input_side = 0;
  std::vector<LayerParams> layers;
  std::vector<std::string> class_names;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t parameter_count() const noexcept;
  /// Throws std::invalid_argument if layers, input size and class names disagree.
  void check() const;
  bool bit_identical(const ModelWeights& other) const noexcept;
};

struct TrainConfig {
  std::size_t epochs = 10;
  float learning_rate = 0.05f;
  std::size_t batch_size = 16;
  std::uint64_t seed = 7;
};

/// conv(8,3x3,pad 1) relu pool2 conv(16,3x3,pad 1) relu pool2 flatten
/// linear(64) relu linear(num_classes), Glorot-uniform kernels, zero biases.
/// No lower bound on `input_side` beyond what the pools need.
std::vector<LayerParams> reference_layers(std::size_t num_classes, std::size_t input_side, std::uint64_t seed);

/// Reference model for `input_side` >= 16. Class names default to class_0..class_{K-1}.
ModelWeights build_model(std::size_t num_classes, std::size_t input_side, std::uint64_t seed,
                         std::vector<std::string> class_names = {});

Tensor logits(const ModelWeights& model, const Image& image);
Tensor predict(const ModelWeights& model, const Image& image);

/// Deterministic minibatch SGD on softmax cross-entropy. The per-epoch
/// shuffle is a Fisher-Yates pass driven by the config seed.
ModelWeights train(ModelWeights model, const LabeledImageSet& dataset, const TrainConfig& cfg);

/// Fraction of items whose argmax prediction equals the label.
double accuracy(const ModelWeights& model, const LabeledImageSet& dataset);

/// Errors raised while reading a `.wcgf` weight file.
class WeightFormatError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, shape_inconsistency };

  WeightFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::string serialize_weights(const ModelWeights& model);
ModelWeights deserialize_weights(std::string_view bytes);

void save_weights(const ModelWeights& model, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

}  // namespace cogap
