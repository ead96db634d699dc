#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cogap {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major float32 tensor.
///
/// A default-constructed tensor is empty (no shape, no data); parameterless
/// layers carry empty kernel/bias tensors. A non-empty tensor always holds
/// exactly product(shape) elements, each dimension positive.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t i) const noexcept { return data_[i]; }
  float& operator[](std::size_t i) noexcept { return data_[i]; }

  /// Element of a rank-3 tensor.
  float at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  /// Bitwise equality of shape and payload (distinguishes -0.0 and NaN payloads).
  bool bit_identical(const Tensor& other) const noexcept;

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

enum class LayerKind : std::uint8_t { conv2d = 1, relu = 2, maxpool2d = 3, flatten = 4, linear = 5 };

std::string to_string(LayerKind kind);

/// One stage of the classifier pipeline. Only conv2d and linear carry
/// parameters; stride applies to conv2d and maxpool2d.
struct LayerParams {
  LayerKind kind = LayerKind::relu;
  Tensor kernel;  // conv: out x in x kh x kw; linear: out x in
  Tensor bias;    // conv: out; linear: out
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t pool_size = 1;

  static LayerParams conv(Tensor kernel, Tensor bias, std::size_t stride = 1, std::size_t padding = 0);
  static LayerParams relu();
  static LayerParams maxpool(std::size_t pool_size, std::size_t stride);
  static LayerParams flatten();
  static LayerParams linear(Tensor weights, Tensor bias);

  bool has_parameters() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::linear; }
  /// Throws std::invalid_argument if kernel/bias/hyperparameters disagree with kind.
  void check() const;
};

// Forward operators. All throw std::invalid_argument on shape mismatch and
// std::domain_error if a non-finite value is produced.

Tensor conv2d(const Tensor& input, const LayerParams& params);
Tensor relu(const Tensor& input);
Tensor maxpool2d(const Tensor& input, std::size_t pool_size, std::size_t stride);
Tensor flatten(const Tensor& input);
Tensor linear(const Tensor& input, const LayerParams& params);

Tensor softmax(const Tensor& logits);

struct SoftmaxCrossEntropy {
  float loss = 0.0f;
  Tensor probs;
};

/// Cross-entropy of softmax(logits) against `label`, max-subtracted.
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// Output shape of every layer for the given input; throws naming the
/// first offending layer index.
std::vector<Shape> validate_pipeline(std::span<const LayerParams> layers, const Shape& input_shape);

/// Logits of the pipeline.
Tensor forward(std::span<const LayerParams> layers, const Tensor& input);

/// Exact gradient of softmax cross-entropy w.r.t. the input image.
Tensor input_gradient(std::span<const LayerParams> layers, const Tensor& image, std::size_t label);

/// Per-layer parameter gradients; empty tensors for parameterless layers.
struct ParamGradient {
  Tensor kernel;
  Tensor bias;
};

struct Backprop {
  float loss = 0.0f;
  Tensor probs;
  Tensor input_grad;
  std::vector<ParamGradient> params;  // filled only when requested
};

/// Full reverse pass. Parameter gradients are meant for training code; the
/// search only needs `input_grad`.
Backprop backprop(std::span<const LayerParams> layers, const Tensor& input, std::size_t label,
                  bool want_param_grads);

}  // namespace cogap
