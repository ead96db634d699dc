#include "cogap/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "cogap/rng.hpp"

namespace cogap {

namespace fs = std::filesystem;

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Xorshift64Star& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace

std::vector<LayerParams> reference_layers(std::size_t num_classes, std::size_t input_side, std::uint64_t seed) {
  if (num_classes == 0) throw std::invalid_argument("reference_layers: need at least one class");
  if (input_side < 4) throw std::invalid_argument("reference_layers: input side must be at least 4");
  Xorshift64Star rng(seed);
  const std::size_t pooled = input_side / 2 / 2;
  const std::size_t flat = 16 * pooled * pooled;
  std::vector<LayerParams> layers;
  layers.push_back(LayerParams::conv(glorot({8, 3, 3, 3}, 3 * 9, 8 * 9, rng), Tensor({8}), 1, 1));
  layers.push_back(LayerParams::relu());
  layers.push_back(LayerParams::maxpool(2, 2));
  layers.push_back(LayerParams::conv(glorot({16, 8, 3, 3}, 8 * 9, 16 * 9, rng), Tensor({16}), 1, 1));
  layers.push_back(LayerParams::relu());
  layers.push_back(LayerParams::maxpool(2, 2));
  layers.push_back(LayerParams::flatten());
  layers.push_back(LayerParams::linear(glorot({64, flat}, flat, 64, rng), Tensor({64})));
  layers.push_back(LayerParams::relu());
  layers.push_back(LayerParams::linear(glorot({num_classes, 64}, 64, num_classes, rng), Tensor({num_classes})));
  return layers;
}

ModelWeights build_model(std::size_t num_classes, std::size_t input_side, std::uint64_t seed,
                         std::vector<std::string> class_names) {
  if (input_side < 16) throw std::invalid_argument("build_model: input side must be at least 16");
  if (class_names.empty()) {
    for (std::size_t k = 0; k < num_classes; ++k) class_names.push_back("class_" + std::to_string(k));
  }
  ModelWeights m{input_side, reference_layers(num_classes, input_side, seed), std::move(class_names)};
  m.check();
  return m;
}

std::size_t ModelWeights::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& L : layers) n += L.kernel.size() + L.bias.size();
  return n;
}

void ModelWeights::check() const {
  if (class_names.empty()) throw std::invalid_argument("model: no class names");
  std::set<std::string> seen;
  for (const auto& name : class_names) {
    if (name.empty()) throw std::invalid_argument("model: empty class name");
    if (!seen.insert(name).second) throw std::invalid_argument("model: duplicate class name '" + name + "'");
  }
  const auto shapes = validate_pipeline(layers, {3, input_side, input_side});
  if (shapes.back()[0] != class_names.size()) {
    throw std::invalid_argument("model: pipeline yields " + std::to_string(shapes.back()[0]) + " logits for " +
                                std::to_string(class_names.size()) + " class names");
  }
}

bool ModelWeights::bit_identical(const ModelWeights& other) const noexcept {
  if (input_side != other.input_side || class_names != other.class_names || layers.size() != other.layers.size()) {
    return false;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto &a = layers[i], &b = other.layers[i];
    if (a.kind != b.kind || a.stride != b.stride || a.padding != b.padding || a.pool_size != b.pool_size ||
        !a.kernel.bit_identical(b.kernel) || !a.bias.bit_identical(b.bias)) {
      return false;
    }
  }
  return true;
}

Tensor logits(const ModelWeights& model, const Image& image) {
  if (image.width != model.input_side || image.height != model.input_side) {
    throw std::invalid_argument("predict: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                " does not match model input " + std::to_string(model.input_side) + "x" +
                                std::to_string(model.input_side));
  }
  return forward(model.layers, to_tensor(image));
}

Tensor predict(const ModelWeights& model, const Image& image) { return softmax(logits(model, image)); }

ModelWeights train(ModelWeights model, const LabeledImageSet& dataset, const TrainConfig& cfg) {
  if (dataset.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (dataset.labels.size() != dataset.size()) throw std::invalid_argument("train: label count mismatch");
  if (cfg.epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (cfg.batch_size == 0 || cfg.batch_size > dataset.size()) {
    throw std::invalid_argument("train: batch size must lie in [1, dataset size]");
  }
  if (!(cfg.learning_rate >= 0.0f && cfg.learning_rate < 1.0f)) {
    throw std::invalid_argument("train: learning rate must lie in [0, 1)");
  }
  for (std::size_t label : dataset.labels) {
    if (label >= model.num_classes()) throw std::invalid_argument("train: label " + std::to_string(label) + " out of range");
  }
  model.check();

  std::vector<Tensor> inputs;
  inputs.reserve(dataset.size());
  for (const auto& img : dataset.images) {
    if (img.width != model.input_side || img.height != model.input_side) {
      throw std::invalid_argument("train: image size does not match model input");
    }
    inputs.push_back(to_tensor(img));
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Xorshift64Star rng(cfg.seed);

  std::vector<std::vector<double>> gk(model.layers.size()), gb(model.layers.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        gk[l].assign(model.layers[l].kernel.size(), 0.0);
        gb[l].assign(model.layers[l].bias.size(), 0.0);
      }
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t item = order[b];
        const auto bp = backprop(model.layers, inputs[item], dataset.labels[item], true);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
          const auto& pg = bp.params[l];
          for (std::size_t j = 0; j < pg.kernel.size(); ++j) gk[l][j] += pg.kernel[j];
          for (std::size_t j = 0; j < pg.bias.size(); ++j) gb[l][j] += pg.bias[j];
        }
      }
      const double step = static_cast<double>(cfg.learning_rate) / static_cast<double>(end - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& L = model.layers[l];
        for (std::size_t j = 0; j < L.kernel.size(); ++j) L.kernel[j] = static_cast<float>(L.kernel[j] - step * gk[l][j]);
        for (std::size_t j = 0; j < L.bias.size(); ++j) L.bias[j] = static_cast<float>(L.bias[j] - step * gb[l][j]);
      }
    }
  }
  return model;
}

double accuracy(const ModelWeights& model, const LabeledImageSet& dataset) {
  if (dataset.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor p = predict(model, dataset.images[i]);
    const auto best = static_cast<std::size_t>(std::max_element(p.data().begin(), p.data().end()) - p.data().begin());
    if (best == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// .wcgf layout, all integers little-endian:
//   "WCGF" | u32 version | u32 input_side | u32 layer_count
//   per layer: u8 kind | u32 stride | u32 padding | u32 pool_size
//              | u32 kernel_rank | u32 dims... | u32 bias_rank | u32 dims...
//              | f32 kernel payload | f32 bias payload
//   u32 class_count | per class: u32 byte_length | UTF-8 bytes
// ---------------------------------------------------------------------------

namespace {

using Kind = WeightFormatError::Kind;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

void put_shape(std::string& out, const Shape& shape) {
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw WeightFormatError(Kind::truncated, std::string("weight file truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Shape shape(const char* what) {
    const std::uint32_t rank = u32(what);
    if (rank > 8) throw WeightFormatError(Kind::shape_inconsistency, std::string("implausible rank for ") + what);
    Shape s(rank);
    for (auto& d : s) {
      d = u32(what);
      if (d == 0) throw WeightFormatError(Kind::shape_inconsistency, std::string("zero dimension in ") + what);
    }
    return s;
  }
  Tensor tensor(const Shape& shape, const char* what) {
    if (shape.empty()) return {};
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (n > (std::size_t{1} << 32) / d) throw WeightFormatError(Kind::shape_inconsistency, std::string("oversized ") + what);
      n *= d;
    }
    need(n * 4, what);
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(u32(what));
    return Tensor(shape, std::move(data));
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_weights(const ModelWeights& model) {
  model.check();
  std::string out = "WCGF";
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(model.input_side));
  put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& L : model.layers) {
    out.push_back(static_cast<char>(L.kind));
    put_u32(out, static_cast<std::uint32_t>(L.stride));
    put_u32(out, static_cast<std::uint32_t>(L.padding));
    put_u32(out, static_cast<std::uint32_t>(L.pool_size));
    put_shape(out, L.kernel.shape());
    put_shape(out, L.bias.shape());
    for (float v : L.kernel.data()) put_f32(out, v);
    for (float v : L.bias.data()) put_f32(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(model.class_names.size()));
  for (const auto& name : model.class_names) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  return out;
}

ModelWeights deserialize_weights(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "WCGF") {
    throw WeightFormatError(Kind::bad_magic, "weight file: bad magic (expected \"WCGF\")");
  }
  Reader r(bytes.substr(4));
  const std::uint32_t version = r.u32("version");
  if (version != kWeightFormatVersion) {
    throw WeightFormatError(Kind::version_mismatch, "weight file: version mismatch (file " + std::to_string(version) +
                                                        ", supported " + std::to_string(kWeightFormatVersion) + ")");
  }
  ModelWeights m;
  m.input_side = r.u32("input side");
  const std::uint32_t count = r.u32("layer count");
  if (count > 1024) throw WeightFormatError(Kind::shape_inconsistency, "weight file: implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerParams L;
    const std::uint8_t tag = r.u8("layer kind");
    if (tag < 1 || tag > 5) {
      throw WeightFormatError(Kind::shape_inconsistency, "weight file: unknown layer kind tag " + std::to_string(tag));
    }
    L.kind = static_cast<LayerKind>(tag);
    L.stride = r.u32("stride");
    L.padding = r.u32("padding");
    L.pool_size = r.u32("pool size");
    const Shape ks = r.shape("kernel shape");
    const Shape bs = r.shape("bias shape");
    L.kernel = r.tensor(ks, "kernel");
    L.bias = r.tensor(bs, "bias");
    m.layers.push_back(std::move(L));
  }
  const std::uint32_t classes = r.u32("class count");
  if (classes > 65536) throw WeightFormatError(Kind::shape_inconsistency, "weight file: implausible class count");
  for (std::uint32_t k = 0; k < classes; ++k) {
    const std::uint32_t len = r.u32("class name length");
    m.class_names.push_back(r.str(len, "class name"));
  }
  if (!r.at_end()) throw WeightFormatError(Kind::shape_inconsistency, "weight file: trailing bytes after class table");
  try {
    m.check();
  } catch (const std::invalid_argument& e) {
    throw WeightFormatError(Kind::shape_inconsistency, std::string("weight file: shape inconsistency: ") + e.what());
  }
  return m;
}

void save_weights(const ModelWeights& model, const fs::path& path) { write_file_atomic(path, serialize_weights(model)); }

ModelWeights load_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFormatError(Kind::io, "cannot open weight file " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_weights(bytes);
}

}  // namespace cogap
