#include "cogap/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cogap {

namespace {

std::size_t product(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw std::domain_error(std::string(op) + ": produced a non-finite value");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                                to_string(t.shape()));
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

struct PoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

PoolResult maxpool_with_argmax(const Tensor& input, std::size_t pool, std::size_t stride) {
  require_rank(input, 3, "maxpool2d");
  if (pool == 0 || stride == 0) throw std::invalid_argument("maxpool2d: pool size and stride must be positive");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < pool || w < pool) {
    throw std::invalid_argument("maxpool2d: input " + to_string(input.shape()) + " smaller than pool " +
                                std::to_string(pool));
  }
  const std::size_t oh = (h - pool) / stride + 1, ow = (w - pool) / stride + 1;
  PoolResult r{Tensor({c, oh, ow}), std::vector<std::size_t>(c * oh * ow)};
  const auto in = input.data();
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = (ch * h + y * stride) * w + x * stride;
        for (std::size_t ky = 0; ky < pool; ++ky) {
          for (std::size_t kx = 0; kx < pool; ++kx) {
            const std::size_t idx = (ch * h + y * stride + ky) * w + x * stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        r.out[o] = in[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
  }
  return "unknown";
}

Tensor::Tensor(Shape shape) : Tensor(shape, std::vector<float>(product(shape), 0.0f)) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t d) { return d == 0; })) {
    throw std::invalid_argument("tensor: zero-sized dimension in shape " + to_string(shape_));
  }
  if (product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape " + to_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::bit_identical(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

LayerParams LayerParams::conv(Tensor kernel, Tensor bias, std::size_t stride, std::size_t padding) {
  LayerParams p;
  p.kind = LayerKind::conv2d;
  p.kernel = std::move(kernel);
  p.bias = std::move(bias);
  p.stride = stride;
  p.padding = padding;
  p.check();
  return p;
}

LayerParams LayerParams::relu() { return LayerParams{}; }

LayerParams LayerParams::maxpool(std::size_t pool_size, std::size_t stride) {
  LayerParams p;
  p.kind = LayerKind::maxpool2d;
  p.pool_size = pool_size;
  p.stride = stride;
  p.check();
  return p;
}

LayerParams LayerParams::flatten() {
  LayerParams p;
  p.kind = LayerKind::flatten;
  return p;
}

LayerParams LayerParams::linear(Tensor weights, Tensor bias) {
  LayerParams p;
  p.kind = LayerKind::linear;
  p.kernel = std::move(weights);
  p.bias = std::move(bias);
  p.check();
  return p;
}

void LayerParams::check() const {
  const std::string name = to_string(kind);
  if (stride == 0) throw std::invalid_argument(name + ": stride must be positive");
  switch (kind) {
    case LayerKind::conv2d:
      if (kernel.rank() != 4 || bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
        throw std::invalid_argument("conv2d: kernel " + to_string(kernel.shape()) + " inconsistent with bias " +
                                    to_string(bias.shape()));
      }
      return;
    case LayerKind::linear:
      if (kernel.rank() != 2 || bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
        throw std::invalid_argument("linear: weights " + to_string(kernel.shape()) + " inconsistent with bias " +
                                    to_string(bias.shape()));
      }
      return;
    case LayerKind::maxpool2d:
      if (pool_size == 0) throw std::invalid_argument("maxpool2d: pool size must be positive");
      [[fallthrough]];
    case LayerKind::relu:
    case LayerKind::flatten:
      if (!kernel.empty() || !bias.empty()) throw std::invalid_argument(name + ": layer carries no parameters");
      return;
  }
  throw std::invalid_argument("unknown layer kind");
}

Tensor conv2d(const Tensor& input, const LayerParams& params) {
  params.check();
  if (params.kind != LayerKind::conv2d) throw std::invalid_argument("conv2d: layer is " + to_string(params.kind));
  require_rank(input, 3, "conv2d");
  const auto& k = params.kernel;
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t s = params.stride, pad = params.padding;
  if (k.dim(1) != cin) {
    throw std::invalid_argument("conv2d: input " + to_string(input.shape()) + " incompatible with kernel " +
                                to_string(k.shape()));
  }
  if (h + 2 * pad < kh || w + 2 * pad < kw) {
    throw std::invalid_argument("conv2d: input " + to_string(input.shape()) + " too small for kernel " +
                                to_string(k.shape()));
  }
  const std::size_t oh = conv_out_extent(h, kh, s, pad), ow = conv_out_extent(w, kw, s, pad);
  Tensor out({cout, oh, ow});
  const auto in = input.data();
  const auto wt = k.data();
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = params.bias[o];
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const float* row = &in[(c * h + static_cast<std::size_t>(iy)) * w];
            const float* krow = &wt[((o * cin + c) * kh + ky) * kw];
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += static_cast<double>(row[ix]) * krow[kx];
            }
          }
        }
        out.at(o, y, x) = static_cast<float>(acc);
      }
    }
  }
  ensure_finite(out, "conv2d");
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor maxpool2d(const Tensor& input, std::size_t pool_size, std::size_t stride) {
  return maxpool_with_argmax(input, pool_size, stride).out;
}

Tensor flatten(const Tensor& input) {
  if (input.empty()) throw std::invalid_argument("flatten: empty input");
  return input.reshaped({input.size()});
}

Tensor linear(const Tensor& input, const LayerParams& params) {
  params.check();
  if (params.kind != LayerKind::linear) throw std::invalid_argument("linear: layer is " + to_string(params.kind));
  require_rank(input, 1, "linear");
  const std::size_t m = params.kernel.dim(0), n = params.kernel.dim(1);
  if (input.dim(0) != n) {
    throw std::invalid_argument("linear: input " + to_string(input.shape()) + " incompatible with weights " +
                                to_string(params.kernel.shape()));
  }
  Tensor out({m});
  const auto x = input.data();
  const auto wt = params.kernel.data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = params.bias[i];
    const float* row = &wt[i * n];
    for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * x[j];
    out[i] = static_cast<float>(acc);
  }
  ensure_finite(out, "linear");
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax");
  const auto l = logits.data();
  const float m = *std::max_element(l.begin(), l.end());
  std::vector<double> e(l.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    e[i] = std::exp(static_cast<double>(l[i]) - m);
    sum += e[i];
  }
  Tensor probs({l.size()});
  for (std::size_t i = 0; i < l.size(); ++i) probs[i] = static_cast<float>(e[i] / sum);
  ensure_finite(probs, "softmax");
  return probs;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank(logits, 1, "softmax_cross_entropy");
  if (label >= logits.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(logits.size()) + " classes");
  }
  const auto l = logits.data();
  const double m = *std::max_element(l.begin(), l.end());
  double sum = 0.0;
  for (float v : l) sum += std::exp(v - m);
  SoftmaxCrossEntropy r;
  r.loss = static_cast<float>(std::log(sum) - (l[label] - m));
  r.probs = softmax(logits);
  if (!std::isfinite(r.loss)) throw std::domain_error("softmax_cross_entropy: non-finite loss");
  return r;
}

std::vector<Shape> validate_pipeline(std::span<const LayerParams> layers, const Shape& input_shape) {
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("layer " + std::to_string(i) + " (" + to_string(L.kind) + "): " + why);
    };
    try {
      L.check();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    switch (L.kind) {
      case LayerKind::conv2d: {
        const auto& k = L.kernel.shape();
        if (cur.size() != 3 || cur[0] != k[1]) fail("input " + to_string(cur) + " incompatible with kernel " + to_string(k));
        if (cur[1] + 2 * L.padding < k[2] || cur[2] + 2 * L.padding < k[3]) fail("input " + to_string(cur) + " too small");
        cur = {k[0], conv_out_extent(cur[1], k[2], L.stride, L.padding), conv_out_extent(cur[2], k[3], L.stride, L.padding)};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::maxpool2d:
        if (cur.size() != 3 || cur[1] < L.pool_size || cur[2] < L.pool_size) fail("input " + to_string(cur) + " too small for pool");
        cur = {cur[0], (cur[1] - L.pool_size) / L.stride + 1, (cur[2] - L.pool_size) / L.stride + 1};
        break;
      case LayerKind::flatten:
        cur = {product(cur)};
        break;
      case LayerKind::linear:
        if (cur.size() != 1 || cur[0] != L.kernel.dim(1)) fail("input " + to_string(cur) + " incompatible with weights " + to_string(L.kernel.shape()));
        cur = {L.kernel.dim(0)};
        break;
    }
    shapes.push_back(cur);
  }
  if (cur.size() != 1) throw std::invalid_argument("pipeline ends in " + to_string(cur) + ", expected a logit vector");
  return shapes;
}

namespace {

Tensor apply_layer(const LayerParams& L, const Tensor& x, std::vector<std::size_t>* argmax) {
  switch (L.kind) {
    case LayerKind::conv2d: return conv2d(x, L);
    case LayerKind::relu: return relu(x);
    case LayerKind::flatten: return flatten(x);
    case LayerKind::linear: return linear(x, L);
    case LayerKind::maxpool2d: {
      auto r = maxpool_with_argmax(x, L.pool_size, L.stride);
      if (argmax) *argmax = std::move(r.argmax);
      return std::move(r.out);
    }
  }
  throw std::invalid_argument("unknown layer kind");
}

// Reverse of conv2d. Accumulates parameter gradients into `pg` when non-null.
Tensor conv2d_backward(const LayerParams& L, const Tensor& input, const Tensor& grad_out, ParamGradient* pg) {
  const auto& k = L.kernel;
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = grad_out.dim(1), ow = grad_out.dim(2);
  const std::size_t s = L.stride;
  const auto pad = static_cast<std::ptrdiff_t>(L.padding);
  const auto in = input.data();
  const auto wt = k.data();
  const auto go = grad_out.data();

  std::vector<double> din(input.size(), 0.0);
  std::vector<double> dw(pg ? k.size() : 0, 0.0);
  std::vector<double> db(pg ? cout : 0, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double g = go[(o * oh + y) * ow + x];
        if (pg) db[o] += g;
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const std::size_t row = (c * h + static_cast<std::size_t>(iy)) * w;
            const std::size_t krow = ((o * cin + c) * kh + ky) * kw;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              din[row + static_cast<std::size_t>(ix)] += g * wt[krow + kx];
              if (pg) dw[krow + kx] += g * in[row + static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
  if (pg) {
    pg->kernel = Tensor(k.shape(), std::vector<float>(dw.begin(), dw.end()));
    pg->bias = Tensor({cout}, std::vector<float>(db.begin(), db.end()));
  }
  return Tensor(input.shape(), std::vector<float>(din.begin(), din.end()));
}

Tensor linear_backward(const LayerParams& L, const Tensor& input, const Tensor& grad_out, ParamGradient* pg) {
  const std::size_t m = L.kernel.dim(0), n = L.kernel.dim(1);
  const auto wt = L.kernel.data();
  const auto x = input.data();
  std::vector<double> din(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double g = grad_out[i];
    if (g == 0.0) continue;
    const float* row = &wt[i * n];
    for (std::size_t j = 0; j < n; ++j) din[j] += g * row[j];
  }
  if (pg) {
    Tensor dw({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      const double g = grad_out[i];
      for (std::size_t j = 0; j < n; ++j) dw[i * n + j] = static_cast<float>(g * x[j]);
    }
    pg->kernel = std::move(dw);
    pg->bias = grad_out;
  }
  return Tensor({n}, std::vector<float>(din.begin(), din.end()));
}

}  // namespace

Tensor forward(std::span<const LayerParams> layers, const Tensor& input) {
  validate_pipeline(layers, input.shape());
  Tensor x = input;
  for (const auto& L : layers) x = apply_layer(L, x, nullptr);
  return x;
}

Backprop backprop(std::span<const LayerParams> layers, const Tensor& input, std::size_t label,
                  bool want_param_grads) {
  validate_pipeline(layers, input.shape());
  // acts[i] is the input of layer i; acts.back() the logits.
  std::vector<Tensor> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(input);
  std::vector<std::vector<std::size_t>> argmax(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) acts.push_back(apply_layer(layers[i], acts[i], &argmax[i]));

  auto sce = softmax_cross_entropy(acts.back(), label);
  Backprop r;
  r.loss = sce.loss;
  r.probs = sce.probs;
  if (want_param_grads) r.params.resize(layers.size());

  // dJ/dlogits = probs - onehot(label)
  Tensor grad = sce.probs;
  grad[label] -= 1.0f;

  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& L = layers[i];
    const Tensor& in = acts[i];
    ParamGradient* pg = want_param_grads ? &r.params[i] : nullptr;
    switch (L.kind) {
      case LayerKind::conv2d:
        grad = conv2d_backward(L, in, grad, pg);
        break;
      case LayerKind::linear:
        grad = linear_backward(L, in, grad, pg);
        break;
      case LayerKind::relu:
        for (std::size_t j = 0; j < grad.size(); ++j) {
          if (!(in[j] > 0.0f)) grad[j] = 0.0f;
        }
        break;
      case LayerKind::flatten:
        grad = grad.reshaped(in.shape());
        break;
      case LayerKind::maxpool2d: {
        Tensor g(in.shape());
        for (std::size_t j = 0; j < grad.size(); ++j) g[argmax[i][j]] += grad[j];
        grad = std::move(g);
        break;
      }
    }
  }
  ensure_finite(grad, "backprop");
  r.input_grad = std::move(grad);
  return r;
}

Tensor input_gradient(std::span<const LayerParams> layers, const Tensor& image, std::size_t label) {
  return backprop(layers, image, label, false).input_grad;
}

}  // namespace cogap
