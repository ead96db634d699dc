#include "cogap/search.hpp"

#include <algorithm>
#include <stdexcept>

namespace cogap {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::target_reached: return "target_reached";
    case StopReason::plateau: return "plateau";
    case StopReason::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

StopReason parse_stop_reason(const std::string& text) {
  if (text == "target_reached") return StopReason::target_reached;
  if (text == "plateau") return StopReason::plateau;
  if (text == "budget_exhausted") return StopReason::budget_exhausted;
  throw std::invalid_argument("unknown stop reason '" + text + "'");
}

namespace {

void check_inputs(const ModelWeights& model, const Image& image, const ChangeSpec& spec) {
  if (image.width != model.input_side || image.height != model.input_side) {
    throw std::invalid_argument("search: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                " does not match model input side " + std::to_string(model.input_side));
  }
  if (spec.mask.width != image.width || spec.mask.height != image.height) {
    throw std::invalid_argument("search: mask " + std::to_string(spec.mask.width) + "x" +
                                std::to_string(spec.mask.height) + " does not match image " +
                                std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  if (spec.target_class >= model.num_classes()) {
    throw std::invalid_argument("search: target class " + std::to_string(spec.target_class) + " out of range for " +
                                std::to_string(model.num_classes()) + " classes");
  }
  if (!(spec.step_epsilon > 0.0f)) throw std::invalid_argument("search: step_epsilon must be positive");
  if (spec.max_iterations == 0) throw std::invalid_argument("search: max_iterations must be positive");
  if (spec.plateau_window == 0) throw std::invalid_argument("search: plateau_window must be positive");
}

IterationRecord evaluate(const ModelWeights& model, const Image& image, std::size_t index, std::size_t target,
                         std::size_t original) {
  IterationRecord rec;
  rec.index = index;
  rec.image = image;
  const auto sce = softmax_cross_entropy(logits(model, image), target);
  rec.probs = sce.probs;
  rec.loss_to_target = sce.loss;
  rec.target_prob = sce.probs[target];
  rec.original_class_prob = sce.probs[original];
  return rec;
}

}  // namespace

Image fgsm_step(const ModelWeights& model, const Image& image, const ChangeSpec& spec) {
  check_inputs(model, image, spec);
  const Tensor x = to_tensor(image);
  const Tensor grad = input_gradient(model.layers, x, spec.target_class);

  Tensor raw(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (grad[i] > 0.0f) raw[i] = -spec.step_epsilon;
    else if (grad[i] < 0.0f) raw[i] = spec.step_epsilon;
  }
  const Tensor delta = apply_constraints(raw, spec);

  Tensor next = x;
  for (std::size_t i = 0; i < next.size(); ++i) {
    if (delta[i] != 0.0f) next[i] = std::clamp(next[i] + delta[i], 0.0f, 1.0f);
  }
  return from_tensor(next);
}

SearchTrace worst_case_search(const ModelWeights& model, const Image& image, const ChangeSpec& spec) {
  check_inputs(model, image, spec);
  SearchTrace trace;
  trace.target_class = spec.target_class;

  const Tensor p0 = predict(model, image);
  trace.original_class =
      static_cast<std::size_t>(std::max_element(p0.data().begin(), p0.data().end()) - p0.data().begin());
  trace.iterations.push_back(evaluate(model, image, 0, spec.target_class, trace.original_class));

  if (trace.iterations.back().target_prob >= spec.stop_target_prob) {
    trace.stop_reason = StopReason::target_reached;
    return trace;
  }

  Image current = image;
  for (std::size_t step = 1; step <= spec.max_iterations; ++step) {
    current = fgsm_step(model, current, spec);
    trace.iterations.push_back(evaluate(model, current, step, spec.target_class, trace.original_class));

    if (trace.iterations.back().target_prob >= spec.stop_target_prob) {
      trace.stop_reason = StopReason::target_reached;
      return trace;
    }
    if (step >= spec.plateau_window + 1) {
      const auto first = trace.iterations.end() - static_cast<std::ptrdiff_t>(spec.plateau_window + 1);
      const auto [lo, hi] = std::minmax_element(first, trace.iterations.end(), [](const auto& a, const auto& b) {
        return a.target_prob < b.target_prob;
      });
      if (hi->target_prob - lo->target_prob <= spec.plateau_delta) {
        trace.stop_reason = StopReason::plateau;
        return trace;
      }
    }
  }
  trace.stop_reason = StopReason::budget_exhausted;
  return trace;
}

const IterationRecord& select_worst(const SearchTrace& trace) {
  if (trace.iterations.empty()) throw std::invalid_argument("select_worst: empty trace");
  const IterationRecord* best = &trace.iterations.front();
  for (const auto& rec : trace.iterations) {
    if (rec.target_prob > best->target_prob ||
        (rec.target_prob == best->target_prob && rec.original_class_prob < best->original_class_prob)) {
      best = &rec;
    }
  }
  return *best;
}

}  // namespace cogap
