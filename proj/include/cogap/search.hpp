#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cogap/change_spec.hpp"
#include "cogap/image.hpp"
#include "cogap/model.hpp"

namespace cogap {

enum class StopReason { target_reached, plateau, budget_exhausted };

std::string to_string(StopReason reason);
StopReason parse_stop_reason(const std::string& text);

struct IterationRecord {
  std::size_t index = 0;
  Image image;
  Tensor probs;
  float loss_to_target = 0.0f;
  float target_prob = 0.0f;
  float original_class_prob = 0.0f;
};

/// Record 0 is the unmodified image; record i the image after i steps.
struct SearchTrace {
  std::vector<IterationRecord> iterations;
  StopReason stop_reason = StopReason::budget_exhausted;
  std::size_t target_class = 0;
  std::size_t original_class = 0;  // argmax of the record-0 probabilities
};

/// One targeted sign-gradient step: descend the target-class loss by
/// step_epsilon per coordinate, project onto the allowed coordinates, clamp
/// to [0, 1].
Image fgsm_step(const ModelWeights& model, const Image& image, const ChangeSpec& spec);

/// Iterated fgsm_step with target/plateau/budget stopping. Steps accumulate;
/// there is no projection back toward the original image.
///
/// Plateau: after step i >= plateau_window + 1, stop when the target
/// probability of the last plateau_window + 1 post-initial records spans at
/// most plateau_delta. Target reached is checked first.
SearchTrace worst_case_search(const ModelWeights& model, const Image& image, const ChangeSpec& spec);

/// Highest target probability; ties go to the lower original-class
/// probability, then the lower index.
const IterationRecord& select_worst(const SearchTrace& trace);

}  // namespace cogap
