#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "taper/numerics/parameter.hpp"

namespace taper {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const ParameterRefs& params);
};

/// One bias-corrected Adam update using the gradients currently stored in
/// `params`.
void adam_step(const ParameterRefs& params, AdamState& state, double lr);

struct CosineAnnealing {
  int period = 50;
  double lr0 = 2.5e-4;
  double lr_min = 0.0;
};

struct StepDecay {
  double lr0 = 1e-3;
  double factor = 0.1;
  int every = 50;
};

using LrSchedule = std::variant<CosineAnnealing, StepDecay>;

/// Learning rate for a 0-based epoch. Cosine restarts every `period` epochs.
double lr_at(const LrSchedule& schedule, int epoch);

}  // namespace taper
