#pragma once

#include "gcnnlp/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gcnnlp::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment per parameter plus the number of steps taken.
struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<Parameter* const> params);

/// One bias-corrected Adam update of every parameter from its grad.
/// Throws ShapeError when the state does not match the parameters.
void adam_step(std::span<Parameter* const> params, AdamState& state, double learning_rate,
               const AdamConfig& config = {});

}  // namespace gcnnlp::ad
