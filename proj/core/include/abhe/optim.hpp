#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "abhe/tensor.hpp"

namespace abhe {

struct AdamOptions {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First/second moment estimates, one buffer per parameter, plus the step count.
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  /// Zeroed moments matching `params`.
  static AdamState for_params(std::span<const Tensor> params);
};

/// One bias-corrected Adam update in place on each parameter's data. A
/// parameter without a gradient is treated as having a zero gradient.
/// Throws ShapeError if the state does not match the parameter list.
void adam_step(std::span<Tensor> params, AdamState& state, float lr, const AdamOptions& options = {});

}  // namespace abhe
