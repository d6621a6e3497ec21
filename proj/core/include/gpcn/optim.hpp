// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "gpcn/tensor.hpp"

namespace gpcn {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers are laid out parallel to the parameter list they were
/// created for.
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const std::vector<Tensor>& params, AdamOptions options = {});
};

/// Bias-corrected Adam update applied in place to each parameter's data.
/// Parameters without a gradient are treated as having a zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state);

void zero_grads(std::vector<Tensor>& params);

}  // namespace gpcn
