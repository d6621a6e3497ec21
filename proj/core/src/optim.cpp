// SPDX-License-Identifier: Apache-2.0
#include "gpcn/optim.hpp"

#include <cmath>

namespace gpcn {

AdamState AdamState::for_params(const std::vector<Tensor>& params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const auto& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    s.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ValidationError("adam_step: state was built for a different parameter list");
  }
  const auto& o = state.options;
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != data.size() || v.size() != data.size()) {
      throw ValidationError("adam_step: moment buffer shape mismatch for parameter " + std::to_string(k));
    }
    const auto g = params[k].grad();
    const bool has = params[k].has_grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace gpcn
