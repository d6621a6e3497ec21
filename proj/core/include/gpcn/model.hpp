// SPDX-License-Identifier: Apache-2.0
//
// The full correction network: shallow embedding, T cascaded stages that each
// add an MBCR correction and a FASD correction to the running image estimate,
// and the dual-domain L1 loss.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gpcn/fasd.hpp"
#include "gpcn/mbcr.hpp"
#include "gpcn/optim.hpp"
#include "gpcn/tensor.hpp"

namespace gpcn {

struct ModelConfig {
  int stages = 3;
  std::int64_t channels = 16;
  std::int64_t state_dim = 16;
  double expansion = 2.0;
  int wavelet_levels = 2;
  double lambda_freq = 1.0;
  std::int64_t fasd_hidden = 16;
  bool enable_mbcr = true;
  bool enable_fasd = true;
  std::uint64_t seed = 0;

  /// Throws ValidationError when an invariant is violated.
  void validate() const;
};

enum class Ablation { kFull, kWithoutMbcr, kWithoutFasd };

std::string ablation_name(Ablation which);
/// Flips the matching enable flag; everything else is copied unchanged.
ModelConfig ablation_variant(const ModelConfig& config, Ablation which);

struct StageParams {
  MbcrBlockParams mbcr;  // present when enable_mbcr
  FasdBlockParams fasd;  // present when enable_fasd
  Tensor fuse_w, fuse_b;      // [1,C,3,3] feature -> image increment, zero-initialized
  Tensor update_w, update_b;  // [C,1,3,3] image increment -> feature update
};

struct GpcnParams {
  ModelConfig config;
  Tensor embed_w, embed_b;  // [C,1,3,3]
  std::vector<StageParams> stages;
  Tensor final_w, final_b;  // [1,C,3,3], zero-initialized

  /// Deterministic in config.seed. Correction projections start at zero so
  /// the network is an exact identity map at initialization.
  static GpcnParams init(const ModelConfig& config);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::int64_t parameter_count() const;
};

/// nasc: [N,1,H,W] with H, W powers of two >= 16.
Tensor gpcn_forward(const Tensor& nasc, const GpcnParams& params, std::vector<FasdTrace>* fasd_traces = nullptr);

struct LossBreakdown {
  double l_img = 0.0;
  double l_freq = 0.0;
  double l_total = 0.0;
};

struct LossTensors {
  Tensor l_img, l_freq, l_total;
  LossBreakdown values() const { return {l_img.item(), l_freq.item(), l_total.item()}; }
};

/// l_img = mean|pred - target|; l_freq = mean over bins of |d re| + |d im| of
/// the unnormalized spectra; l_total = l_img + lambda * l_freq.
LossTensors loss(const Tensor& pred, const Tensor& target, double lambda);

/// Forward, loss, backward, Adam update. Returns the loss before the update.
LossBreakdown train_step(const Tensor& nasc, const Tensor& asc, GpcnParams& params, AdamState& adam);

}  // namespace gpcn
