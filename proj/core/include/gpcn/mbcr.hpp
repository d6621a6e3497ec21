// SPDX-License-Identifier: Apache-2.0
//
// Multi-band contextual refinement: entry conv, two Haar levels, one shared
// VSS block over all eight subbands, progressive inverse merge plus residual.
#pragma once

#include <utility>

#include "gpcn/rng.hpp"
#include "gpcn/ssm.hpp"
#include "gpcn/transforms.hpp"
#include "gpcn/tensor.hpp"

namespace gpcn {

struct MbcrBlockParams {
  std::int64_t channels = 0;
  Tensor entry_weight, entry_bias;  // [C,C,3,3], [C]
  VssBlockParams vss;               // shared by all subbands of both levels

  static MbcrBlockParams init(std::int64_t channels, std::int64_t state_dim, double expansion, Rng& rng);
  std::vector<Tensor> parameters() const;
};

/// Intermediate maps of one forward pass, exposed for structural tests.
struct MbcrTrace {
  Tensor entry;                 // R
  SubbandSet level1, level2;    // raw subbands
  SubbandSet refined1, refined2;
};

/// H and W must be divisible by 4.
Tensor mbcr_forward(const Tensor& x, const MbcrBlockParams& params, MbcrTrace* trace = nullptr);

/// Applies `refine` to all eight subbands, then merges:
///   LL1'' = IWT(level-2 refined) + LL1',   out = IWT(LL1'', LH1', HL1', HH1') + R
/// The refinement runs on the four level-1 subbands batched together, then
/// the four level-2 subbands batched together.
template <typename Refine>
Tensor mbcr_pyramid(const Tensor& r, Refine&& refine, MbcrTrace* trace = nullptr);

struct PaddedTensor {
  Tensor value;
  std::int64_t height = 0;
  std::int64_t width = 0;
};

/// Reflect-pads the spatial axes up to the next multiple of `multiple`.
PaddedTensor pad_to_multiple(const Tensor& x, std::int64_t multiple = 4);
/// Restores the extents recorded by pad_to_multiple.
Tensor crop_back(const PaddedTensor& padded);
Tensor crop_back(const Tensor& x, std::int64_t height, std::int64_t width);

}  // namespace gpcn

#include "gpcn/mbcr_impl.hpp"
