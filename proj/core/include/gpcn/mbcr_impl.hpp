// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gpcn/ops.hpp"
#include "gpcn/transforms.hpp"

namespace gpcn {

namespace mbcr_detail {

/// Stacks the four subbands on the batch axis, refines, splits back.
template <typename Refine>
SubbandSet refine_batched(const SubbandSet& s, Refine& refine) {
  const std::int64_t n = s.ll.dim(0);
  const Tensor joined = ops::concat({s.ll, s.lh, s.hl, s.hh}, 0);
  const Tensor out = refine(joined);
  return {ops::slice(out, 0, 0, n), ops::slice(out, 0, n, n), ops::slice(out, 0, 2 * n, n),
          ops::slice(out, 0, 3 * n, n)};
}

}  // namespace mbcr_detail

template <typename Refine>
Tensor mbcr_pyramid(const Tensor& r, Refine&& refine, MbcrTrace* trace) {
  if (r.ndim() != 4) throw ValidationError("mbcr: input must be [N,C,H,W]");
  if (r.dim(2) % 4 != 0 || r.dim(3) % 4 != 0) {
    throw ValidationError("mbcr: spatial extents " + std::to_string(r.dim(2)) + "x" + std::to_string(r.dim(3)) +
                          " must be divisible by 4; use pad_to_multiple");
  }
  const SubbandSet level1 = dwt2(r);
  const SubbandSet level2 = dwt2(level1.ll);
  const SubbandSet refined1 = mbcr_detail::refine_batched(level1, refine);
  const SubbandSet refined2 = mbcr_detail::refine_batched(level2, refine);
  const Tensor ll1 = ops::add(idwt2(refined2), refined1.ll);
  const Tensor out = ops::add(idwt2({ll1, refined1.lh, refined1.hl, refined1.hh}), r);
  if (trace) {
    trace->entry = r;
    trace->level1 = level1;
    trace->level2 = level2;
    trace->refined1 = refined1;
    trace->refined2 = refined2;
  }
  return out;
}

}  // namespace gpcn
