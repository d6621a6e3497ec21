// SPDX-License-Identifier: Apache-2.0
#include "gpcn/mbcr.hpp"

namespace gpcn {

MbcrBlockParams MbcrBlockParams::init(std::int64_t channels, std::int64_t state_dim, double expansion, Rng& rng) {
  MbcrBlockParams p;
  p.channels = channels;
  p.entry_weight = init::kaiming_uniform({channels, channels, 3, 3}, channels * 9, rng);
  p.entry_bias = init::constant({channels}, 0.0);
  p.vss = VssBlockParams::init(channels, state_dim, expansion, rng);
  return p;
}

std::vector<Tensor> MbcrBlockParams::parameters() const {
  std::vector<Tensor> out = {entry_weight, entry_bias};
  const auto v = vss.parameters();
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

Tensor mbcr_forward(const Tensor& x, const MbcrBlockParams& params, MbcrTrace* trace) {
  if (x.ndim() != 4) throw ValidationError("mbcr_forward: input must be [N,C,H,W], got " + shape_str(x.shape()));
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw ValidationError("mbcr_forward: spatial extents " + std::to_string(x.dim(2)) + "x" +
                          std::to_string(x.dim(3)) + " must be divisible by 4; use pad_to_multiple");
  }
  const Tensor r = ops::conv2d(x, params.entry_weight, params.entry_bias, 1);
  return mbcr_pyramid(r, [&params](const Tensor& t) { return rvmb(t, params.vss); }, trace);
}

PaddedTensor pad_to_multiple(const Tensor& x, std::int64_t multiple) {
  if (multiple < 1) throw ValidationError("pad_to_multiple: multiple must be >= 1");
  if (x.ndim() < 2) throw ValidationError("pad_to_multiple: need spatial axes");
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  const std::int64_t ph = (multiple - h % multiple) % multiple;
  const std::int64_t pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return {x, h, w};
  return {ops::pad_reflect(x, ph, pw), h, w};
}

Tensor crop_back(const PaddedTensor& padded) { return crop_back(padded.value, padded.height, padded.width); }

Tensor crop_back(const Tensor& x, std::int64_t height, std::int64_t width) {
  if (x.dim(-2) == height && x.dim(-1) == width) return x;
  return ops::crop(x, height, width);
}

}  // namespace gpcn
