// SPDX-License-Identifier: Apache-2.0
//
// Frequency-aware spectral decoupling: refine the amplitude (conditioned on a
// spectral coordinate map) and the phase (two blocks deep) of the current
// image estimate, and return the image-domain residual of the change.
#pragma once

#include "gpcn/rng.hpp"
#include "gpcn/tensor.hpp"
#include "gpcn/transforms.hpp"

namespace gpcn {

/// conv3x3 -> SiLU -> conv3x3, plus a residual path (1x1 projection when the
/// channel counts differ).
struct ConvBlockParams {
  std::int64_t in_channels = 0, out_channels = 0, hidden = 0;
  Tensor w1, b1;  // [hidden, in, 3, 3]
  Tensor w2, b2;  // [out, hidden, 3, 3]
  Tensor proj_w, proj_b;  // [out, in, 1, 1]; undefined when in == out

  /// With `zero_output` the second conv starts at zero and the projection
  /// selects input channel 0, so the block begins as an exact pass-through.
  static ConvBlockParams init(std::int64_t in, std::int64_t out, std::int64_t hidden, Rng& rng,
                              bool zero_output = true);
  std::vector<Tensor> parameters() const;
};

Tensor conv_block(const Tensor& x, const ConvBlockParams& p);

struct FasdBlockParams {
  ConvBlockParams amplitude;  // 1 + 3 SCM channels -> 1
  ConvBlockParams phase1;     // 1 -> 1
  ConvBlockParams phase2;     // 1 -> 1

  static FasdBlockParams init(std::int64_t hidden, Rng& rng, bool zero_output = true);
  std::vector<Tensor> parameters() const;
};

/// [3,H,W]: normalized (u, v) coordinates measured in the centered layout and
/// their radial norm, stored in DC-at-(0,0) layout.
Tensor build_scm(std::int64_t height, std::int64_t width);

struct FasdTrace {
  double imag_energy = 0.0;  // sum of squares of the discarded imaginary part
  double real_energy = 0.0;  // sum of squares of the returned residual
};

/// Image-domain residual for x[N,1,H,W]; H and W powers of two.
Tensor fasd_forward(const Tensor& x, const FasdBlockParams& params, FasdTrace* trace = nullptr);

struct LogSpectrum {
  Tensor log_amplitude;  // log(1 + |F|), centered layout
  Tensor phase;          // angle of F, centered layout
};

LogSpectrum log_spectrum_export(const Tensor& image);

}  // namespace gpcn
