// SPDX-License-Identifier: Apache-2.0
//
// Orthonormal 2-D Haar wavelet and radix-2 2-D DFT, both differentiable.
// All transforms act on the last two axes of an [N,C,H,W] tensor.
#pragma once

#include "gpcn/tensor.hpp"

namespace gpcn {

/// One analysis level; each subband is [N,C,H/2,W/2].
struct SubbandSet {
  Tensor ll, lh, hl, hh;
};

/// Fourier coefficients with DC at (0,0).
struct ComplexSpectrum {
  Tensor re, im;
};

struct AmplitudePhase {
  Tensor amplitude;  // >= eps
  Tensor phase;      // (-pi, pi]
};

inline constexpr double kAmplitudeEps = 1e-8;

/// Requires even H and W.
SubbandSet dwt2(const Tensor& x);
/// Exact inverse of dwt2.
Tensor idwt2(const SubbandSet& s);

/// Unnormalized forward DFT of a real tensor. H and W must be powers of two.
ComplexSpectrum fft2(const Tensor& x);
/// Unnormalized forward DFT of a complex input.
ComplexSpectrum fft2(const ComplexSpectrum& k);
/// 1/(HW)-normalized inverse DFT, full complex result.
ComplexSpectrum ifft2_complex(const ComplexSpectrum& k);
/// Real part of ifft2_complex.
Tensor ifft2(const ComplexSpectrum& k);

AmplitudePhase to_amp_phase(const ComplexSpectrum& k, double eps = kAmplitudeEps);
ComplexSpectrum from_amp_phase(const AmplitudePhase& ap);

/// Moves DC from (0,0) to (H/2, W/2) on the last two axes; no gradient.
Tensor fftshift(const Tensor& x);

bool is_power_of_two(std::int64_t v);

}  // namespace gpcn
