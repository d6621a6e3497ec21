// SPDX-License-Identifier: Apache-2.0
#include "gpcn/fasd.hpp"

#include <cmath>

#include "gpcn/ops.hpp"

namespace gpcn {

ConvBlockParams ConvBlockParams::init(std::int64_t in, std::int64_t out, std::int64_t hidden, Rng& rng,
                                      bool zero_output) {
  ConvBlockParams p;
  p.in_channels = in;
  p.out_channels = out;
  p.hidden = hidden;
  p.w1 = init::kaiming_uniform({hidden, in, 3, 3}, in * 9, rng);
  p.b1 = init::constant({hidden}, 0.0);
  p.w2 = zero_output ? init::constant({out, hidden, 3, 3}, 0.0)
                     : init::kaiming_uniform({out, hidden, 3, 3}, hidden * 9, rng);
  p.b2 = init::constant({out}, 0.0);
  if (in != out) {
    p.proj_w = init::constant({out, in, 1, 1}, 0.0);
    auto w = p.proj_w.mutable_data();
    for (std::int64_t o = 0; o < out; ++o) w[static_cast<std::size_t>(o * in)] = 1.0;
    p.proj_b = init::constant({out}, 0.0);
  }
  return p;
}

std::vector<Tensor> ConvBlockParams::parameters() const {
  std::vector<Tensor> out = {w1, b1, w2, b2};
  if (proj_w.defined()) out.insert(out.end(), {proj_w, proj_b});
  return out;
}

Tensor conv_block(const Tensor& x, const ConvBlockParams& p) {
  if (x.ndim() != 4 || x.dim(1) != p.in_channels) {
    throw ValidationError("conv_block: expected " + std::to_string(p.in_channels) + " input channels, got " +
                          shape_str(x.shape()));
  }
  const Tensor body = ops::conv2d(ops::silu(ops::conv2d(x, p.w1, p.b1, 1)), p.w2, p.b2, 1);
  const Tensor skip = p.proj_w.defined() ? ops::conv2d(x, p.proj_w, p.proj_b, 0) : x;
  return ops::add(skip, body);
}

FasdBlockParams FasdBlockParams::init(std::int64_t hidden, Rng& rng, bool zero_output) {
  FasdBlockParams p;
  p.amplitude = ConvBlockParams::init(4, 1, hidden, rng, zero_output);
  p.phase1 = ConvBlockParams::init(1, 1, hidden, rng, zero_output);
  p.phase2 = ConvBlockParams::init(1, 1, hidden, rng, zero_output);
  return p;
}

std::vector<Tensor> FasdBlockParams::parameters() const {
  std::vector<Tensor> out = amplitude.parameters();
  for (const auto* b : {&phase1, &phase2}) {
    const auto v = b->parameters();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

Tensor build_scm(std::int64_t height, std::int64_t width) {
  if (height < 2 || width < 2) throw ValidationError("build_scm: extents must be >= 2");
  std::vector<double> m(static_cast<std::size_t>(3 * height * width));
  const std::int64_t plane = height * width;
  for (std::int64_t i = 0; i < height; ++i) {
    // Centered-layout index of unshifted row i.
    const std::int64_t u = (i + height / 2) % height;
    const double cu = 2.0 * static_cast<double>(u) / static_cast<double>(height) - 1.0;
    for (std::int64_t j = 0; j < width; ++j) {
      const std::int64_t v = (j + width / 2) % width;
      const double cv = 2.0 * static_cast<double>(v) / static_cast<double>(width) - 1.0;
      const std::int64_t k = i * width + j;
      m[static_cast<std::size_t>(k)] = cu;
      m[static_cast<std::size_t>(plane + k)] = cv;
      m[static_cast<std::size_t>(2 * plane + k)] = std::sqrt(cu * cu + cv * cv);
    }
  }
  return Tensor::from_data({3, height, width}, std::move(m));
}

Tensor fasd_forward(const Tensor& x, const FasdBlockParams& params, FasdTrace* trace) {
  if (x.ndim() != 4 || x.dim(1) != 1) {
    throw ValidationError("fasd_forward: input must be [N,1,H,W], got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ValidationError("fasd_forward: extents " + std::to_string(h) + "x" + std::to_string(w) +
                          " must be powers of two");
  }
  if (params.amplitude.in_channels != 4 || params.phase1.in_channels != 1 || params.phase2.in_channels != 1) {
    throw ValidationError("fasd_forward: amplitude branch takes 4 channels, phase branch 1");
  }
  const ComplexSpectrum k = fft2(x);
  const AmplitudePhase ap0 = to_amp_phase(k);

  const Tensor scm = build_scm(h, w);
  std::vector<Tensor> per_sample;
  per_sample.reserve(static_cast<std::size_t>(n));
  for (std::int64_t b = 0; b < n; ++b) per_sample.push_back(scm);
  const Tensor scm_batch = ops::reshape(ops::concat(per_sample, 0), {n, 3, h, w});

  const Tensor amp = conv_block(ops::concat({ap0.amplitude, scm_batch}, 1), params.amplitude);
  const Tensor ph = conv_block(conv_block(ap0.phase, params.phase1), params.phase2);

  // The reference spectrum is recombined from (A0, P0) through the same path
  // as the refined one, so identity branches give a residual of exactly zero.
  const ComplexSpectrum refined = from_amp_phase({amp, ph});
  const ComplexSpectrum reference = from_amp_phase(ap0);
  const ComplexSpectrum dk{ops::sub(refined.re, reference.re), ops::sub(refined.im, reference.im)};
  const ComplexSpectrum di = ifft2_complex(dk);
  if (trace) {
    trace->imag_energy = 0.0;
    trace->real_energy = 0.0;
    for (double v : di.im.data()) trace->imag_energy += v * v;
    for (double v : di.re.data()) trace->real_energy += v * v;
  }
  return di.re;
}

LogSpectrum log_spectrum_export(const Tensor& image) {
  NoGradGuard guard;
  const AmplitudePhase ap = to_amp_phase(fft2(image), 0.0);
  std::vector<double> la(ap.amplitude.data().begin(), ap.amplitude.data().end());
  for (auto& v : la) v = std::log1p(v);
  return {fftshift(Tensor::from_data(image.shape(), std::move(la))), fftshift(ap.phase)};
}

}  // namespace gpcn
