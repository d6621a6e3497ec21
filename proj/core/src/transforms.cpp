// SPDX-License-Identifier: Apache-2.0
#include "gpcn/transforms.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gpcn/ops.hpp"

namespace gpcn {

using detail::grad_of;
using detail::make_result;
using detail::wants_grad;

namespace {

// Haar sign pattern: kSign[subband][pixel], pixels ordered (0,0),(0,1),(1,0),(1,1).
constexpr int kSign[4][4] = {
    {1, 1, 1, 1},    // LL
    {1, 1, -1, -1},  // LH
    {1, -1, 1, -1},  // HL
    {1, -1, -1, 1},  // HH
};

struct Planes {
  std::int64_t count, h, w;
};

Planes planes_of(const Tensor& x, const char* op) {
  if (x.ndim() < 2) throw ValidationError(std::string(op) + ": need at least 2 axes");
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  return {h * w == 0 ? 0 : x.numel() / (h * w), h, w};
}

// Analysis of a single subband `band`; coefficient = sum(sign * pixel) / 2.
void haar_forward(const double* x, double* out, const Planes& p, int band) {
  const std::int64_t ho = p.h / 2, wo = p.w / 2;
  const double s0 = 0.5 * kSign[band][0], s1 = 0.5 * kSign[band][1];
  const double s2 = 0.5 * kSign[band][2], s3 = 0.5 * kSign[band][3];
  for (std::int64_t k = 0; k < p.count; ++k) {
    const double* xp = x + k * p.h * p.w;
    double* op = out + k * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i) {
      const double* r0 = xp + (2 * i) * p.w;
      const double* r1 = r0 + p.w;
      for (std::int64_t j = 0; j < wo; ++j) {
        op[i * wo + j] = s0 * r0[2 * j] + s1 * r0[2 * j + 1] + s2 * r1[2 * j] + s3 * r1[2 * j + 1];
      }
    }
  }
}

// Adjoint of haar_forward for one band, accumulated into gx.
void haar_forward_adjoint(const double* g, double* gx, const Planes& p, int band) {
  const std::int64_t ho = p.h / 2, wo = p.w / 2;
  const double s0 = 0.5 * kSign[band][0], s1 = 0.5 * kSign[band][1];
  const double s2 = 0.5 * kSign[band][2], s3 = 0.5 * kSign[band][3];
  for (std::int64_t k = 0; k < p.count; ++k) {
    double* xp = gx + k * p.h * p.w;
    const double* gp = g + k * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i) {
      double* r0 = xp + (2 * i) * p.w;
      double* r1 = r0 + p.w;
      for (std::int64_t j = 0; j < wo; ++j) {
        const double v = gp[i * wo + j];
        r0[2 * j] += s0 * v;
        r0[2 * j + 1] += s1 * v;
        r1[2 * j] += s2 * v;
        r1[2 * j + 1] += s3 * v;
      }
    }
  }
}

Tensor haar_band(const Tensor& x, int band) {
  const Planes p = planes_of(x, "dwt2");
  if (p.h % 2 != 0 || p.w % 2 != 0) {
    throw ValidationError("dwt2: spatial extents " + std::to_string(p.h) + "x" + std::to_string(p.w) +
                          " must be even; pad the input first (see pad_to_multiple)");
  }
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = p.h / 2;
  out_shape[out_shape.size() - 1] = p.w / 2;
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  haar_forward(x.data().data(), out.data(), p, band);
  static constexpr const char* kNames[4] = {"dwt2_ll", "dwt2_lh", "dwt2_hl", "dwt2_hh"};
  return make_result(out_shape, std::move(out), kNames[band], {x}, [x, p, band](const TensorImpl& o) {
    haar_forward_adjoint(o.grad.data(), grad_of(x).data(), p, band);
  });
}

// In-place radix-2 transform of `n` complex values spaced by `stride`.
// sign = -1 forward, +1 inverse; unnormalized.
void fft1d(double* re, double* im, std::int64_t n, std::int64_t stride, int sign, std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(2 * n));
  double* r = scratch.data();
  double* m = r + n;
  for (std::int64_t k = 0; k < n; ++k) {
    r[k] = re[k * stride];
    m[k] = im[k * stride];
  }
  for (std::int64_t i = 1, j = 0; i < n; ++i) {
    std::int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(r[i], r[j]);
      std::swap(m[i], m[j]);
    }
  }
  for (std::int64_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::int64_t half = len / 2;
    for (std::int64_t k = 0; k < half; ++k) {
      // Twiddles evaluated directly (not by recurrence) to keep accuracy at 1e-15.
      const double wr = std::cos(ang * static_cast<double>(k));
      const double wi = std::sin(ang * static_cast<double>(k));
      for (std::int64_t s = 0; s < n; s += len) {
        const std::int64_t a = s + k, b = s + k + half;
        const double tr = r[b] * wr - m[b] * wi;
        const double ti = r[b] * wi + m[b] * wr;
        r[b] = r[a] - tr;
        m[b] = m[a] - ti;
        r[a] += tr;
        m[a] += ti;
      }
    }
  }
  for (std::int64_t k = 0; k < n; ++k) {
    re[k * stride] = r[k];
    im[k * stride] = m[k];
  }
}

// 2-D transform of every plane, then multiplied by `scale`.
void fft2_planes(std::vector<double>& re, std::vector<double>& im, const Planes& p, int sign, double scale) {
  std::vector<double> scratch;
  for (std::int64_t k = 0; k < p.count; ++k) {
    double* r = re.data() + k * p.h * p.w;
    double* m = im.data() + k * p.h * p.w;
    for (std::int64_t i = 0; i < p.h; ++i) fft1d(r + i * p.w, m + i * p.w, p.w, 1, sign, scratch);
    for (std::int64_t j = 0; j < p.w; ++j) fft1d(r + j, m + j, p.h, p.w, sign, scratch);
  }
  if (scale != 1.0) {
    for (auto& v : re) v *= scale;
    for (auto& v : im) v *= scale;
  }
}

// Complex transform as a differentiable op producing stacked [2, ...] output.
Tensor complex_transform(const Tensor& re, const Tensor& im, int sign, double scale, const char* name) {
  const Planes p = planes_of(re, name);
  if (!is_power_of_two(p.h) || !is_power_of_two(p.w)) {
    throw ValidationError(std::string(name) + ": spatial extents " + std::to_string(p.h) + "x" +
                          std::to_string(p.w) + " must be powers of two");
  }
  if (im.defined() && im.shape() != re.shape()) throw ValidationError(std::string(name) + ": re/im shape mismatch");
  const std::size_t n = re.data().size();
  std::vector<double> r(re.data().begin(), re.data().end());
  std::vector<double> m = im.defined() ? std::vector<double>(im.data().begin(), im.data().end())
                                       : std::vector<double>(n, 0.0);
  fft2_planes(r, m, p, sign, scale);
  std::vector<double> out(2 * n);
  std::copy(r.begin(), r.end(), out.begin());
  std::copy(m.begin(), m.end(), out.begin() + static_cast<std::ptrdiff_t>(n));
  Shape out_shape = re.shape();
  out_shape.insert(out_shape.begin(), 2);
  return make_result(out_shape, std::move(out), name, {re, im}, [re, im, p, sign, scale, n](const TensorImpl& o) {
    // Adjoint of (scale * F_sign) is scale * F_{-sign}.
    std::vector<double> gr(o.grad.begin(), o.grad.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<double> gm(o.grad.begin() + static_cast<std::ptrdiff_t>(n), o.grad.end());
    fft2_planes(gr, gm, p, -sign, scale);
    if (wants_grad(re)) {
      auto& g = grad_of(re);
      for (std::size_t i = 0; i < n; ++i) g[i] += gr[i];
    }
    if (wants_grad(im)) {
      auto& g = grad_of(im);
      for (std::size_t i = 0; i < n; ++i) g[i] += gm[i];
    }
  });
}

ComplexSpectrum unstack(const Tensor& z, const Shape& shape) {
  return {ops::reshape(ops::slice(z, 0, 0, 1), shape), ops::reshape(ops::slice(z, 0, 1, 1), shape)};
}

}  // namespace

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

SubbandSet dwt2(const Tensor& x) { return {haar_band(x, 0), haar_band(x, 1), haar_band(x, 2), haar_band(x, 3)}; }

Tensor idwt2(const SubbandSet& s) {
  const Tensor* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
  for (int b = 1; b < 4; ++b) {
    if (bands[b]->shape() != s.ll.shape()) {
      throw ValidationError("idwt2: subband shape mismatch " + shape_str(bands[b]->shape()) + " vs LL " +
                            shape_str(s.ll.shape()));
    }
  }
  const Planes half = planes_of(s.ll, "idwt2");
  const Planes full{half.count, half.h * 2, half.w * 2};
  Shape out_shape = s.ll.shape();
  out_shape[out_shape.size() - 2] = full.h;
  out_shape[out_shape.size() - 1] = full.w;
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)), 0.0);
  // Synthesis is the adjoint (= inverse, orthonormal) of analysis.
  for (int b = 0; b < 4; ++b) haar_forward_adjoint(bands[b]->data().data(), out.data(), full, b);
  return make_result(out_shape, std::move(out), "idwt2", {s.ll, s.lh, s.hl, s.hh}, [s, full](const TensorImpl& o) {
    const Tensor* bands[4] = {&s.ll, &s.lh, &s.hl, &s.hh};
    std::vector<double> tmp(static_cast<std::size_t>(bands[0]->numel()));
    for (int b = 0; b < 4; ++b) {
      if (!wants_grad(*bands[b])) continue;
      haar_forward(o.grad.data(), tmp.data(), full, b);
      auto& g = grad_of(*bands[b]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
    }
  });
}

ComplexSpectrum fft2(const Tensor& x) { return unstack(complex_transform(x, Tensor(), -1, 1.0, "fft2"), x.shape()); }

ComplexSpectrum fft2(const ComplexSpectrum& k) {
  return unstack(complex_transform(k.re, k.im, -1, 1.0, "fft2"), k.re.shape());
}

ComplexSpectrum ifft2_complex(const ComplexSpectrum& k) {
  const Planes p = planes_of(k.re, "ifft2");
  const double scale = 1.0 / static_cast<double>(p.h * p.w);
  return unstack(complex_transform(k.re, k.im, +1, scale, "ifft2"), k.re.shape());
}

Tensor ifft2(const ComplexSpectrum& k) { return ifft2_complex(k).re; }

AmplitudePhase to_amp_phase(const ComplexSpectrum& k, double eps) {
  return {ops::amplitude(k.re, k.im, eps), ops::phase(k.re, k.im, eps)};
}

ComplexSpectrum from_amp_phase(const AmplitudePhase& ap) {
  return {ops::mul(ap.amplitude, ops::cos(ap.phase)), ops::mul(ap.amplitude, ops::sin(ap.phase))};
}

Tensor fftshift(const Tensor& x) {
  const Planes p = planes_of(x, "fftshift");
  const auto xs = x.data();
  std::vector<double> out(xs.size());
  for (std::int64_t k = 0; k < p.count; ++k) {
    for (std::int64_t i = 0; i < p.h; ++i) {
      const std::int64_t si = (i + p.h - p.h / 2) % p.h;
      for (std::int64_t j = 0; j < p.w; ++j) {
        const std::int64_t sj = (j + p.w - p.w / 2) % p.w;
        out[static_cast<std::size_t>(k * p.h * p.w + i * p.w + j)] =
            xs[static_cast<std::size_t>(k * p.h * p.w + si * p.w + sj)];
      }
    }
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

}  // namespace gpcn
