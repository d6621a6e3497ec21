// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <string>

#include "gpcn/ops.hpp"

namespace gpcn::ops {

using detail::grad_of;
using detail::make_result;
using detail::wants_grad;

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo;
  int pad;
};

inline void axpy(double* __restrict y, const double* __restrict x, double a, std::int64_t n) {
#pragma omp simd
  for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* __restrict a, const double* __restrict b, std::int64_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Valid output-column range [lo, hi) for kernel column kx.
inline void col_range(const ConvGeometry& g, std::int64_t kx, std::int64_t& lo, std::int64_t& hi) {
  lo = std::max<std::int64_t>(0, g.pad - kx);
  hi = std::min<std::int64_t>(g.wo, g.w + g.pad - kx);
}

// out_plane += wv * shifted(in_plane)
inline void accumulate_tap(const ConvGeometry& g, const double* in, double* out, double wv, std::int64_t ky,
                           std::int64_t kx) {
  std::int64_t lo, hi;
  col_range(g, kx, lo, hi);
  for (std::int64_t oy = 0; oy < g.ho; ++oy) {
    const std::int64_t iy = oy + ky - g.pad;
    if (iy < 0 || iy >= g.h) continue;
    const double* src = in + iy * g.w + (kx - g.pad);
    double* dst = out + oy * g.wo;
    axpy(dst + lo, src + lo, wv, hi - lo);
  }
}

// in_grad_plane += wv * unshifted(out_grad_plane)
inline void scatter_tap(const ConvGeometry& g, const double* gout, double* gin, double wv, std::int64_t ky,
                        std::int64_t kx) {
  std::int64_t lo, hi;
  col_range(g, kx, lo, hi);
  for (std::int64_t oy = 0; oy < g.ho; ++oy) {
    const std::int64_t iy = oy + ky - g.pad;
    if (iy < 0 || iy >= g.h) continue;
    double* dst = gin + iy * g.w + (kx - g.pad);
    const double* src = gout + oy * g.wo;
    axpy(dst + lo, src + lo, wv, hi - lo);
  }
}

inline double correlate_tap(const ConvGeometry& g, const double* gout, const double* in, std::int64_t ky,
                            std::int64_t kx) {
  std::int64_t lo, hi;
  col_range(g, kx, lo, hi);
  double acc = 0.0;
  for (std::int64_t oy = 0; oy < g.ho; ++oy) {
    const std::int64_t iy = oy + ky - g.pad;
    if (iy < 0 || iy >= g.h) continue;
    const double* src = in + iy * g.w + (kx - g.pad);
    const double* go = gout + oy * g.wo;
    acc += dot(go + lo, src + lo, hi - lo);
  }
  return acc;
}

ConvGeometry geometry(const Tensor& x, const Tensor& weight, int padding, bool depthwise, const char* op) {
  if (x.ndim() != 4) throw ValidationError(std::string(op) + ": input must be [N,C,H,W], got " + shape_str(x.shape()));
  if (weight.ndim() != 4) throw ValidationError(std::string(op) + ": weight must be rank 4");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.pad = padding;
  if (depthwise) {
    if (weight.dim(1) != 1 || g.cout != g.cin) {
      throw ValidationError(std::string(op) + ": channel axis mismatch, input has " + std::to_string(g.cin) +
                            " channels but weight is " + shape_str(weight.shape()));
    }
  } else if (weight.dim(1) != g.cin) {
    throw ValidationError(std::string(op) + ": channel axis mismatch, input has " + std::to_string(g.cin) +
                          " channels but weight expects " + std::to_string(weight.dim(1)));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ValidationError(std::string(op) + ": kernel extents must be odd");
  if (padding < 0) throw ValidationError(std::string(op) + ": negative padding");
  g.ho = g.h + 2 * padding - g.kh + 1;
  g.wo = g.w + 2 * padding - g.kw + 1;
  if (g.ho <= 0) throw ValidationError(std::string(op) + ": height axis too small for kernel");
  if (g.wo <= 0) throw ValidationError(std::string(op) + ": width axis too small for kernel");
  return g;
}

void check_bias(const Tensor& bias, std::int64_t cout, const char* op) {
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != cout)) {
    throw ValidationError(std::string(op) + ": bias must be [" + std::to_string(cout) + "]");
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int padding) {
  const ConvGeometry g = geometry(x, weight, padding, false, "conv2d");
  check_bias(bias, g.cout, "conv2d");
  const std::int64_t in_plane = g.h * g.w, out_plane = g.ho * g.wo;
  std::vector<double> out(static_cast<std::size_t>(g.n * g.cout * out_plane), 0.0);
  const double* xs = x.data().data();
  const double* ws = weight.data().data();
  for (std::int64_t b = 0; b < g.n; ++b) {
    for (std::int64_t co = 0; co < g.cout; ++co) {
      double* o = out.data() + (b * g.cout + co) * out_plane;
      if (bias.defined()) std::fill(o, o + out_plane, bias.data()[static_cast<std::size_t>(co)]);
      for (std::int64_t ci = 0; ci < g.cin; ++ci) {
        const double* in = xs + (b * g.cin + ci) * in_plane;
        const double* wk = ws + (co * g.cin + ci) * g.kh * g.kw;
        for (std::int64_t ky = 0; ky < g.kh; ++ky)
          for (std::int64_t kx = 0; kx < g.kw; ++kx) accumulate_tap(g, in, o, wk[ky * g.kw + kx], ky, kx);
      }
    }
  }
  return make_result({g.n, g.cout, g.ho, g.wo}, std::move(out), "conv2d", {x, weight, bias},
                     [x, weight, bias, g](const TensorImpl& o) {
                       const std::int64_t in_plane = g.h * g.w, out_plane = g.ho * g.wo;
                       const double* go = o.grad.data();
                       const double* xs = x.data().data();
                       const double* ws = weight.data().data();
                       double* gx = wants_grad(x) ? grad_of(x).data() : nullptr;
                       double* gw = wants_grad(weight) ? grad_of(weight).data() : nullptr;
                       double* gb = wants_grad(bias) ? grad_of(bias).data() : nullptr;
                       for (std::int64_t b = 0; b < g.n; ++b) {
                         for (std::int64_t co = 0; co < g.cout; ++co) {
                           const double* gplane = go + (b * g.cout + co) * out_plane;
                           if (gb) {
                             double s = 0.0;
                             for (std::int64_t k = 0; k < out_plane; ++k) s += gplane[k];
                             gb[co] += s;
                           }
                           for (std::int64_t ci = 0; ci < g.cin; ++ci) {
                             const std::int64_t wbase = (co * g.cin + ci) * g.kh * g.kw;
                             const double* in = xs + (b * g.cin + ci) * in_plane;
                             for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                               for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                                 const std::int64_t wi = wbase + ky * g.kw + kx;
                                 if (gx) scatter_tap(g, gplane, gx + (b * g.cin + ci) * in_plane, ws[wi], ky, kx);
                                 if (gw) gw[wi] += correlate_tap(g, gplane, in, ky, kx);
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int padding) {
  const ConvGeometry g = geometry(x, weight, padding, true, "depthwise_conv2d");
  check_bias(bias, g.cout, "depthwise_conv2d");
  const std::int64_t in_plane = g.h * g.w, out_plane = g.ho * g.wo;
  std::vector<double> out(static_cast<std::size_t>(g.n * g.cout * out_plane), 0.0);
  const double* xs = x.data().data();
  const double* ws = weight.data().data();
  for (std::int64_t b = 0; b < g.n; ++b) {
    for (std::int64_t c = 0; c < g.cout; ++c) {
      double* o = out.data() + (b * g.cout + c) * out_plane;
      if (bias.defined()) std::fill(o, o + out_plane, bias.data()[static_cast<std::size_t>(c)]);
      const double* in = xs + (b * g.cin + c) * in_plane;
      const double* wk = ws + c * g.kh * g.kw;
      for (std::int64_t ky = 0; ky < g.kh; ++ky)
        for (std::int64_t kx = 0; kx < g.kw; ++kx) accumulate_tap(g, in, o, wk[ky * g.kw + kx], ky, kx);
    }
  }
  return make_result({g.n, g.cout, g.ho, g.wo}, std::move(out), "depthwise_conv2d", {x, weight, bias},
                     [x, weight, bias, g](const TensorImpl& o) {
                       const std::int64_t in_plane = g.h * g.w, out_plane = g.ho * g.wo;
                       const double* go = o.grad.data();
                       const double* xs = x.data().data();
                       const double* ws = weight.data().data();
                       double* gx = wants_grad(x) ? grad_of(x).data() : nullptr;
                       double* gw = wants_grad(weight) ? grad_of(weight).data() : nullptr;
                       double* gb = wants_grad(bias) ? grad_of(bias).data() : nullptr;
                       for (std::int64_t b = 0; b < g.n; ++b) {
                         for (std::int64_t c = 0; c < g.cout; ++c) {
                           const double* gplane = go + (b * g.cout + c) * out_plane;
                           if (gb) {
                             double s = 0.0;
                             for (std::int64_t k = 0; k < out_plane; ++k) s += gplane[k];
                             gb[c] += s;
                           }
                           const double* in = xs + (b * g.cin + c) * in_plane;
                           for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                             for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                               const std::int64_t wi = c * g.kh * g.kw + ky * g.kw + kx;
                               if (gx) scatter_tap(g, gplane, gx + (b * g.cin + c) * in_plane, ws[wi], ky, kx);
                               if (gw) gw[wi] += correlate_tap(g, gplane, in, ky, kx);
                             }
                           }
                         }
                       }
                     });
}

}  // namespace gpcn::ops
