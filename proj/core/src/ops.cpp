// SPDX-License-Identifier: Apache-2.0
#include "gpcn/ops.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace gpcn::ops {

using detail::grad_of;
using detail::make_result;
using detail::wants_grad;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

int normalize_axis(int axis, int ndim, const char* op) {
  const int a = axis < 0 ? axis + ndim : axis;
  if (a < 0 || a >= ndim) {
    throw ValidationError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  }
  return a;
}

// y = f(x); dy/dx = df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  const auto xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  return make_result(x.shape(), std::move(out), name, {x}, [x, df](const TensorImpl& o) {
    auto& gx = grad_of(x);
    const auto xs = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * df(xs[i], o.data[i]);
  });
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [a, b](const TensorImpl& o) {
    if (wants_grad(a)) {
      auto& g = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] - bs[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [a, b](const TensorImpl& o) {
    if (wants_grad(a)) {
      auto& g = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [a, b](const TensorImpl& o) {
    if (wants_grad(a)) {
      auto& g = grad_of(a);
      const auto bs = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bs[i];
    }
    if (wants_grad(b)) {
      auto& g = grad_of(b);
      const auto as = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * as[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return sigmoid_scalar(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus", [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return sigmoid_scalar(v); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor cos(const Tensor& x) {
  return unary(
      x, "cos", [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Tensor sin(const Tensor& x) {
  return unary(
      x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor amplitude(const Tensor& re, const Tensor& im, double eps) {
  require_same_shape(re, im, "amplitude");
  const auto rs = re.data(), is = im.data();
  const double eps2 = eps * eps;
  std::vector<double> out(rs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(rs[i] * rs[i] + is[i] * is[i] + eps2);
  return make_result(re.shape(), std::move(out), "amplitude", {re, im}, [re, im](const TensorImpl& o) {
    const auto rs = re.data(), is = im.data();
    if (wants_grad(re)) {
      auto& g = grad_of(re);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * rs[i] / o.data[i];
    }
    if (wants_grad(im)) {
      auto& g = grad_of(im);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * is[i] / o.data[i];
    }
  });
}

Tensor phase(const Tensor& re, const Tensor& im, double eps) {
  require_same_shape(re, im, "phase");
  const auto rs = re.data(), is = im.data();
  std::vector<double> out(rs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // +0.0 folds a negative zero imaginary part onto the upper half plane.
    double p = std::atan2(is[i] + 0.0, rs[i]);
    if (p <= -std::numbers::pi) p = std::numbers::pi;
    out[i] = p;
  }
  const double eps2 = eps * eps;
  return make_result(re.shape(), std::move(out), "phase", {re, im}, [re, im, eps2](const TensorImpl& o) {
    const auto rs = re.data(), is = im.data();
    const bool gr = wants_grad(re), gi = wants_grad(im);
    auto* gre = gr ? grad_of(re).data() : nullptr;
    auto* gim = gi ? grad_of(im).data() : nullptr;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double denom = rs[i] * rs[i] + is[i] * is[i] + eps2;
      if (gr) gre[i] -= o.grad[i] * is[i] / denom;
      if (gi) gim[i] += o.grad[i] * rs[i] / denom;
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto xs = x.data();
  const double total = std::accumulate(xs.begin(), xs.end(), 0.0);
  return make_result({}, {total}, "sum", {x}, [x](const TensorImpl& o) {
    auto& g = grad_of(x);
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto xs = x.data();
  const double n = static_cast<double>(xs.size());
  const double total = std::accumulate(xs.begin(), xs.end(), 0.0);
  return make_result({}, {total / n}, "mean", {x}, [x, n](const TensorImpl& o) {
    auto& g = grad_of(x);
    const double share = o.grad[0] / n;
    for (auto& v : g) v += share;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ValidationError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x}, [x](const TensorImpl& o) {
    auto& g = grad_of(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int n = x.ndim();
  if (static_cast<int>(axes.size()) != n) throw ValidationError("permute: axis count mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int a : axes) {
    if (a < 0 || a >= n || seen[static_cast<std::size_t>(a)]) throw ValidationError("permute: invalid axes");
    seen[static_cast<std::size_t>(a)] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(n), 1);
  for (int i = n - 2; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] =
        in_strides[static_cast<std::size_t>(i) + 1] * in_shape[static_cast<std::size_t>(i) + 1];
  }
  Shape out_shape(static_cast<std::size_t>(n));
  std::vector<std::int64_t> src_stride(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out_shape[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    src_stride[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
  }
  // Map from output flat index to source flat index.
  const std::int64_t total = x.numel();
  std::vector<std::int64_t> src(static_cast<std::size_t>(total));
  std::vector<std::int64_t> counter(static_cast<std::size_t>(n), 0);
  std::int64_t offset = 0;
  for (std::int64_t k = 0; k < total; ++k) {
    src[static_cast<std::size_t>(k)] = offset;
    for (int i = n - 1; i >= 0; --i) {
      auto& c = counter[static_cast<std::size_t>(i)];
      ++c;
      offset += src_stride[static_cast<std::size_t>(i)];
      if (c < out_shape[static_cast<std::size_t>(i)]) break;
      offset -= c * src_stride[static_cast<std::size_t>(i)];
      c = 0;
    }
  }
  const auto xs = x.data();
  std::vector<double> out(static_cast<std::size_t>(total));
  for (std::int64_t k = 0; k < total; ++k) out[static_cast<std::size_t>(k)] = xs[static_cast<std::size_t>(src[static_cast<std::size_t>(k)])];
  return make_result(out_shape, std::move(out), "permute", {x},
                     [x, src = std::move(src)](const TensorImpl& o) {
                       auto& g = grad_of(x);
                       for (std::size_t k = 0; k < src.size(); ++k) g[static_cast<std::size_t>(src[k])] += o.grad[k];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  const int n = parts[0].ndim();
  const int a = normalize_axis(axis, n, "concat");
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(a)] = 0;
  for (const auto& p : parts) {
    if (p.ndim() != n) throw ValidationError("concat: rank mismatch");
    for (int i = 0; i < n; ++i) {
      if (i != a && p.shape()[static_cast<std::size_t>(i)] != parts[0].shape()[static_cast<std::size_t>(i)]) {
        throw ValidationError("concat: extent mismatch on axis " + std::to_string(i));
      }
    }
    out_shape[static_cast<std::size_t>(a)] += p.shape()[static_cast<std::size_t>(a)];
  }
  const auto split = split_at(out_shape, a);
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::int64_t ext = p.shape()[static_cast<std::size_t>(a)];
    const auto ps = p.data();
    for (std::int64_t o = 0; o < split.outer; ++o) {
      const double* from = ps.data() + o * ext * split.inner;
      double* to = out.data() + (o * split.extent + off) * split.inner;
      std::copy(from, from + ext * split.inner, to);
    }
    off += ext;
  }
  return make_result(out_shape, std::move(out), "concat", parts,
                     [parts, offsets, split, a](const TensorImpl& o) {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         if (!wants_grad(parts[k])) continue;
                         auto& g = grad_of(parts[k]);
                         const std::int64_t ext = parts[k].shape()[static_cast<std::size_t>(a)];
                         for (std::int64_t ou = 0; ou < split.outer; ++ou) {
                           const double* from = o.grad.data() + (ou * split.extent + offsets[k]) * split.inner;
                           double* to = g.data() + ou * ext * split.inner;
                           for (std::int64_t i = 0; i < ext * split.inner; ++i) to[i] += from[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int a = normalize_axis(axis, x.ndim(), "slice");
  const auto split = split_at(x.shape(), a);
  if (start < 0 || length < 0 || start + length > split.extent) {
    throw ValidationError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                          ") exceeds extent " + std::to_string(split.extent) + " on axis " + std::to_string(a));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(a)] = length;
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  const auto xs = x.data();
  for (std::int64_t o = 0; o < split.outer; ++o) {
    const double* from = xs.data() + (o * split.extent + start) * split.inner;
    std::copy(from, from + length * split.inner, out.data() + o * length * split.inner);
  }
  return make_result(out_shape, std::move(out), "slice", {x}, [x, split, start, length](const TensorImpl& o) {
    auto& g = grad_of(x);
    for (std::int64_t ou = 0; ou < split.outer; ++ou) {
      double* to = g.data() + (ou * split.extent + start) * split.inner;
      const double* from = o.grad.data() + ou * length * split.inner;
      for (std::int64_t i = 0; i < length * split.inner; ++i) to[i] += from[i];
    }
  });
}

Tensor pad_reflect(const Tensor& x, std::int64_t bottom, std::int64_t right) {
  if (x.ndim() < 2) throw ValidationError("pad_reflect: need at least 2 axes");
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  if (bottom < 0 || right < 0 || bottom >= std::max<std::int64_t>(h, 1) || right >= std::max<std::int64_t>(w, 1)) {
    throw ValidationError("pad_reflect: padding must be smaller than the extent it mirrors");
  }
  const std::int64_t ho = h + bottom, wo = w + right;
  const std::int64_t planes = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = ho;
  out_shape[out_shape.size() - 1] = wo;
  std::vector<std::int64_t> src(static_cast<std::size_t>(ho * wo));
  for (std::int64_t i = 0; i < ho; ++i) {
    const std::int64_t si = i < h ? i : 2 * (h - 1) - i;
    for (std::int64_t j = 0; j < wo; ++j) {
      const std::int64_t sj = j < w ? j : 2 * (w - 1) - j;
      src[static_cast<std::size_t>(i * wo + j)] = si * w + sj;
    }
  }
  const auto xs = x.data();
  std::vector<double> out(static_cast<std::size_t>(planes * ho * wo));
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t k = 0; k < ho * wo; ++k) {
      out[static_cast<std::size_t>(p * ho * wo + k)] = xs[static_cast<std::size_t>(p * h * w + src[static_cast<std::size_t>(k)])];
    }
  }
  return make_result(out_shape, std::move(out), "pad_reflect", {x},
                     [x, src = std::move(src), planes, h, w, ho, wo](const TensorImpl& o) {
                       auto& g = grad_of(x);
                       for (std::int64_t p = 0; p < planes; ++p) {
                         for (std::int64_t k = 0; k < ho * wo; ++k) {
                           g[static_cast<std::size_t>(p * h * w + src[static_cast<std::size_t>(k)])] +=
                               o.grad[static_cast<std::size_t>(p * ho * wo + k)];
                         }
                       }
                     });
}

Tensor crop(const Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.ndim() < 2) throw ValidationError("crop: need at least 2 axes");
  const std::int64_t hi = x.dim(-2), wi = x.dim(-1);
  if (h < 0 || w < 0 || h > hi || w > wi) throw ValidationError("crop: window exceeds input extents");
  return slice(slice(x, -2, 0, h), -1, 0, w);
}

namespace {

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

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.ndim() != 2) throw ValidationError("linear: weight must be [Dout, Din]");
  const std::int64_t dout = weight.dim(0), din = weight.dim(1);
  if (x.ndim() < 1 || x.dim(-1) != din) {
    throw ValidationError("linear: last axis of input is " + std::to_string(x.ndim() ? x.dim(-1) : 0) +
                          " but weight expects " + std::to_string(din));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != dout)) {
    throw ValidationError("linear: bias must be [" + std::to_string(dout) + "]");
  }
  const std::int64_t rows = x.numel() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  std::vector<double> out(static_cast<std::size_t>(rows * dout));
  const double* xs = x.data().data();
  const double* ws = weight.data().data();
  const double* bs = bias.defined() ? bias.data().data() : nullptr;
  for (std::int64_t m = 0; m < rows; ++m) {
    const double* xr = xs + m * din;
    double* orow = out.data() + m * dout;
    for (std::int64_t o = 0; o < dout; ++o) {
      const double* wr = ws + o * din;
      double acc = 0.0;
      acc = dot(wr, xr, din);
      orow[o] = acc + (bs ? bs[o] : 0.0);
    }
  }
  return make_result(out_shape, std::move(out), "linear", {x, weight, bias},
                     [x, weight, bias, rows, din, dout](const TensorImpl& o) {
                       const double* g = o.grad.data();
                       if (wants_grad(x)) {
                         double* gx = grad_of(x).data();
                         const double* ws = weight.data().data();
                         for (std::int64_t m = 0; m < rows; ++m) {
                           double* gxr = gx + m * din;
                           for (std::int64_t oc = 0; oc < dout; ++oc) {
                             const double go = g[m * dout + oc];
                             const double* wr = ws + oc * din;
                             axpy(gxr, wr, go, din);
                           }
                         }
                       }
                       if (wants_grad(weight)) {
                         double* gw = grad_of(weight).data();
                         const double* xs = x.data().data();
                         for (std::int64_t m = 0; m < rows; ++m) {
                           const double* xr = xs + m * din;
                           for (std::int64_t oc = 0; oc < dout; ++oc) {
                             const double go = g[m * dout + oc];
                             double* gwr = gw + oc * din;
                             axpy(gwr, xr, go, din);
                           }
                         }
                       }
                       if (wants_grad(bias)) {
                         double* gb = grad_of(bias).data();
                         for (std::int64_t m = 0; m < rows; ++m) {
                           for (std::int64_t oc = 0; oc < dout; ++oc) gb[oc] += g[m * dout + oc];
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int axis, double eps) {
  const int a = normalize_axis(axis, x.ndim(), "layer_norm");
  const auto split = split_at(x.shape(), a);
  const std::int64_t n = split.extent;
  if (gamma.numel() != n || beta.numel() != n) {
    throw ValidationError("layer_norm: gamma/beta must have " + std::to_string(n) + " entries");
  }
  const double* xs = x.data().data();
  const double* gs = gamma.data().data();
  const double* bs = beta.data().data();
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  std::vector<double> xhat(out.size());
  std::vector<double> inv_std(static_cast<std::size_t>(split.outer * split.inner));
  for (std::int64_t o = 0; o < split.outer; ++o) {
    for (std::int64_t in = 0; in < split.inner; ++in) {
      const std::int64_t base = o * n * split.inner + in;
      double mu = 0.0;
      for (std::int64_t k = 0; k < n; ++k) mu += xs[base + k * split.inner];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        const double d = xs[base + k * split.inner] - mu;
        var += d * d;
      }
      var /= static_cast<double>(n);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(o * split.inner + in)] = is;
      for (std::int64_t k = 0; k < n; ++k) {
        const std::int64_t idx = base + k * split.inner;
        const double xh = (xs[idx] - mu) * is;
        xhat[static_cast<std::size_t>(idx)] = xh;
        out[static_cast<std::size_t>(idx)] = gs[k] * xh + bs[k];
      }
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [x, gamma, beta, split, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl& o) {
        const std::int64_t n = split.extent;
        const double* g = o.grad.data();
        const double* gs = gamma.data().data();
        double* gx = wants_grad(x) ? grad_of(x).data() : nullptr;
        double* ggamma = wants_grad(gamma) ? grad_of(gamma).data() : nullptr;
        double* gbeta = wants_grad(beta) ? grad_of(beta).data() : nullptr;
        for (std::int64_t ou = 0; ou < split.outer; ++ou) {
          for (std::int64_t in = 0; in < split.inner; ++in) {
            const std::int64_t base = ou * n * split.inner + in;
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::int64_t k = 0; k < n; ++k) {
              const std::int64_t idx = base + k * split.inner;
              const double gh = g[idx] * gs[k];
              mean_g += gh;
              mean_gx += gh * xhat[static_cast<std::size_t>(idx)];
              if (ggamma) ggamma[k] += g[idx] * xhat[static_cast<std::size_t>(idx)];
              if (gbeta) gbeta[k] += g[idx];
            }
            if (!gx) continue;
            mean_g /= static_cast<double>(n);
            mean_gx /= static_cast<double>(n);
            const double is = inv_std[static_cast<std::size_t>(ou * split.inner + in)];
            for (std::int64_t k = 0; k < n; ++k) {
              const std::int64_t idx = base + k * split.inner;
              const double gh = g[idx] * gs[k];
              gx[idx] += is * (gh - mean_g - xhat[static_cast<std::size_t>(idx)] * mean_gx);
            }
          }
        }
      });
}

}  // namespace gpcn::ops
