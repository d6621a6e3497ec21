// SPDX-License-Identifier: Apache-2.0
#include "gpcn/ssm.hpp"

#include <cmath>
#include <string>

#include "gpcn/ops.hpp"

namespace gpcn {

using detail::grad_of;
using detail::make_result;
using detail::wants_grad;

namespace {

// Inverse of softplus for positive targets.
double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

const std::vector<int> kToNhwc = {0, 2, 3, 1};
const std::vector<int> kToNchw = {0, 3, 1, 2};

struct ScanDims {
  std::int64_t n, h, w, len, ch, state;
};

ScanDims check_scan_inputs(const Tensor& x, const Tensor& delta, const Tensor& b, const Tensor& c,
                           const Tensor& a_log, const Tensor& d_skip) {
  if (x.ndim() != 4) throw ValidationError("selective_scan: x must be [N,H,W,C], got " + shape_str(x.shape()));
  ScanDims s{x.dim(0), x.dim(1), x.dim(2), x.dim(1) * x.dim(2), x.dim(3), a_log.ndim() == 2 ? a_log.dim(1) : 0};
  if (delta.shape() != x.shape()) throw ValidationError("selective_scan: delta shape must equal x shape");
  if (a_log.ndim() != 2 || a_log.dim(0) != s.ch) throw ValidationError("selective_scan: a_log must be [C,d]");
  const Shape bc_shape = {s.n, s.h, s.w, s.state};
  if (b.shape() != bc_shape) throw ValidationError("selective_scan: B must be " + shape_str(bc_shape));
  if (c.shape() != bc_shape) throw ValidationError("selective_scan: C must be " + shape_str(bc_shape));
  if (d_skip.numel() != s.ch) throw ValidationError("selective_scan: D must have C entries");
  return s;
}

}  // namespace

std::int64_t scan_position(ScanDirection dir, std::int64_t k, std::int64_t h, std::int64_t w) {
  const std::int64_t len = h * w;
  switch (dir) {
    case ScanDirection::kRowForward:
      return k;
    case ScanDirection::kRowReverse:
      return len - 1 - k;
    case ScanDirection::kColForward:
      return (k % h) * w + k / h;
    case ScanDirection::kColReverse: {
      const std::int64_t r = len - 1 - k;
      return (r % h) * w + r / h;
    }
  }
  return k;
}

SsmParams SsmParams::init(std::int64_t channels, std::int64_t state_dim, Rng& rng) {
  SsmParams p;
  p.channels = channels;
  p.state_dim = state_dim;
  p.w_delta = init::kaiming_uniform({channels, channels}, channels, rng);
  p.b_delta = init::constant({channels}, 0.0);
  // softplus(b_delta) log-uniform in [0.01, 0.1].
  for (auto& v : p.b_delta.mutable_data()) {
    const double dt = std::exp(rng.uniform(std::log(0.01), std::log(0.1)));
    v = softplus_inverse(dt);
  }
  p.w_b = init::kaiming_uniform({state_dim, channels}, channels, rng);
  p.b_b = init::constant({state_dim}, 0.0);
  p.w_c = init::kaiming_uniform({state_dim, channels}, channels, rng);
  p.b_c = init::constant({state_dim}, 0.0);
  p.a_log = init::constant({channels, state_dim}, 0.0);
  auto a = p.a_log.mutable_data();
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t s = 0; s < state_dim; ++s) a[static_cast<std::size_t>(c * state_dim + s)] = std::log(static_cast<double>(s + 1));
  p.d = init::constant({channels}, 1.0);
  p.norm_gamma = init::constant({channels}, 1.0);
  p.norm_beta = init::constant({channels}, 0.0);
  return p;
}

std::vector<Tensor> SsmParams::parameters() const {
  return {w_delta, b_delta, w_b, b_b, w_c, b_c, a_log, d, norm_gamma, norm_beta};
}

VssBlockParams VssBlockParams::init(std::int64_t channels, std::int64_t state_dim, double expansion, Rng& rng) {
  if (channels < 1 || state_dim < 1 || expansion <= 0) throw ValidationError("VssBlockParams: invalid sizes");
  VssBlockParams p;
  p.channels = channels;
  p.inner = std::max<std::int64_t>(1, std::llround(expansion * static_cast<double>(channels)));
  p.ffn_hidden = p.inner;
  p.ln1_gamma = init::constant({channels}, 1.0);
  p.ln1_beta = init::constant({channels}, 0.0);
  p.w_in = init::kaiming_uniform({p.inner, channels}, channels, rng);
  p.b_in = init::constant({p.inner}, 0.0);
  p.dw_weight = init::kaiming_uniform({p.inner, 1, 3, 3}, 9, rng);
  p.dw_bias = init::constant({p.inner}, 0.0);
  p.ssm = SsmParams::init(p.inner, state_dim, rng);
  p.w_out = init::kaiming_uniform({channels, p.inner}, p.inner, rng);
  p.b_out = init::constant({channels}, 0.0);
  p.ln2_gamma = init::constant({channels}, 1.0);
  p.ln2_beta = init::constant({channels}, 0.0);
  p.ffn_w1 = init::kaiming_uniform({p.ffn_hidden, channels}, channels, rng);
  p.ffn_b1 = init::constant({p.ffn_hidden}, 0.0);
  p.ffn_w2 = init::kaiming_uniform({channels, p.ffn_hidden}, p.ffn_hidden, rng);
  p.ffn_b2 = init::constant({channels}, 0.0);
  return p;
}

void VssBlockParams::zero_output_projections() {
  for (Tensor* t : {&w_out, &b_out, &ffn_w2, &ffn_b2}) {
    for (auto& v : t->mutable_data()) v = 0.0;
  }
}

std::vector<Tensor> VssBlockParams::parameters() const {
  std::vector<Tensor> out = {ln1_gamma, ln1_beta, w_in, b_in, dw_weight, dw_bias};
  const auto s = ssm.parameters();
  out.insert(out.end(), s.begin(), s.end());
  out.insert(out.end(), {w_out, b_out, ln2_gamma, ln2_beta, ffn_w1, ffn_b1, ffn_w2, ffn_b2});
  return out;
}

namespace {

// h = decay * h + u * b; returns <c, h>.
inline double step_state(double* __restrict h, const double* __restrict decay, const double* __restrict b,
                         const double* __restrict c, double u, std::int64_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::int64_t j = 0; j < n; ++j) {
    h[j] = decay[j] * h[j] + u * b[j];
    acc += c[j] * h[j];
  }
  return acc;
}

inline void advance_state(double* __restrict h, const double* __restrict prev, const double* __restrict decay,
                          const double* __restrict b, double u, std::int64_t n) {
#pragma omp simd
  for (std::int64_t j = 0; j < n; ++j) h[j] = decay[j] * prev[j] + u * b[j];
}

struct StepInputs {
  const double* h;
  const double* prev;
  const double* decay;
  const double* a;
  const double* b;
  const double* c;
};

struct StepGrad {
  double delta;
  double x;
};

// Reverse of h_k = exp(dl * a) * h_{k-1} + dl * b * x with y = <c, h_k>.
// gh holds dL/dh_k from later steps on entry and dL/dh_{k-1} on exit.
inline StepGrad step_state_backward(const StepInputs& in, double gy, double dl, double xv, double* __restrict gh,
                                    double* __restrict ga, double* __restrict gb, double* __restrict gc,
                                    std::int64_t n) {
  const double* __restrict h = in.h;
  const double* __restrict prev = in.prev;
  const double* __restrict decay = in.decay;
  const double* __restrict a = in.a;
  const double* __restrict b = in.b;
  const double* __restrict c = in.c;
  double gdl = 0.0, gbx = 0.0;
#pragma omp simd reduction(+ : gdl, gbx)
  for (std::int64_t j = 0; j < n; ++j) {
    gc[j] += gy * h[j];
    const double gt = gh[j] + gy * c[j];
    gbx += gt * b[j];
    gb[j] += gt * dl * xv;
    const double gdecay = gt * prev[j] * decay[j];
    gdl += gdecay * a[j];
    ga[j] += gdecay * dl;
    gh[j] = gt * decay[j];
  }
  return {gdl + gbx * xv, gbx * dl};
}

}  // namespace

Tensor selective_scan_core(const Tensor& x, const Tensor& delta, const Tensor& b, const Tensor& c,
                           const Tensor& a_log, const Tensor& d_skip, std::span<const ScanDirection> directions) {
  const ScanDims s = check_scan_inputs(x, delta, b, c, a_log, d_skip);
  const std::int64_t cd = s.ch * s.state;
  std::vector<ScanDirection> dirs(directions.begin(), directions.end());

  std::vector<double> a_mat(static_cast<std::size_t>(cd));
  for (std::int64_t i = 0; i < cd; ++i) a_mat[static_cast<std::size_t>(i)] = -std::exp(a_log.data()[static_cast<std::size_t>(i)]);

  const double* xs = x.data().data();
  const double* ds = delta.data().data();
  const double* bs = b.data().data();
  const double* cs = c.data().data();
  const double* dk = d_skip.data().data();

  // Discretized decay exp(delta * A) depends only on the position, so all
  // directions share it.
  std::vector<double> decay(static_cast<std::size_t>(s.n * s.len * cd));
  for (std::int64_t q = 0; q < s.n * s.len; ++q) {
    double* dq = decay.data() + q * cd;
    for (std::int64_t ch = 0; ch < s.ch; ++ch) {
      const double dl = ds[q * s.ch + ch];
      const double* ar = a_mat.data() + ch * s.state;
      double* dr = dq + ch * s.state;
      for (std::int64_t k = 0; k < s.state; ++k) dr[k] = std::exp(dl * ar[k]);
    }
  }

  std::vector<double> out(static_cast<std::size_t>(s.n * s.len * s.ch), 0.0);
  std::vector<double> h(static_cast<std::size_t>(cd));
  const double ndirs = static_cast<double>(dirs.size());
  for (std::int64_t n = 0; n < s.n; ++n) {
    const std::int64_t base = n * s.len;
    for (auto dir : dirs) {
      std::fill(h.begin(), h.end(), 0.0);
      for (std::int64_t k = 0; k < s.len; ++k) {
        const std::int64_t q = base + scan_position(dir, k, s.h, s.w);
        const double* bq = bs + q * s.state;
        const double* cq = cs + q * s.state;
        const double* dq = decay.data() + q * cd;
        for (std::int64_t ch = 0; ch < s.ch; ++ch) {
          const double u = ds[q * s.ch + ch] * xs[q * s.ch + ch];
          out[static_cast<std::size_t>(q * s.ch + ch)] +=
              step_state(h.data() + ch * s.state, dq + ch * s.state, bq, cq, u, s.state);
        }
      }
    }
    for (std::int64_t q = base; q < base + s.len; ++q)
      for (std::int64_t ch = 0; ch < s.ch; ++ch)
        out[static_cast<std::size_t>(q * s.ch + ch)] += ndirs * dk[ch] * xs[q * s.ch + ch];
  }

  return make_result(
      x.shape(), std::move(out), "selective_scan", {x, delta, b, c, a_log, d_skip},
      [x, delta, b, c, a_log, d_skip, s, dirs, a_mat = std::move(a_mat), decay = std::move(decay)](const TensorImpl& o) {
        const std::int64_t cd = s.ch * s.state;
        const double* xs = x.data().data();
        const double* ds = delta.data().data();
        const double* bs = b.data().data();
        const double* cs = c.data().data();
        const double* dk = d_skip.data().data();
        const double* gy = o.grad.data();

        // Accumulate into local buffers; copy into tape grads at the end.
        std::vector<double> gx(static_cast<std::size_t>(x.numel()), 0.0);
        std::vector<double> gdelta(gx.size(), 0.0);
        std::vector<double> gb(static_cast<std::size_t>(b.numel()), 0.0);
        std::vector<double> gc(gb.size(), 0.0);
        std::vector<double> ga(static_cast<std::size_t>(cd), 0.0);
        std::vector<double> gd(static_cast<std::size_t>(s.ch), 0.0);

        std::vector<double> hist(static_cast<std::size_t>(s.len * cd));
        std::vector<double> gh(static_cast<std::size_t>(cd));
        const std::vector<double> zeros(static_cast<std::size_t>(cd), 0.0);
        const double ndirs = static_cast<double>(dirs.size());

        for (std::int64_t n = 0; n < s.n; ++n) {
          const std::int64_t base = n * s.len;
          for (std::int64_t q = base; q < base + s.len; ++q) {
            for (std::int64_t ch = 0; ch < s.ch; ++ch) {
              const double g = gy[q * s.ch + ch];
              gd[static_cast<std::size_t>(ch)] += ndirs * g * xs[q * s.ch + ch];
              gx[static_cast<std::size_t>(q * s.ch + ch)] += ndirs * g * dk[ch];
            }
          }
          for (auto dir : dirs) {
            // Recompute the forward state history for this path.
            for (std::int64_t k = 0; k < s.len; ++k) {
              const std::int64_t q = base + scan_position(dir, k, s.h, s.w);
              const double* bq = bs + q * s.state;
              const double* dq = decay.data() + q * cd;
              double* hk = hist.data() + k * cd;
              const double* hp = k > 0 ? hk - cd : nullptr;
              const double* hprev = hp ? hp : zeros.data();
              for (std::int64_t ch = 0; ch < s.ch; ++ch) {
                const double u = ds[q * s.ch + ch] * xs[q * s.ch + ch];
                const std::int64_t o = ch * s.state;
                advance_state(hk + o, hprev + o, dq + o, bq, u, s.state);
              }
            }
            std::fill(gh.begin(), gh.end(), 0.0);
            for (std::int64_t k = s.len - 1; k >= 0; --k) {
              const std::int64_t q = base + scan_position(dir, k, s.h, s.w);
              const double* bq = bs + q * s.state;
              const double* cq = cs + q * s.state;
              const double* dq = decay.data() + q * cd;
              const double* hk = hist.data() + k * cd;
              const double* hp = k > 0 ? hk - cd : nullptr;
              double* gbq = gb.data() + q * s.state;
              double* gcq = gc.data() + q * s.state;
              const double* hprev = hp ? hp : zeros.data();
              for (std::int64_t ch = 0; ch < s.ch; ++ch) {
                const std::int64_t o = ch * s.state;
                const StepGrad sg = step_state_backward(
                    {hk + o, hprev + o, dq + o, a_mat.data() + o, bq, cq}, gy[q * s.ch + ch], ds[q * s.ch + ch],
                    xs[q * s.ch + ch], gh.data() + o, ga.data() + o, gbq, gcq, s.state);
                gdelta[static_cast<std::size_t>(q * s.ch + ch)] += sg.delta;
                gx[static_cast<std::size_t>(q * s.ch + ch)] += sg.x;
              }
            }
          }
        }
        auto flush = [](const Tensor& t, const std::vector<double>& src) {
          if (!wants_grad(t)) return;
          auto& g = grad_of(t);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
        };
        flush(x, gx);
        flush(delta, gdelta);
        flush(b, gb);
        flush(c, gc);
        flush(d_skip, gd);
        if (wants_grad(a_log)) {
          // dA/dA_log = A.
          auto& g = grad_of(a_log);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += ga[i] * a_mat[i];
        }
      });
}

namespace {

struct Projections {
  Tensor delta, b, c;
};

Projections project(const Tensor& x_nhwc, const SsmParams& p) {
  return {ops::softplus(ops::linear(x_nhwc, p.w_delta, p.b_delta)), ops::linear(x_nhwc, p.w_b, p.b_b),
          ops::linear(x_nhwc, p.w_c, p.b_c)};
}

void check_channels(const Tensor& x, int axis, const SsmParams& p, const char* op) {
  if (x.dim(axis) != p.channels) {
    throw ValidationError(std::string(op) + ": channel axis has " + std::to_string(x.dim(axis)) +
                          " entries, params expect " + std::to_string(p.channels));
  }
}

}  // namespace

Tensor selective_scan_1d(const Tensor& x, const SsmParams& params) {
  if (x.ndim() != 2 || x.dim(0) < 1) throw ValidationError("selective_scan_1d: x must be [L,C] with L >= 1");
  check_channels(x, 1, params, "selective_scan_1d");
  const std::int64_t len = x.dim(0), ch = x.dim(1);
  const Tensor x4 = ops::reshape(x, {1, 1, len, ch});
  const auto pr = project(x4, params);
  const ScanDirection fwd[1] = {ScanDirection::kRowForward};
  const Tensor y = selective_scan_core(x4, pr.delta, pr.b, pr.c, params.a_log, params.d, fwd);
  return ops::reshape(y, {len, ch});
}

Tensor ss2d_sum_nhwc(const Tensor& x, const SsmParams& params) {
  if (x.ndim() != 4) throw ValidationError("ss2d: input must be rank 4");
  check_channels(x, 3, params, "ss2d");
  const auto pr = project(x, params);
  return selective_scan_core(x, pr.delta, pr.b, pr.c, params.a_log, params.d, kAllDirections);
}

Tensor ss2d_nhwc(const Tensor& x, const SsmParams& params) {
  return ops::layer_norm(ss2d_sum_nhwc(x, params), params.norm_gamma, params.norm_beta, -1);
}

Tensor ss2d(const Tensor& x, const SsmParams& params) {
  if (x.ndim() != 4) throw ValidationError("ss2d: input must be [N,C,H,W]");
  check_channels(x, 1, params, "ss2d");
  return ops::permute(ss2d_nhwc(ops::permute(x, kToNhwc), params), kToNchw);
}

Tensor rvmb(const Tensor& x, const VssBlockParams& p) {
  if (x.ndim() != 4) throw ValidationError("rvmb: input must be [N,C,H,W], got " + shape_str(x.shape()));
  if (x.dim(1) != p.channels) {
    throw ValidationError("rvmb: channel axis has " + std::to_string(x.dim(1)) + " entries, block expects " +
                          std::to_string(p.channels));
  }
  const Tensor xl = ops::permute(x, kToNhwc);
  // SS2D branch: Linear -> DWConv -> SiLU -> SS2D (+LN) -> Linear.
  Tensor u = ops::linear(ops::layer_norm(xl, p.ln1_gamma, p.ln1_beta, -1), p.w_in, p.b_in);
  u = ops::permute(u, kToNchw);
  u = ops::silu(ops::depthwise_conv2d(u, p.dw_weight, p.dw_bias, 1));
  u = ss2d_nhwc(ops::permute(u, kToNhwc), p.ssm);
  const Tensor y = ops::add(xl, ops::linear(u, p.w_out, p.b_out));
  // FFN branch.
  Tensor f = ops::linear(ops::layer_norm(y, p.ln2_gamma, p.ln2_beta, -1), p.ffn_w1, p.ffn_b1);
  f = ops::linear(ops::silu(f), p.ffn_w2, p.ffn_b2);
  return ops::permute(ops::add(y, f), kToNchw);
}

}  // namespace gpcn
