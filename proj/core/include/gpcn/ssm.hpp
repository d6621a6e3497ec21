// SPDX-License-Identifier: Apache-2.0
//
// Selective state-space scan and the residual VSS block built on it.
//
// Recurrence, per position t along a scan path and per channel c:
//   delta_t = softplus(W_delta x_t + b_delta)
//   B_t = W_B x_t + b_B,  C_t = W_C x_t + b_C
//   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t,   h_0 = 0
//   y_t = <C_t, h_t> + D * x_t
// with A = -exp(A_log) < 0, so exp(delta * A) lies in (0, 1).
#pragma once

#include <span>
#include <vector>

#include "gpcn/rng.hpp"
#include "gpcn/tensor.hpp"

namespace gpcn {

struct SsmParams {
  std::int64_t channels = 0;
  std::int64_t state_dim = 0;
  Tensor w_delta, b_delta;  // [C,C], [C]
  Tensor w_b, b_b;          // [d,C], [d]
  Tensor w_c, b_c;          // [d,C], [d]
  Tensor a_log;             // [C,d]
  Tensor d;                 // [C]
  Tensor norm_gamma, norm_beta;  // [C], applied after the four-way sum in ss2d

  static SsmParams init(std::int64_t channels, std::int64_t state_dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

struct VssBlockParams {
  std::int64_t channels = 0;
  std::int64_t inner = 0;
  std::int64_t ffn_hidden = 0;
  Tensor ln1_gamma, ln1_beta;
  Tensor w_in, b_in;          // [inner, C]
  Tensor dw_weight, dw_bias;  // [inner, 1, 3, 3]
  SsmParams ssm;              // on `inner` channels
  Tensor w_out, b_out;        // [C, inner]
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn_w1, ffn_b1;  // [hidden, C]
  Tensor ffn_w2, ffn_b2;  // [C, hidden]

  static VssBlockParams init(std::int64_t channels, std::int64_t state_dim, double expansion, Rng& rng);
  /// Zeroes the SS2D-branch and FFN output projections, making the block an exact identity.
  void zero_output_projections();
  std::vector<Tensor> parameters() const;
};

enum class ScanDirection { kRowForward, kRowReverse, kColForward, kColReverse };

inline constexpr ScanDirection kAllDirections[4] = {ScanDirection::kRowForward, ScanDirection::kRowReverse,
                                                    ScanDirection::kColForward, ScanDirection::kColReverse};

/// Position (flat row-major index into an h x w grid) visited at step k.
std::int64_t scan_position(ScanDirection dir, std::int64_t k, std::int64_t h, std::int64_t w);

/// Fused recurrence over channel-last inputs. x, delta: [N,H,W,C]; b, c: [N,H,W,d];
/// a_log: [C,d]; d_skip: [C]. Returns the sum over `directions` of the scan
/// outputs, each including its own D * x term.
Tensor selective_scan_core(const Tensor& x, const Tensor& delta, const Tensor& b, const Tensor& c,
                           const Tensor& a_log, const Tensor& d_skip, std::span<const ScanDirection> directions);

/// Single forward scan over a [L,C] sequence.
Tensor selective_scan_1d(const Tensor& x, const SsmParams& params);

/// Four-direction 2-D selective scan summed and layer-normalized. Channel-last variant.
Tensor ss2d_nhwc(const Tensor& x, const SsmParams& params);
/// Same on [N,C,H,W].
Tensor ss2d(const Tensor& x, const SsmParams& params);
/// ss2d without the final layer norm (the raw four-way sum), channel-last.
Tensor ss2d_sum_nhwc(const Tensor& x, const SsmParams& params);

/// Residual VSS block on [N,C,H,W]:
///   y = x + W_out ss2d(silu(dwconv(W_in LN1(x))));  z = y + FFN(LN2(y))
Tensor rvmb(const Tensor& x, const VssBlockParams& params);

}  // namespace gpcn
