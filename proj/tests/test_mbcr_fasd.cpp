// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <set>

#include "gpcn/fasd.hpp"
#include "gpcn/mbcr.hpp"
#include "test_util.hpp"

namespace gpcn {
namespace {

using testing::gradcheck;
using testing::kGradTol;
using testing::max_abs_diff;
using testing::naive_dft;
using testing::phase_safe_input;
using testing::random_tensor;

Tensor identity_conv(std::int64_t c) {
  std::vector<double> w(static_cast<std::size_t>(c * c * 9), 0.0);
  for (std::int64_t i = 0; i < c; ++i) w[static_cast<std::size_t>((i * c + i) * 9 + 4)] = 1.0;
  return Tensor::from_data({c, c, 3, 3}, std::move(w));
}

// ---- MBCR ----

TEST(Mbcr, ZeroInputZeroOutput) {
  Rng rng(1);
  MbcrBlockParams p = MbcrBlockParams::init(3, 4, 2.0, rng);
  // Zero input through the RVMB still sees LN(0) = beta = 0 and zero biases.
  const Tensor y = mbcr_forward(Tensor::zeros({1, 3, 8, 8}), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Mbcr, ShapePreserved) {
  Rng rng(2);
  const MbcrBlockParams p = MbcrBlockParams::init(4, 4, 2.0, rng);
  const Tensor x = random_tensor({2, 4, 16, 16}, rng);
  EXPECT_EQ(mbcr_forward(x, p).shape(), x.shape());
}

TEST(Mbcr, RejectsExtentsNotDivisibleByFour) {
  Rng rng(3);
  const MbcrBlockParams p = MbcrBlockParams::init(2, 4, 2.0, rng);
  EXPECT_THROW(mbcr_forward(Tensor::zeros({1, 2, 6, 8}), p), ValidationError);
}

TEST(Mbcr, IdentityRefinementCollapsesPyramid) {
  // With identity refinement the level-2 branch reconstructs LL1 exactly, so
  // the literal merge gives LL1'' = 2 LL1 and out = 2R + IWT(LL1, 0, 0, 0).
  Rng rng(4);
  const Tensor r = random_tensor({1, 1, 8, 8}, rng);
  MbcrTrace trace;
  const Tensor out = mbcr_pyramid(r, [](const Tensor& t) { return t; }, &trace);
  const Tensor zero = Tensor::zeros(trace.level1.ll.shape());
  const Tensor expected = ops::add(ops::scale(r, 2.0), idwt2({trace.level1.ll, zero, zero, zero}));
  EXPECT_LE(max_abs_diff(out, expected), 1e-10);
  // Level-2 pyramid alone is a perfect reconstruction.
  EXPECT_LE(max_abs_diff(idwt2(trace.level2), trace.level1.ll), 1e-10);
  EXPECT_LE(max_abs_diff(idwt2(trace.level1), r), 1e-10);
}

TEST(Mbcr, IdentityBlockWithIdentityEntryConv) {
  Rng rng(5);
  MbcrBlockParams p = MbcrBlockParams::init(1, 4, 2.0, rng);
  p.entry_weight = identity_conv(1);
  p.entry_bias = Tensor::zeros({1});
  p.vss.zero_output_projections();
  const Tensor x = random_tensor({1, 1, 8, 8}, rng);
  const SubbandSet s = dwt2(x);
  const Tensor zero = Tensor::zeros(s.ll.shape());
  const Tensor expected = ops::add(ops::scale(x, 2.0), idwt2({s.ll, zero, zero, zero}));
  EXPECT_LE(max_abs_diff(mbcr_forward(x, p), expected), 1e-10);
}

TEST(Mbcr, ConstantImageRoutesOnlyThroughLowPass) {
  MbcrTrace trace;
  mbcr_pyramid(Tensor::full({1, 2, 8, 8}, 1.7), [](const Tensor& t) { return ops::silu(t); }, &trace);
  for (const SubbandSet* s : {&trace.level1, &trace.level2}) {
    for (const Tensor* band : {&s->lh, &s->hl, &s->hh})
      for (double v : band->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Mbcr, SharedBlockSeesAllEightSubbands) {
  int calls = 0;
  std::int64_t batched = 0;
  mbcr_pyramid(Tensor::zeros({2, 1, 8, 8}), [&](const Tensor& t) {
    ++calls;
    batched += t.dim(0);
    return t;
  });
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(batched, 2 * 8);
}

TEST(Mbcr, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const MbcrBlockParams p = MbcrBlockParams::init(2, 4, 2.0, rng);
  const auto r = gradcheck([&](const std::vector<Tensor>& v) { return mbcr_forward(v[0], p); },
                           {random_tensor({1, 2, 8, 8}, rng)});
  EXPECT_LE(r.worst_rel, kGradTol);
}

TEST(Mbcr, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(7);
  MbcrBlockParams p = MbcrBlockParams::init(2, 3, 2.0, rng);
  const Tensor x = random_tensor({1, 2, 8, 8}, rng);
  const auto r = gradcheck(
      [&](const std::vector<Tensor>& v) {
        MbcrBlockParams q = p;
        q.entry_weight = v[0];
        q.entry_bias = v[1];
        q.vss.w_in = v[2];
        q.vss.ssm.w_b = v[3];
        q.vss.w_out = v[4];
        q.vss.ffn_w2 = v[5];
        return mbcr_forward(x, q);
      },
      {p.entry_weight, p.entry_bias, p.vss.w_in, p.vss.ssm.w_b, p.vss.w_out, p.vss.ffn_w2});
  EXPECT_LE(r.worst_rel, kGradTol) << "input " << r.worst_input;
}

TEST(PadToMultiple, AlreadyMultipleUnchanged) {
  Rng rng(8);
  const Tensor x = random_tensor({1, 1, 8, 12}, rng);
  const PaddedTensor p = pad_to_multiple(x);
  EXPECT_TRUE(testing::bitwise_equal(p.value, x));
  EXPECT_TRUE(testing::bitwise_equal(crop_back(p), x));
}

TEST(PadToMultiple, PadThenCropRestores) {
  Rng rng(9);
  const Tensor x = random_tensor({2, 3, 5, 7}, rng);
  const PaddedTensor p = pad_to_multiple(x);
  EXPECT_EQ(p.value.shape(), (Shape{2, 3, 8, 8}));
  EXPECT_TRUE(testing::bitwise_equal(crop_back(p), x));
}

TEST(PadToMultiple, RampReflection) {
  // 3x3 ramp 3i+j padded to 4x4 mirrors row 1 and column 1 without repeating the edge.
  std::vector<double> ramp(9);
  for (int i = 0; i < 9; ++i) ramp[static_cast<std::size_t>(i)] = i;
  const Tensor p = pad_to_multiple(Tensor::from_data({1, 1, 3, 3}, ramp)).value;
  const double expected[4][4] = {{0, 1, 2, 1}, {3, 4, 5, 4}, {6, 7, 8, 7}, {3, 4, 5, 4}};
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) EXPECT_EQ(p.at({0, 0, i, j}), expected[i][j]);
}

// ---- FASD ----

TEST(Scm, TwoByTwo) {
  const Tensor m = build_scm(2, 2);
  EXPECT_EQ(m.at({2, 0, 0}), 0.0);  // DC bin is the shifted center
  std::set<double> c0;
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 2; ++j) c0.insert(m.at({0, i, j}));
  EXPECT_EQ(c0, (std::set<double>{-1.0, 0.0}));
}

TEST(Scm, MatchesDoubleLoopInShiftedLayout) {
  const Tensor m = build_scm(8, 8);
  const Tensor shifted = fftshift(ops::reshape(m, {1, 3, 8, 8}));
  for (std::int64_t u = 0; u < 8; ++u)
    for (std::int64_t v = 0; v < 8; ++v) {
      const double cu = 2.0 * static_cast<double>(u) / 8 - 1, cv = 2.0 * static_cast<double>(v) / 8 - 1;
      EXPECT_EQ(shifted.at({0, 0, u, v}), cu);
      EXPECT_EQ(shifted.at({0, 1, u, v}), cv);
      EXPECT_NEAR(shifted.at({0, 2, u, v}), std::sqrt(cu * cu + cv * cv), 1e-15);
    }
}

TEST(Scm, RangesAndRadialConsistency) {
  const Tensor m = build_scm(16, 8);
  for (std::int64_t i = 0; i < 16; ++i)
    for (std::int64_t j = 0; j < 8; ++j) {
      const double a = m.at({0, i, j}), b = m.at({1, i, j}), r = m.at({2, i, j});
      EXPECT_GE(a, -1.0);
      EXPECT_LE(a, 1.0);
      EXPECT_GE(b, -1.0);
      EXPECT_LE(b, 1.0);
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, std::sqrt(2.0));
      EXPECT_EQ(r, std::sqrt(a * a + b * b));
    }
  EXPECT_THROW(build_scm(1, 4), ValidationError);
}

TEST(ConvBlock, ZeroOutputIsPassThrough) {
  Rng rng(10);
  const ConvBlockParams same = ConvBlockParams::init(1, 1, 4, rng, true);
  const Tensor x = random_tensor({2, 1, 6, 6}, rng);
  EXPECT_TRUE(testing::bitwise_equal(conv_block(x, same), x));
  const ConvBlockParams proj = ConvBlockParams::init(4, 1, 4, rng, true);
  const Tensor x4 = random_tensor({1, 4, 6, 6}, rng);
  EXPECT_TRUE(testing::bitwise_equal(conv_block(x4, proj), ops::slice(x4, 1, 0, 1)));
}

TEST(Fasd, IdentityBranchesGiveExactZero) {
  Rng rng(11);
  const FasdBlockParams p = FasdBlockParams::init(4, rng, true);
  FasdTrace trace;
  const Tensor d = fasd_forward(random_tensor({2, 1, 16, 16}, rng), p, &trace);
  EXPECT_EQ(d.shape(), (Shape{2, 1, 16, 16}));
  for (double v : d.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(trace.imag_energy, 0.0);
}

TEST(Fasd, BranchChannelCounts) {
  Rng rng(12);
  const FasdBlockParams p = FasdBlockParams::init(4, rng);
  EXPECT_EQ(p.amplitude.in_channels, 4);
  EXPECT_EQ(p.phase1.in_channels, 1);
  EXPECT_EQ(p.phase2.in_channels, 1);
  FasdBlockParams bad = p;
  bad.amplitude = ConvBlockParams::init(1, 1, 4, rng);
  EXPECT_THROW(fasd_forward(Tensor::zeros({1, 1, 8, 8}), bad), ValidationError);
}

TEST(Fasd, RejectsNonPowerOfTwo) {
  Rng rng(13);
  const FasdBlockParams p = FasdBlockParams::init(4, rng);
  EXPECT_THROW(fasd_forward(Tensor::zeros({1, 1, 12, 16}), p), ValidationError);
}

TEST(Fasd, SymmetricAmplitudePerturbationKeepsResidualReal) {
  Rng rng(14);
  const Tensor x = random_tensor({1, 1, 8, 8}, rng);
  const ComplexSpectrum k = fft2(x);
  const AmplitudePhase ap = to_amp_phase(k);
  std::vector<double> s(64);
  for (std::int64_t u = 0; u < 8; ++u)
    for (std::int64_t v = 0; v < 8; ++v) {
      const std::int64_t mu = (8 - u) % 8, mv = (8 - v) % 8;
      if (mu * 8 + mv < u * 8 + v) {
        s[static_cast<std::size_t>(u * 8 + v)] = s[static_cast<std::size_t>(mu * 8 + mv)];
      } else {
        s[static_cast<std::size_t>(u * 8 + v)] = rng.uniform(0.5, 1.5);
      }
    }
  const Tensor amp = ops::mul(ap.amplitude, Tensor::from_data({1, 1, 8, 8}, s));
  const ComplexSpectrum refined = from_amp_phase({amp, ap.phase});
  const ComplexSpectrum dk{ops::sub(refined.re, k.re), ops::sub(refined.im, k.im)};
  const ComplexSpectrum di = ifft2_complex(dk);
  for (double v : di.im.data()) EXPECT_LE(std::abs(v), 1e-10);
}

TEST(Fasd, TrainedStyleBlocksReportImaginaryResidue) {
  Rng rng(15);
  const FasdBlockParams p = FasdBlockParams::init(4, rng, false);
  FasdTrace trace;
  fasd_forward(random_tensor({1, 1, 8, 8}, rng), p, &trace);
  EXPECT_GT(trace.real_energy, 0.0);
  EXPECT_GE(trace.imag_energy, 0.0);
}

TEST(Fasd, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  const FasdBlockParams p = FasdBlockParams::init(3, rng, false);
  const auto r = gradcheck([&](const std::vector<Tensor>& v) { return fasd_forward(v[0], p); },
                           {phase_safe_input({1, 1, 8, 8}, 100)});
  EXPECT_LE(r.worst_rel, kGradTol);
}

TEST(Fasd, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(17);
  FasdBlockParams p = FasdBlockParams::init(3, rng, false);
  const Tensor x = phase_safe_input({1, 1, 8, 8}, 200);
  const auto r = gradcheck(
      [&](const std::vector<Tensor>& v) {
        FasdBlockParams q = p;
        q.amplitude.w1 = v[0];
        q.amplitude.w2 = v[1];
        q.amplitude.proj_w = v[2];
        q.phase1.w2 = v[3];
        q.phase2.w1 = v[4];
        q.phase2.b2 = v[5];
        return fasd_forward(x, q);
      },
      {p.amplitude.w1, p.amplitude.w2, p.amplitude.proj_w, p.phase1.w2, p.phase2.w1, p.phase2.b2});
  EXPECT_LE(r.worst_rel, kGradTol) << "input " << r.worst_input;
}

TEST(LogSpectrum, ConstantImageHasSingleCenterBin) {
  const LogSpectrum ls = log_spectrum_export(Tensor::full({1, 1, 8, 8}, 2.0));
  for (std::int64_t u = 0; u < 8; ++u)
    for (std::int64_t v = 0; v < 8; ++v) {
      const double a = ls.log_amplitude.at({0, 0, u, v});
      if (u == 4 && v == 4) {
        EXPECT_NEAR(a, std::log1p(128.0), 1e-12);
      } else {
        EXPECT_NEAR(a, 0.0, 1e-12);
      }
    }
}

TEST(LogSpectrum, MatchesNaiveDft) {
  Rng rng(18);
  const Tensor x = random_tensor({1, 1, 8, 8}, rng);
  const LogSpectrum ls = log_spectrum_export(x);
  const ComplexSpectrum ref = naive_dft(x);
  for (std::int64_t u = 0; u < 8; ++u)
    for (std::int64_t v = 0; v < 8; ++v) {
      const std::int64_t su = (u + 4) % 8, sv = (v + 4) % 8;
      const double amp = std::hypot(ref.re.at({0, 0, u, v}), ref.im.at({0, 0, u, v}));
      EXPECT_NEAR(ls.log_amplitude.at({0, 0, su, sv}), std::log1p(amp), 1e-10);
      EXPECT_GE(ls.log_amplitude.at({0, 0, su, sv}), 0.0);
      if (amp > 1e-6) {
        // Compare on the circle: real bins sit on the +/-pi cut.
        const double d = ls.phase.at({0, 0, su, sv}) - std::atan2(ref.im.at({0, 0, u, v}), ref.re.at({0, 0, u, v}));
        EXPECT_NEAR(std::remainder(d, 2.0 * std::numbers::pi), 0.0, 1e-9);
      }
    }
}

}  // namespace
}  // namespace gpcn
