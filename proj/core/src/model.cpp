// SPDX-License-Identifier: Apache-2.0
#include "gpcn/model.hpp"

#include "gpcn/ops.hpp"
#include "gpcn/rng.hpp"
#include "gpcn/transforms.hpp"

namespace gpcn {

void ModelConfig::validate() const {
  if (stages < 1) throw ValidationError("model: stages must be >= 1");
  if (channels < 1) throw ValidationError("model: channels must be >= 1");
  if (state_dim < 1) throw ValidationError("model: state_dim must be >= 1");
  if (!(expansion > 0)) throw ValidationError("model: expansion must be > 0");
  if (wavelet_levels != 2) throw ValidationError("model: only two wavelet levels are supported");
  if (!(lambda_freq >= 0)) throw ValidationError("model: lambda_freq must be >= 0");
  if (fasd_hidden < 1) throw ValidationError("model: fasd_hidden must be >= 1");
  if (!enable_mbcr && !enable_fasd) throw ValidationError("model: at least one of enable_mbcr/enable_fasd must be true");
}

std::string ablation_name(Ablation which) {
  switch (which) {
    case Ablation::kFull:
      return "GPCN";
    case Ablation::kWithoutMbcr:
      return "w/o MBCR";
    case Ablation::kWithoutFasd:
      return "w/o FASD";
  }
  return "?";
}

ModelConfig ablation_variant(const ModelConfig& config, Ablation which) {
  ModelConfig out = config;
  switch (which) {
    case Ablation::kFull:
      out.enable_mbcr = true;
      out.enable_fasd = true;
      break;
    case Ablation::kWithoutMbcr:
      out.enable_mbcr = false;
      out.enable_fasd = true;
      break;
    case Ablation::kWithoutFasd:
      out.enable_mbcr = true;
      out.enable_fasd = false;
      break;
  }
  return out;
}

GpcnParams GpcnParams::init(const ModelConfig& config) {
  config.validate();
  GpcnParams p;
  p.config = config;
  Rng rng(config.seed);
  const std::int64_t c = config.channels;
  p.embed_w = init::kaiming_uniform({c, 1, 3, 3}, 9, rng);
  p.embed_b = init::constant({c}, 0.0);
  for (int t = 0; t < config.stages; ++t) {
    // Each stage draws from its own stream so ablations share the surviving weights.
    Rng stage_rng(derive_seed(config.seed, static_cast<std::uint64_t>(t) + 1));
    Rng mbcr_rng(derive_seed(stage_rng(), 1));
    Rng fasd_rng(derive_seed(stage_rng(), 2));
    StageParams s;
    if (config.enable_mbcr) s.mbcr = MbcrBlockParams::init(c, config.state_dim, config.expansion, mbcr_rng);
    if (config.enable_fasd) s.fasd = FasdBlockParams::init(config.fasd_hidden, fasd_rng, true);
    s.fuse_w = init::constant({1, c, 3, 3}, 0.0);
    s.fuse_b = init::constant({1}, 0.0);
    s.update_w = init::kaiming_uniform({c, 1, 3, 3}, 9, stage_rng);
    s.update_b = init::constant({c}, 0.0);
    p.stages.push_back(std::move(s));
  }
  p.final_w = init::constant({1, c, 3, 3}, 0.0);
  p.final_b = init::constant({1}, 0.0);
  return p;
}

namespace {

void append(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
            std::initializer_list<std::pair<const char*, Tensor>> items) {
  for (const auto& [name, t] : items) out.emplace_back(prefix + name, t);
}

void append_conv_block(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                       const ConvBlockParams& b) {
  append(out, prefix, {{"w1", b.w1}, {"b1", b.b1}, {"w2", b.w2}, {"b2", b.b2}});
  if (b.proj_w.defined()) append(out, prefix, {{"proj_w", b.proj_w}, {"proj_b", b.proj_b}});
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> GpcnParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  append(out, "embed.", {{"w", embed_w}, {"b", embed_b}});
  for (std::size_t t = 0; t < stages.size(); ++t) {
    const auto& s = stages[t];
    const std::string sp = "stage" + std::to_string(t) + ".";
    if (config.enable_mbcr) {
      const auto& v = s.mbcr.vss;
      const auto& m = v.ssm;
      append(out, sp + "mbcr.", {{"entry_w", s.mbcr.entry_weight}, {"entry_b", s.mbcr.entry_bias}});
      append(out, sp + "mbcr.vss.",
             {{"ln1_gamma", v.ln1_gamma}, {"ln1_beta", v.ln1_beta}, {"w_in", v.w_in}, {"b_in", v.b_in},
              {"dw_w", v.dw_weight}, {"dw_b", v.dw_bias}, {"w_out", v.w_out}, {"b_out", v.b_out},
              {"ln2_gamma", v.ln2_gamma}, {"ln2_beta", v.ln2_beta}, {"ffn_w1", v.ffn_w1}, {"ffn_b1", v.ffn_b1},
              {"ffn_w2", v.ffn_w2}, {"ffn_b2", v.ffn_b2}});
      append(out, sp + "mbcr.vss.ssm.",
             {{"w_delta", m.w_delta}, {"b_delta", m.b_delta}, {"w_b", m.w_b}, {"b_b", m.b_b}, {"w_c", m.w_c},
              {"b_c", m.b_c}, {"a_log", m.a_log}, {"d", m.d}, {"norm_gamma", m.norm_gamma},
              {"norm_beta", m.norm_beta}});
    }
    if (config.enable_fasd) {
      append_conv_block(out, sp + "fasd.amp.", s.fasd.amplitude);
      append_conv_block(out, sp + "fasd.phase1.", s.fasd.phase1);
      append_conv_block(out, sp + "fasd.phase2.", s.fasd.phase2);
    }
    append(out, sp, {{"fuse_w", s.fuse_w}, {"fuse_b", s.fuse_b}, {"update_w", s.update_w}, {"update_b", s.update_b}});
  }
  append(out, "final.", {{"w", final_w}, {"b", final_b}});
  return out;
}

std::vector<Tensor> GpcnParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::int64_t GpcnParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

Tensor gpcn_forward(const Tensor& nasc, const GpcnParams& params, std::vector<FasdTrace>* fasd_traces) {
  const auto& cfg = params.config;
  cfg.validate();
  if (nasc.ndim() != 4 || nasc.dim(1) != 1) {
    throw ValidationError("gpcn_forward: input must be [N,1,H,W], got " + shape_str(nasc.shape()));
  }
  const std::int64_t h = nasc.dim(2), w = nasc.dim(3);
  if (!is_power_of_two(h) || !is_power_of_two(w) || h < 16 || w < 16) {
    throw ValidationError("gpcn_forward: extents " + std::to_string(h) + "x" + std::to_string(w) +
                          " must be powers of two >= 16");
  }
  if (fasd_traces) fasd_traces->clear();
  Tensor x = nasc;
  Tensor f = ops::conv2d(nasc, params.embed_w, params.embed_b, 1);
  for (const auto& stage : params.stages) {
    Tensor next = x;
    if (cfg.enable_mbcr) next = ops::add(next, ops::conv2d(mbcr_forward(f, stage.mbcr), stage.fuse_w, stage.fuse_b, 1));
    if (cfg.enable_fasd) {
      FasdTrace trace;
      next = ops::add(next, fasd_forward(x, stage.fasd, fasd_traces ? &trace : nullptr));
      if (fasd_traces) fasd_traces->push_back(trace);
    }
    f = ops::add(f, ops::conv2d(ops::sub(next, x), stage.update_w, stage.update_b, 1));
    x = next;
  }
  return ops::add(x, ops::conv2d(f, params.final_w, params.final_b, 1));
}

LossTensors loss(const Tensor& pred, const Tensor& target, double lambda) {
  if (pred.shape() != target.shape()) {
    throw ValidationError("loss: prediction " + shape_str(pred.shape()) + " and target " +
                          shape_str(target.shape()) + " differ");
  }
  if (!(lambda >= 0)) throw ValidationError("loss: lambda must be >= 0");
  const Tensor diff = ops::sub(pred, target);
  const Tensor l_img = ops::mean(ops::abs(diff));
  const ComplexSpectrum dk = fft2(diff);
  const Tensor l_freq = ops::add(ops::mean(ops::abs(dk.re)), ops::mean(ops::abs(dk.im)));
  const Tensor l_total = ops::add(l_img, ops::scale(l_freq, lambda));
  return {l_img, l_freq, l_total};
}

LossBreakdown train_step(const Tensor& nasc, const Tensor& asc, GpcnParams& params, AdamState& adam) {
  auto plist = params.parameters();
  zero_grads(plist);
  const Tensor pred = gpcn_forward(nasc, params);
  const LossTensors l = loss(pred, asc, params.config.lambda_freq);
  const LossBreakdown values = l.values();
  l.l_total.backward();
  adam_step(plist, adam);
  return values;
}

}  // namespace gpcn
