#include "tgvlm/model.hpp"

#include <string>

#include "tgvlm/errors.hpp"

namespace tgvlm {

void ModelConfig::sync_widths() {
  fusion.d_model = seq.d_model;
  fusion.n_heads = seq.n_heads;
  moe.d = seq.d_model;
}

void ModelConfig::validate() const {
  seq.validate();
  if (fusion.d_model != seq.d_model || moe.d != seq.d_model) {
    throw InputError("fusion, MoE and seq2seq widths disagree");
  }
  if (fusion.n_heads == 0 || fusion.d_model % fusion.n_heads != 0) {
    throw InputError("fusion attention heads do not divide d_model");
  }
  if (moe.enabled) moe.validate();
}

namespace {

std::optional<MoeLayer> make_moe(const ModelConfig& config, ParamInit& init) {
  if (!config.moe.enabled) return std::nullopt;
  return MoeLayer::create(config.moe, init);
}

ModelConfig validated(const ModelConfig& config) {
  config.validate();
  return config;
}

}  // namespace

TinyGiantModel::TinyGiantModel(const ModelConfig& config, std::uint64_t seed)
    : TinyGiantModel(config, std::make_unique<ParamInit>(seed)) {}

TinyGiantModel::TinyGiantModel(const ModelConfig& config, std::unique_ptr<ParamInit> init)
    : config_(validated(config)),
      global_proj_(GlobalProjection::create(config_.fusion, *init)),
      region_mlp_(RegionMlp::create(config_.fusion, *init)),
      cross_attn_(CrossAttention::create(config_.fusion, *init)),
      moe_(make_moe(config_, *init)),
      seq_(config_.seq, *init) {}

const MoeLayer& TinyGiantModel::moe() const {
  if (!moe_) throw InputError("model was built without an MoE layer");
  return *moe_;
}

ParameterList TinyGiantModel::parameters() const {
  ParameterList out;
  global_proj_.collect("global_proj", out);
  region_mlp_.collect("region_mlp", out);
  cross_attn_.collect("cross_attn", out);
  if (moe_) moe_->collect("moe", out);
  seq_.collect("seq2seq", out);
  return out;
}

std::vector<Tensor> TinyGiantModel::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t TinyGiantModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& p : parameters()) n += p.tensor.numel();
  return n;
}

EncodedContext TinyGiantModel::encode_context(std::span<const int> question_ids, const SampleFeatures& features,
                                              bool moe_enabled) const {
  if (moe_enabled && !moe_) throw InputError("MoE requested but the model has no MoE layer");
  std::vector<Tensor> regions;
  regions.reserve(features.regions.size());
  for (const RegionFeature& r : features.regions) regions.push_back(region_mlp(r, region_mlp_));
  const InjectedSequence injected = inject_ids(question_ids, regions, seq_.token_embedding());
  EncoderOutput enc = seq_.encode_sequence(injected.embeddings, injected.attention_mask);

  EncodedContext ctx;
  ctx.mask = enc.attention_mask;
  ctx.placeholder_positions = injected.placeholder_positions;
  if (regions.empty()) {
    ctx.states = enc.states;
    return ctx;
  }
  const FusedGlobal global = fuse_global(features.global, global_proj_);
  const Tensor region_ctx = gather_rows(enc.states, injected.placeholder_positions);
  Tensor fused = cross_attend(region_ctx, global.memory, cross_attn_);
  if (moe_enabled) {
    MoeOutput routed = moe_forward(fused, *moe_);
    fused = routed.z;
    ctx.decisions = std::move(routed.decisions);
  }
  ctx.states = reinject(enc.states, injected.placeholder_positions, fused);
  return ctx;
}

Tensor TinyGiantModel::full_forward(std::span<const int> question_ids, const SampleFeatures& features,
                                    std::span<const int> targets, bool moe_enabled,
                                    std::vector<GateDecision>* decisions) const {
  EncodedContext ctx = encode_context(question_ids, features, moe_enabled);
  if (decisions != nullptr) *decisions = ctx.decisions;
  return seq_.decode_loss(ctx.states, ctx.mask, targets);
}

std::vector<int> TinyGiantModel::generate(std::span<const int> question_ids, const SampleFeatures& features,
                                          std::size_t max_new_tokens, bool moe_enabled,
                                          const TokenFilter& filter) const {
  Tape::NoGrad no_grad;
  const EncodedContext ctx = encode_context(question_ids, features, moe_enabled);
  return seq_.generate(ctx.states, ctx.mask, max_new_tokens, filter);
}

}  // namespace tgvlm
