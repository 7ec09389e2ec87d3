#include "tgvlm/fusion.hpp"

#include <string>

#include "tgvlm/errors.hpp"

namespace tgvlm {

namespace {

Tensor row_vector(const std::vector<double>& v) { return Tensor::from({1, v.size()}, v); }

}  // namespace

GlobalProjection GlobalProjection::create(const FusionConfig& config, ParamInit& init) {
  return {Linear::create(config.rgb_dim, config.d_proj, init), Linear::create(config.depth_dim, config.d_proj, init)};
}

void GlobalProjection::collect(const std::string& prefix, ParameterList& out) const {
  rgb.collect(prefix + ".rgb", out);
  depth.collect(prefix + ".depth", out);
}

FusedGlobal fuse_global(const GlobalFeatures& features, const GlobalProjection& proj) {
  if (features.rgb.size() != proj.rgb.in_features() || features.depth.size() != proj.depth.in_features()) {
    throw DimensionError("global features (" + std::to_string(features.rgb.size()) + ", " +
                         std::to_string(features.depth.size()) + ") do not match the projection inputs (" +
                         std::to_string(proj.rgb.in_features()) + ", " + std::to_string(proj.depth.in_features()) +
                         ")");
  }
  const Tensor f_rgb = proj.rgb(row_vector(features.rgb));
  const Tensor f_depth = proj.depth(row_vector(features.depth));
  return {concat({f_rgb, f_depth}, 1), concat({f_rgb, f_depth}, 0)};
}

RegionMlp RegionMlp::create(const FusionConfig& config, ParamInit& init) {
  RegionMlp m;
  m.rgb = Linear::create(config.rgb_dim, config.d_proj, init);
  m.depth = Linear::create(config.depth_dim, config.d_proj, init);
  m.fc1 = Linear::create(2 * config.d_proj, config.region_hidden, init);
  m.fc2 = Linear::create(config.region_hidden, config.d_model, init);
  return m;
}

void RegionMlp::collect(const std::string& prefix, ParameterList& out) const {
  rgb.collect(prefix + ".rgb", out);
  depth.collect(prefix + ".depth", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor region_mlp(const RegionFeature& region, const RegionMlp& mlp) {
  if (region.rgb.size() != mlp.rgb.in_features() || region.depth.size() != mlp.depth.in_features()) {
    throw DimensionError("region features do not match the region projection inputs");
  }
  const Tensor h = concat({mlp.rgb(row_vector(region.rgb)), mlp.depth(row_vector(region.depth))}, 1);
  return relu(mlp.fc2(relu(mlp.fc1(h))));
}

InjectedSequence inject_ids(std::span<const int> token_ids, std::span<const Tensor> region_feats,
                            const Tensor& token_embedding) {
  InjectedSequence seq;
  seq.token_ids.assign(token_ids.begin(), token_ids.end());
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (Vocabulary::is_region_token(token_ids[i])) {
      const int expected = Vocabulary::region_token(static_cast<int>(seq.placeholder_positions.size()));
      if (token_ids[i] != expected) {
        throw InjectionError("placeholder <R" + std::to_string(token_ids[i] - Vocabulary::kFirstRegion) +
                             "> appears where <R" + std::to_string(expected - Vocabulary::kFirstRegion) +
                             "> was expected");
      }
      seq.placeholder_positions.push_back(i);
    }
  }
  if (seq.placeholder_positions.size() != region_feats.size()) {
    throw InjectionError("expected " + std::to_string(region_feats.size()) + " region placeholders, found " +
                         std::to_string(seq.placeholder_positions.size()));
  }
  seq.attention_mask.assign(token_ids.size(), 1);
  seq.embeddings = embedding_lookup(token_embedding, token_ids);
  if (!region_feats.empty()) {
    const Tensor stacked = concat(region_feats, 0);
    if (stacked.cols() != token_embedding.cols()) {
      throw DimensionError("region features of width " + std::to_string(stacked.cols()) +
                           " cannot replace token embeddings of width " + std::to_string(token_embedding.cols()));
    }
    seq.embeddings = replace_rows(seq.embeddings, seq.placeholder_positions, stacked);
  }
  return seq;
}

InjectedSequence inject(std::string_view question, std::span<const Tensor> region_feats, const Vocabulary& vocab,
                        const Tensor& token_embedding) {
  const std::vector<int> ids = vocab.encode(question);
  return inject_ids(ids, region_feats, token_embedding);
}

CrossAttention CrossAttention::create(const FusionConfig& config, ParamInit& init) {
  return {MultiHeadAttention::create(config.d_model, config.d_proj, config.d_model, config.n_heads, init)};
}

Tensor cross_attend(const Tensor& region_ctx, const Tensor& memory, const CrossAttention& attn,
                    std::vector<Tensor>* weights) {
  return add(attn.attention(region_ctx, memory, Tensor(), weights), region_ctx);
}

Tensor reinject(const Tensor& states, std::span<const std::size_t> positions, const Tensor& z) {
  return replace_rows(states, positions, z);
}

}  // namespace tgvlm
