#pragma once

// Visual-language fusion: global projection, region MLP, placeholder
// injection, cross-attention of contextualized regions over the global
// memory, and re-injection into the encoder states.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "tgvlm/features.hpp"
#include "tgvlm/nn.hpp"
#include "tgvlm/vocab.hpp"

namespace tgvlm {

struct FusionConfig {
  std::size_t rgb_dim = 32;
  std::size_t depth_dim = 32;
  std::size_t d_proj = 32;
  std::size_t region_hidden = 128;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
};

struct GlobalProjection {
  Linear rgb;
  Linear depth;

  static GlobalProjection create(const FusionConfig& config, ParamInit& init);
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct FusedGlobal {
  Tensor g;       // 1 × 2·d_proj, [proj_rgb ∥ proj_depth]
  Tensor memory;  // 2 × d_proj, row 0 = projected RGB, row 1 = projected depth
};

FusedGlobal fuse_global(const GlobalFeatures& features, const GlobalProjection& proj);

struct RegionMlp {
  Linear rgb;
  Linear depth;
  Linear fc1;
  Linear fc2;

  static RegionMlp create(const FusionConfig& config, ParamInit& init);
  void collect(const std::string& prefix, ParameterList& out) const;
};

// r = relu(W2·relu(W1·[proj_rgb(f_rgb) ∥ proj_depth(f_depth)] + b1) + b2), 1 × d_model.
Tensor region_mlp(const RegionFeature& region, const RegionMlp& mlp);

struct InjectedSequence {
  std::vector<int> token_ids;
  Tensor embeddings;  // L × d_model
  std::vector<std::size_t> placeholder_positions;
  std::vector<std::uint8_t> attention_mask;
};

// Token embeddings of `token_ids` with the row of the j-th placeholder
// (which must be <Rj>) replaced by region_feats[j].
InjectedSequence inject_ids(std::span<const int> token_ids, std::span<const Tensor> region_feats,
                            const Tensor& token_embedding);
InjectedSequence inject(std::string_view question, std::span<const Tensor> region_feats, const Vocabulary& vocab,
                        const Tensor& token_embedding);

struct CrossAttention {
  MultiHeadAttention attention;

  static CrossAttention create(const FusionConfig& config, ParamInit& init);
  void collect(const std::string& prefix, ParameterList& out) const { attention.collect(prefix, out); }
};

// C = MHA(R_ctx, memory) + R_ctx. `weights`, when given, receives one
// R × 2 attention matrix per head.
Tensor cross_attend(const Tensor& region_ctx, const Tensor& memory, const CrossAttention& attn,
                    std::vector<Tensor>* weights = nullptr);

// Rows `positions` of `states` replaced by z; everything else untouched.
Tensor reinject(const Tensor& states, std::span<const std::size_t> positions, const Tensor& z);

}  // namespace tgvlm
