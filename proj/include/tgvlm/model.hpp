#pragma once

// The complete region-aware encoder-decoder:
//
//   global features -> projection -> 2-token memory
//   region features -> region MLP -> injected at <Rj> placeholders
//   encoder -> placeholder rows -> cross-attention over memory
//           -> MoE (or identity) -> re-injected -> decoder

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tgvlm/features.hpp"
#include "tgvlm/fusion.hpp"
#include "tgvlm/moe.hpp"
#include "tgvlm/seq2seq.hpp"

namespace tgvlm {

struct ModelConfig {
  FusionConfig fusion;
  MoeConfig moe;
  Seq2SeqConfig seq;

  // Propagates the shared widths (d_model, heads) from seq into fusion/moe.
  void sync_widths();
  void validate() const;
};

struct EncodedContext {
  Tensor states;  // re-injected encoder states fed to the decoder
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> placeholder_positions;
  std::vector<GateDecision> decisions;  // empty when MoE is bypassed
};

class TinyGiantModel {
 public:
  TinyGiantModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  bool has_moe() const { return moe_.has_value(); }

  // Named parameters in a fixed order (the checkpoint order).
  ParameterList parameters() const;
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;

  EncodedContext encode_context(std::span<const int> question_ids, const SampleFeatures& features,
                                bool moe_enabled) const;
  // Teacher-forced mean NLL of `targets` for one sample.
  Tensor full_forward(std::span<const int> question_ids, const SampleFeatures& features, std::span<const int> targets,
                      bool moe_enabled, std::vector<GateDecision>* decisions = nullptr) const;
  std::vector<int> generate(std::span<const int> question_ids, const SampleFeatures& features,
                            std::size_t max_new_tokens, bool moe_enabled, const TokenFilter& filter = nullptr) const;

  const GlobalProjection& global_projection() const { return global_proj_; }
  const RegionMlp& region_mlp_params() const { return region_mlp_; }
  const CrossAttention& cross_attention() const { return cross_attn_; }
  const MoeLayer& moe() const;
  const Seq2Seq& seq2seq() const { return seq_; }
  Seq2Seq& seq2seq() { return seq_; }

 private:
  TinyGiantModel(const ModelConfig& config, std::unique_ptr<ParamInit> init);

  ModelConfig config_;
  GlobalProjection global_proj_;
  RegionMlp region_mlp_;
  CrossAttention cross_attn_;
  std::optional<MoeLayer> moe_;
  Seq2Seq seq_;
};

}  // namespace tgvlm
