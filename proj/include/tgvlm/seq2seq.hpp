#pragma once

// Small pre-norm transformer encoder-decoder with learned absolute positions,
// teacher-forced cross-entropy training and greedy decoding.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tgvlm/nn.hpp"
#include "tgvlm/vocab.hpp"

namespace tgvlm {

struct Seq2SeqConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_width = 256;
  std::size_t max_len = 48;
  int pad_id = Vocabulary::kPad;
  int eos_id = Vocabulary::kEos;

  void validate() const;
};

struct EncoderOutput {
  Tensor states;  // L × d_model
  std::vector<std::uint8_t> attention_mask;
};

struct EncoderLayer {
  LayerNorm norm_attn;
  MultiHeadAttention self_attn;
  LayerNorm norm_ffn;
  Linear ffn_in;
  Linear ffn_out;
};

struct DecoderLayer {
  LayerNorm norm_self;
  MultiHeadAttention self_attn;
  LayerNorm norm_cross;
  MultiHeadAttention cross_attn;
  LayerNorm norm_ffn;
  Linear ffn_in;
  Linear ffn_out;
};

// Returns the allowed next tokens (1 = allowed) given the prefix generated so
// far; used for grammar-constrained decoding.
using TokenFilter = std::function<std::vector<std::uint8_t>(std::span<const int> prefix)>;

class Seq2Seq {
 public:
  Seq2Seq(const Seq2SeqConfig& config, ParamInit& init);

  const Seq2SeqConfig& config() const { return config_; }
  const Tensor& token_embedding() const { return token_embedding_; }

  // Input rows at masked positions are excluded from every attention.
  EncoderOutput encode_sequence(const Tensor& embeddings, std::span<const std::uint8_t> attention_mask) const;

  // Teacher-forced logits (T × V) for decoder inputs [pad, y_1, ..., y_{T-1}].
  Tensor decoder_logits(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                        std::span<const int> decoder_inputs) const;

  // Mean NLL of `targets` (which should end with eos) under teacher forcing.
  Tensor decode_loss(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                     std::span<const int> targets) const;

  // Greedy argmax decoding, ties to the lowest id, stops at eos (excluded).
  std::vector<int> generate(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                            std::size_t max_new_tokens, const TokenFilter& filter = nullptr) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  // Test hook: zero the attention and FFN output projections of every encoder
  // layer so the encoder reduces to its residual path.
  void zero_encoder_output_projections();

 private:
  Tensor key_padding_mask(std::span<const std::uint8_t> mask, std::size_t queries) const;

  Seq2SeqConfig config_;
  Tensor token_embedding_;  // V × d_model, shared by encoder and decoder inputs
  Tensor encoder_positions_;
  Tensor decoder_positions_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  LayerNorm decoder_final_;
  Linear lm_head_;
};

}  // namespace tgvlm
