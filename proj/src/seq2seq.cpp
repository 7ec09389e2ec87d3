#include "tgvlm/seq2seq.hpp"

#include <string>

#include "tgvlm/errors.hpp"

namespace tgvlm {

void Seq2SeqConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kNumReserved)) {
    throw InputError("vocab_size " + std::to_string(vocab_size) + " leaves no room beyond the reserved tokens");
  }
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw InputError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (max_len == 0 || ffn_width == 0) throw InputError("max_len and ffn_width must be positive");
}

Seq2Seq::Seq2Seq(const Seq2SeqConfig& config, ParamInit& init) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  token_embedding_ = init.normal({config_.vocab_size, d}, 1.0);
  encoder_positions_ = init.normal({config_.max_len, d}, 0.1);
  decoder_positions_ = init.normal({config_.max_len, d}, 0.1);
  for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
    EncoderLayer layer;
    layer.norm_attn = LayerNorm::create(d, init);
    layer.self_attn = MultiHeadAttention::create(d, d, d, config_.n_heads, init);
    layer.norm_ffn = LayerNorm::create(d, init);
    layer.ffn_in = Linear::create(d, config_.ffn_width, init);
    layer.ffn_out = Linear::create(config_.ffn_width, d, init);
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
    DecoderLayer layer;
    layer.norm_self = LayerNorm::create(d, init);
    layer.self_attn = MultiHeadAttention::create(d, d, d, config_.n_heads, init);
    layer.norm_cross = LayerNorm::create(d, init);
    layer.cross_attn = MultiHeadAttention::create(d, d, d, config_.n_heads, init);
    layer.norm_ffn = LayerNorm::create(d, init);
    layer.ffn_in = Linear::create(d, config_.ffn_width, init);
    layer.ffn_out = Linear::create(config_.ffn_width, d, init);
    decoder_.push_back(std::move(layer));
  }
  decoder_final_ = LayerNorm::create(d, init);
  lm_head_ = Linear::create(d, config_.vocab_size, init, false, 0.02);
}

Tensor Seq2Seq::key_padding_mask(std::span<const std::uint8_t> mask, std::size_t queries) const {
  Tensor m = Tensor::zeros({queries, mask.size()});
  for (std::size_t i = 0; i < queries; ++i)
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (!mask[j]) m.at(i, j) = kMaskedScore;
  return m;
}

EncoderOutput Seq2Seq::encode_sequence(const Tensor& embeddings, std::span<const std::uint8_t> attention_mask) const {
  const std::size_t len = embeddings.rows();
  if (len > config_.max_len) {
    throw InputError("sequence of length " + std::to_string(len) + " exceeds max_len " +
                     std::to_string(config_.max_len) + "; refusing to truncate");
  }
  if (embeddings.cols() != config_.d_model) {
    throw DimensionError("encoder input width " + std::to_string(embeddings.cols()) + " vs d_model " +
                         std::to_string(config_.d_model));
  }
  if (attention_mask.size() != len) throw DimensionError("attention mask length does not match the sequence");

  std::vector<std::size_t> first_rows(len);
  for (std::size_t i = 0; i < len; ++i) first_rows[i] = i;
  Tensor x = add(embeddings, gather_rows(encoder_positions_, first_rows));
  bool any_masked = false;
  for (auto m : attention_mask) any_masked = any_masked || !m;
  const Tensor mask = any_masked ? key_padding_mask(attention_mask, len) : Tensor();
  for (const EncoderLayer& layer : encoder_) {
    const Tensor h = layer.norm_attn(x);
    x = add(x, layer.self_attn(h, h, mask));
    x = add(x, layer.ffn_out(relu(layer.ffn_in(layer.norm_ffn(x)))));
  }
  return {x, std::vector<std::uint8_t>(attention_mask.begin(), attention_mask.end())};
}

Tensor Seq2Seq::decoder_logits(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                               std::span<const int> decoder_inputs) const {
  const std::size_t t_len = decoder_inputs.size();
  if (t_len == 0) throw InputError("decoder needs at least one input token");
  if (t_len > config_.max_len) {
    throw InputError("target of length " + std::to_string(t_len) + " exceeds max_len " + std::to_string(config_.max_len));
  }
  if (memory_mask.size() != memory.rows()) throw DimensionError("memory mask length does not match encoder states");

  std::vector<std::size_t> first_rows(t_len);
  for (std::size_t i = 0; i < t_len; ++i) first_rows[i] = i;
  Tensor y = add(embedding_lookup(token_embedding_, decoder_inputs), gather_rows(decoder_positions_, first_rows));

  Tensor causal = Tensor::zeros({t_len, t_len});
  for (std::size_t i = 0; i < t_len; ++i)
    for (std::size_t j = i + 1; j < t_len; ++j) causal.at(i, j) = kMaskedScore;
  bool any_masked = false;
  for (auto m : memory_mask) any_masked = any_masked || !m;
  const Tensor cross_mask = any_masked ? key_padding_mask(memory_mask, t_len) : Tensor();

  for (const DecoderLayer& layer : decoder_) {
    const Tensor h = layer.norm_self(y);
    y = add(y, layer.self_attn(h, h, causal));
    y = add(y, layer.cross_attn(layer.norm_cross(y), memory, cross_mask));
    y = add(y, layer.ffn_out(relu(layer.ffn_in(layer.norm_ffn(y)))));
  }
  return lm_head_(decoder_final_(y));
}

Tensor Seq2Seq::decode_loss(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                            std::span<const int> targets) const {
  if (targets.empty()) throw InputError("decode_loss: empty target sequence");
  std::vector<int> inputs;
  inputs.reserve(targets.size());
  inputs.push_back(config_.pad_id);
  inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  const Tensor logits = decoder_logits(memory, memory_mask, inputs);
  return cross_entropy(logits, targets, config_.pad_id);
}

std::vector<int> Seq2Seq::generate(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                                   std::size_t max_new_tokens, const TokenFilter& filter) const {
  Tape::NoGrad no_grad;
  std::vector<int> out;
  std::vector<int> inputs{config_.pad_id};
  const std::size_t limit = std::min(max_new_tokens, config_.max_len);
  while (out.size() < limit) {
    const Tensor logits = decoder_logits(memory, memory_mask, inputs);
    const std::size_t v = logits.cols(), last = logits.rows() - 1;
    std::vector<std::uint8_t> allowed;
    if (filter) allowed = filter(out);
    int best = -1;
    double best_score = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      if (!allowed.empty() && !allowed[j]) continue;
      const double s = logits.at(last, j);
      if (best < 0 || s > best_score) {
        best = static_cast<int>(j);
        best_score = s;
      }
    }
    if (best < 0 || best == config_.eos_id) break;
    out.push_back(best);
    inputs.push_back(best);
  }
  return out;
}

void Seq2Seq::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".token_embedding", token_embedding_});
  out.push_back({prefix + ".encoder_positions", encoder_positions_});
  out.push_back({prefix + ".decoder_positions", decoder_positions_});
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = prefix + ".encoder" + std::to_string(i);
    const EncoderLayer& l = encoder_[i];
    l.norm_attn.collect(p + ".norm_attn", out);
    l.self_attn.collect(p + ".self_attn", out);
    l.norm_ffn.collect(p + ".norm_ffn", out);
    l.ffn_in.collect(p + ".ffn_in", out);
    l.ffn_out.collect(p + ".ffn_out", out);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = prefix + ".decoder" + std::to_string(i);
    const DecoderLayer& l = decoder_[i];
    l.norm_self.collect(p + ".norm_self", out);
    l.self_attn.collect(p + ".self_attn", out);
    l.norm_cross.collect(p + ".norm_cross", out);
    l.cross_attn.collect(p + ".cross_attn", out);
    l.norm_ffn.collect(p + ".norm_ffn", out);
    l.ffn_in.collect(p + ".ffn_in", out);
    l.ffn_out.collect(p + ".ffn_out", out);
  }
  decoder_final_.collect(prefix + ".decoder_final", out);
  lm_head_.collect(prefix + ".lm_head", out);
}

void Seq2Seq::zero_encoder_output_projections() {
  for (EncoderLayer& l : encoder_) {
    for (double& v : l.self_attn.output.weight.data()) v = 0.0;
    for (double& v : l.ffn_out.weight.data()) v = 0.0;
    for (double& v : l.ffn_out.bias.data()) v = 0.0;
  }
}

}  // namespace tgvlm
