#pragma once

// Small building blocks shared by the fusion, MoE and seq2seq modules.
// Linear layers use the row-vector convention y = x·W + b with W stored
// in_features × out_features.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tgvlm/checkpoint.hpp"
#include "tgvlm/tensor.hpp"

namespace tgvlm {

class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev);
  Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
  Tensor ones(Shape shape) { return Tensor::filled(std::move(shape), 1.0, true); }

 private:
  std::mt19937_64 rng_;
};

struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when the layer has no bias

  static Linear create(std::size_t in, std::size_t out, ParamInit& init, bool with_bias = true,
                       double stddev = -1.0);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(std::size_t width, ParamInit& init);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Additive attention mask: 0 keeps a key, kMaskedScore removes it.
inline constexpr double kMaskedScore = -1e9;

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;

  static MultiHeadAttention create(std::size_t query_in, std::size_t kv_in, std::size_t d_model, std::size_t heads,
                                   ParamInit& init);
  std::size_t head_dim() const { return query.out_features() / heads; }

  // softmax(Q·Kᵀ/√d_head + mask)·V per head, concatenated and projected.
  // `mask` is either undefined or Lq×Lk additive. When `weights` is given it
  // receives one Lq×Lk probability matrix per head.
  Tensor operator()(const Tensor& queries, const Tensor& keys_values, const Tensor& mask = Tensor(),
                    std::vector<Tensor>* weights = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace tgvlm
