#include "tgvlm/nn.hpp"

#include <cmath>

#include "tgvlm/errors.hpp"

namespace tgvlm {

Tensor ParamInit::normal(Shape shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng_);
  return t;
}

Linear Linear::create(std::size_t in, std::size_t out, ParamInit& init, bool with_bias, double stddev) {
  if (stddev < 0.0) stddev = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = init.normal({in, out}, stddev);
  if (with_bias) l.bias = init.zeros({out});
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::create(std::size_t width, ParamInit& init) { return {init.ones({width}), init.zeros({width})}; }

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

MultiHeadAttention MultiHeadAttention::create(std::size_t query_in, std::size_t kv_in, std::size_t d_model,
                                              std::size_t heads, ParamInit& init) {
  if (heads == 0 || d_model % heads != 0) {
    throw DimensionError("attention width " + std::to_string(d_model) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.query = Linear::create(query_in, d_model, init, false);
  a.key = Linear::create(kv_in, d_model, init, false);
  a.value = Linear::create(kv_in, d_model, init, false);
  a.output = Linear::create(d_model, d_model, init, false);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys_values, const Tensor& mask,
                                      std::vector<Tensor>* weights) const {
  const Tensor q = query(queries);
  const Tensor k = key(keys_values);
  const Tensor v = value(keys_values);
  const std::size_t dh = head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (mask.defined() && (mask.rows() != q.rows() || mask.cols() != k.rows())) {
    throw DimensionError("attention mask " + shape_string(mask.shape()) + " does not match " +
                         std::to_string(q.rows()) + " queries x " + std::to_string(k.rows()) + " keys");
  }
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  if (weights != nullptr) weights->clear();
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask.defined()) scores = add(scores, mask);
    Tensor probs = softmax(scores, 1);
    if (weights != nullptr) weights->push_back(probs);
    per_head.push_back(matmul(probs, vh));
  }
  Tensor merged = heads == 1 ? per_head[0] : concat(std::span<const Tensor>(per_head), 1);
  return output(merged);
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

}  // namespace tgvlm
