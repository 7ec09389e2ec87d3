#include "tgvlm/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tgvlm/errors.hpp"

namespace tgvlm {

void MoeConfig::validate() const {
  if (num_experts == 0 || top_k == 0 || top_k > num_experts) {
    throw InputError("MoE needs 1 <= k <= S, got k=" + std::to_string(top_k) + ", S=" + std::to_string(num_experts));
  }
}

GateDecision route(std::span<const double> c, const Tensor& gates, std::size_t k, std::size_t token) {
  const std::size_t s = gates.rows(), d = gates.cols();
  if (c.size() != d) {
    throw DimensionError("route: token width " + std::to_string(c.size()) + " vs gating width " + std::to_string(d));
  }
  if (k == 0 || k > s) throw InputError("route: k=" + std::to_string(k) + " with " + std::to_string(s) + " experts");
  for (double v : c) {
    if (!std::isfinite(v)) throw InputError("route: non-finite token value");
  }
  std::vector<double> dist(s);
  for (std::size_t i = 0; i < s; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = c[j] - gates.at(i, j);
      acc += diff * diff;
    }
    dist[i] = std::sqrt(acc);
    if (!std::isfinite(dist[i])) throw InputError("route: non-finite gating distance");
  }
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());

  GateDecision out;
  out.token = token;
  out.selected = order;
  double dmin = dist[order[0]];
  for (std::size_t i : order) dmin = std::min(dmin, dist[i]);
  double total = 0.0;
  for (std::size_t i : order) {
    out.distances.push_back(dist[i]);
    out.weights.push_back(std::exp(-(dist[i] - dmin)));
    total += out.weights.back();
  }
  for (double& w : out.weights) w /= total;
  return out;
}

Expert Expert::create(std::size_t d, std::size_t hidden, ParamInit& init) {
  return {Linear::create(d, hidden, init), Linear::create(hidden, d, init)};
}

void Expert::collect(const std::string& prefix, ParameterList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

MoeLayer MoeLayer::create(const MoeConfig& config, ParamInit& init) {
  config.validate();
  MoeLayer layer;
  layer.config = config;
  layer.gates = init.normal({config.num_experts, config.d}, 1.0 / std::sqrt(static_cast<double>(config.d)));
  for (std::size_t i = 0; i < config.num_experts; ++i) {
    layer.experts.push_back(Expert::create(config.d, config.expert_hidden, init));
  }
  return layer;
}

void MoeLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gates", gates});
  for (std::size_t i = 0; i < experts.size(); ++i) experts[i].collect(prefix + ".expert" + std::to_string(i), out);
}

MoeOutput moe_forward(const Tensor& c, const MoeLayer& layer) {
  const std::size_t r = c.rows(), d = c.cols();
  if (d != layer.gates.cols()) {
    throw DimensionError("moe_forward: tokens of width " + std::to_string(d) + " vs gating width " +
                         std::to_string(layer.gates.cols()));
  }
  MoeOutput out;
  std::vector<Tensor> rows;
  for (std::size_t j = 0; j < r; ++j) {
    const std::vector<std::size_t> one{j};
    const Tensor cj = r == 1 ? c : gather_rows(c, one);
    GateDecision decision = route(cj.data(), layer.gates, layer.config.top_k, j);
    const Tensor weights = softmax(scale(row_distances(cj, layer.gates, decision.selected), -1.0), 0);
    std::vector<Tensor> expert_out;
    for (std::size_t i : decision.selected) expert_out.push_back(layer.experts[i](cj));
    rows.push_back(weighted_sum(expert_out, weights));
    decision.weights.assign(weights.data().begin(), weights.data().end());
    out.decisions.push_back(std::move(decision));
  }
  out.z = r == 1 ? rows[0] : concat(std::span<const Tensor>(rows), 0);
  return out;
}

UsageTable expert_usage_report(std::span<const TaggedDecision> decisions, std::size_t num_experts) {
  UsageTable table(num_experts);
  for (auto& row : table) row.fill(0);
  for (const TaggedDecision& t : decisions) {
    for (std::size_t e : t.decision.selected) {
      if (e >= num_experts) throw IndexError("decision names expert " + std::to_string(e));
      ++table[e][task_index(t.task)];
    }
  }
  return table;
}

}  // namespace tgvlm
