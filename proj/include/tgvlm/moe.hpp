#pragma once

// Sparse Mixture-of-Experts fusion layer with Laplace gating.
//
// Each token c_j is routed to the k experts whose gating vectors are nearest
// in Euclidean distance (ties -> lower index). The selected experts are
// mixed with weights exp(-d_i) / Σ_{l∈S_j} exp(-d_l). Selection is treated as
// constant during backward; gradients reach the gating vectors through the
// distances and the experts through their outputs.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tgvlm/nn.hpp"
#include "tgvlm/task.hpp"

namespace tgvlm {

struct MoeConfig {
  std::size_t num_experts = 4;
  std::size_t top_k = 2;
  std::size_t d = 64;
  std::size_t expert_hidden = 128;
  bool enabled = true;

  void validate() const;
};

struct GateDecision {
  std::size_t token = 0;
  std::vector<std::size_t> selected;  // ascending expert index
  std::vector<double> weights;
  std::vector<double> distances;
};

// `gates` is S × d.
GateDecision route(std::span<const double> c, const Tensor& gates, std::size_t k, std::size_t token = 0);

struct Expert {
  Linear fc1;
  Linear fc2;

  static Expert create(std::size_t d, std::size_t hidden, ParamInit& init);
  Tensor operator()(const Tensor& x) const { return fc2(relu(fc1(x))); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct MoeLayer {
  MoeConfig config;
  Tensor gates;  // S × d
  std::vector<Expert> experts;

  static MoeLayer create(const MoeConfig& config, ParamInit& init);
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct MoeOutput {
  Tensor z;  // R × d
  std::vector<GateDecision> decisions;
};

// z_j = Σ_{i∈S_j} G(c_j)_i · E_i(c_j) for every row of C.
MoeOutput moe_forward(const Tensor& c, const MoeLayer& layer);

struct TaggedDecision {
  TaskType task;
  GateDecision decision;
};

// counts[expert][task] = number of tokens of that task routed to that expert.
using UsageTable = std::vector<std::array<std::uint64_t, kNumTasks>>;

UsageTable expert_usage_report(std::span<const TaggedDecision> decisions, std::size_t num_experts);

}  // namespace tgvlm
