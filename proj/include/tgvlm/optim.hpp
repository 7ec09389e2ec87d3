#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tgvlm/tensor.hpp"

namespace tgvlm {

struct AdamWOptions {
  double learning_rate = 5e-5;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamWState {
  AdamWOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  AdamWState() = default;
  explicit AdamWState(AdamWOptions opts) : options(opts) {}
};

// Decoupled weight decay followed by a bias-corrected Adam update, applied to
// every tensor in `params` using its accumulated gradient. Moments are sized
// on the first call and must keep matching afterwards.
void adamw_step(std::span<Tensor> params, AdamWState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace tgvlm
