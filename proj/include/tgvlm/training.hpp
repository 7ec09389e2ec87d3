#pragma once

// Mini-batch training of the full model with AdamW, one phase at a time.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tgvlm/model.hpp"
#include "tgvlm/optim.hpp"
#include "tgvlm/task.hpp"
#include "tgvlm/vocab.hpp"

namespace tgvlm {

struct Example {
  std::string id;
  TaskType task = TaskType::Distance;
  std::vector<int> question_ids;
  std::vector<int> free_ids;  // answer_free tokens + eos
  std::vector<int> norm_ids;  // answer_norm tokens + eos
  std::string answer_norm;
  SampleFeatures features;
};

enum class TargetKind { Free, Normalized };

inline const std::vector<int>& targets_of(const Example& e, TargetKind kind) {
  return kind == TargetKind::Free ? e.free_ids : e.norm_ids;
}

// Token ids of `text` followed by eos.
std::vector<int> target_ids(const Vocabulary& vocab, std::string_view text);

struct TrainOptions {
  AdamWOptions optimizer;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  bool moe_enabled = true;
  TargetKind targets = TargetKind::Normalized;
  std::uint64_t seed = 0;  // controls the per-epoch shuffling
  int phase = 2;           // label carried into the log records
};

struct EpochRecord {
  int phase = 0;
  std::size_t epoch = 0;  // 0 = evaluation before the first update
  double loss = 0.0;
  double wall_time = 0.0;  // seconds since the phase started
};

struct PhaseResult {
  double initial_loss = 0.0;
  double first_batch_loss = 0.0;
  std::vector<double> epoch_losses;
  double final_loss() const { return epoch_losses.empty() ? initial_loss : epoch_losses.back(); }
};

// Mean per-sample loss without recording a tape.
double dataset_loss(const TinyGiantModel& model, std::span<const Example> examples, std::span<const std::size_t> which,
                    TargetKind targets, bool moe_enabled);
double dataset_loss(const TinyGiantModel& model, std::span<const Example> examples, TargetKind targets,
                    bool moe_enabled);

// One optimizer step on the batch; returns the batch loss (mean of the
// per-sample losses) measured before the update.
double train_batch(TinyGiantModel& model, std::span<const Example> examples, std::span<const std::size_t> batch,
                   TargetKind targets, bool moe_enabled, AdamWState& state);

// Called after every epoch; returning true stops the phase early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

PhaseResult train_phase(TinyGiantModel& model, std::span<const Example> examples, const TrainOptions& options,
                        const EpochCallback& on_epoch = nullptr);

// The batches of one epoch: a seeded shuffle of all indices, cut into
// consecutive chunks (the last may be short).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    int phase, std::size_t epoch);

}  // namespace tgvlm
