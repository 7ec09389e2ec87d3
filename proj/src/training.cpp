#include "tgvlm/training.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "tgvlm/errors.hpp"

namespace tgvlm {

std::vector<int> target_ids(const Vocabulary& vocab, std::string_view text) {
  std::vector<int> ids = vocab.encode(text);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

double dataset_loss(const TinyGiantModel& model, std::span<const Example> examples, std::span<const std::size_t> which,
                    TargetKind targets, bool moe_enabled) {
  if (which.empty()) throw InputError("dataset_loss over an empty set");
  Tape::NoGrad no_grad;
  double total = 0.0;
  for (std::size_t i : which) {
    const Example& e = examples[i];
    total += model.full_forward(e.question_ids, e.features, targets_of(e, targets), moe_enabled).item();
  }
  return total / static_cast<double>(which.size());
}

double dataset_loss(const TinyGiantModel& model, std::span<const Example> examples, TargetKind targets,
                    bool moe_enabled) {
  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return dataset_loss(model, examples, all, targets, moe_enabled);
}

double train_batch(TinyGiantModel& model, std::span<const Example> examples, std::span<const std::size_t> batch,
                   TargetKind targets, bool moe_enabled, AdamWState& state) {
  if (batch.empty()) throw InputError("train_batch: empty batch");
  std::vector<Tensor> params = model.parameter_tensors();
  zero_grads(params);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i : batch) {
    const Example& e = examples[i];
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor loss = model.full_forward(e.question_ids, e.features, targets_of(e, targets), moe_enabled);
    total += loss.item();
    tape.backward(scale(loss, inv));
  }
  adamw_step(params, state);
  return total * inv;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    int phase, std::size_t epoch) {
  if (batch_size == 0) throw InputError("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase), static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

PhaseResult train_phase(TinyGiantModel& model, std::span<const Example> examples, const TrainOptions& options,
                        const EpochCallback& on_epoch) {
  if (examples.empty()) throw InputError("no training examples");
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  PhaseResult result;
  result.initial_loss = dataset_loss(model, examples, options.targets, options.moe_enabled);
  if (on_epoch && on_epoch({options.phase, 0, result.initial_loss, elapsed()})) return result;

  AdamWState state(options.optimizer);
  bool first = true;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    double sum = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : epoch_batches(examples.size(), options.batch_size, options.seed, options.phase, epoch)) {
      const double loss = train_batch(model, examples, batch, options.targets, options.moe_enabled, state);
      if (first) {
        result.first_batch_loss = loss;
        first = false;
      }
      sum += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    result.epoch_losses.push_back(sum / static_cast<double>(seen));
    if (on_epoch && on_epoch({options.phase, epoch, result.epoch_losses.back(), elapsed()})) break;
  }
  return result;
}

}  // namespace tgvlm
