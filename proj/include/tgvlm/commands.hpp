#pragma once

// One function per CLI subcommand. Human-readable output goes to `out`;
// machine-readable artifacts go to the paths named in the RunConfig.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tgvlm/answers.hpp"
#include "tgvlm/config.hpp"
#include "tgvlm/moe.hpp"
#include "tgvlm/synth.hpp"
#include "tgvlm/training.hpp"

namespace tgvlm {

SynthConfig synth_config(const RunConfig& config);

void cmd_gen_data(const RunConfig& config, std::ostream& out);
void cmd_cache_features(const RunConfig& config, std::ostream& out);

struct TrainSummary {
  std::size_t vocab_size = 0;
  std::size_t n_examples = 0;
  std::optional<PhaseResult> phase1;
  std::optional<PhaseResult> phase2;
  // First Phase-2 batch loss under the in-memory Phase-1 weights and under
  // the same weights reloaded from the Phase-1 checkpoint.
  std::optional<double> handoff_in_memory;
  std::optional<double> handoff_loaded;
};

// Writes <checkpoint>, <checkpoint>.vocab, <checkpoint>.phase1 when Phase 1
// runs, and appends one JSON line per epoch to the log.
TrainSummary cmd_train(const RunConfig& config, std::ostream& out);

ScoreReport cmd_eval(const RunConfig& config, std::ostream& out);
std::vector<Prediction> cmd_predict(const RunConfig& config, std::ostream& out);

struct AblationCell {
  bool moe = false;
  bool phase1 = false;
  bool phase2 = false;
  double score = 0.0;
  double reference = 0.0;  // original full-scale result, annotation only
};

// The five (MoE, Phase 1, Phase 2) rows with their reference scores.
std::vector<AblationCell> ablation_grid();
std::string format_ablation(const std::vector<AblationCell>& cells);
std::vector<AblationCell> cmd_ablation(const RunConfig& config, std::ostream& out);

struct GatingReport {
  std::vector<std::string> lines;  // one per routed region token
  UsageTable usage;
};

std::string format_usage(const UsageTable& usage);
GatingReport cmd_inspect_gating(const RunConfig& config, std::ostream& out);

}  // namespace tgvlm
