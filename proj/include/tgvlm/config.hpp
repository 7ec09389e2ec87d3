#pragma once

// Run configuration shared by every CLI command. Serialized as a flat JSON
// object whose keys are the kebab-case flag names.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "tgvlm/model.hpp"
#include "tgvlm/task.hpp"

namespace tgvlm {

struct RunConfig {
  // paths
  std::string dataset = "data/train.jsonl";
  std::string cache = "data/train.cache";
  std::string eval_dataset;  // empty: same as dataset
  std::string eval_cache;    // empty: same as cache
  std::string checkpoint = "runs/model.ckpt";
  std::string log = "runs/train_log.jsonl";
  std::string report = "runs/report.json";
  std::string predictions = "runs/predictions.jsonl";
  std::string ablation_dir = "runs/ablation";
  std::string score_predictions;  // eval scores this file instead of running the model

  // data
  std::uint64_t seed = 0;
  std::uint64_t encoder_seed = 0;
  std::size_t n_samples = 256;
  std::array<double, kNumTasks> task_mix = {0.25, 0.25, 0.25, 0.25};
  std::size_t rgb_size = 224;
  std::size_t depth_size = 384;
  double coverage_threshold = 0.5;
  std::size_t embed_dim = 32;

  // model
  std::size_t d_model = 64;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_width = 256;
  std::size_t max_len = 48;
  std::size_t d_proj = 32;
  std::size_t region_hidden = 128;
  std::size_t num_experts = 4;
  std::size_t top_k = 2;
  std::size_t expert_hidden = 128;

  // training
  double lr = 5e-5;
  double weight_decay = 1e-2;
  std::size_t batch_size = 32;
  std::size_t epochs_phase1 = 1;
  std::size_t epochs_phase2 = 10;
  std::size_t drop_distance_head = 0;

  // flags
  bool moe_enabled = true;
  bool phase1_enabled = true;
  bool phase2_enabled = true;

  // evaluation
  std::string decode = "free";  // free | constrained
  double distance_tolerance = 0.10;
  std::size_t max_new_tokens = 24;
  std::size_t gating_limit = 0;  // inspect-gating sample cap, 0 = all

  const std::string& eval_dataset_path() const { return eval_dataset.empty() ? dataset : eval_dataset; }
  const std::string& eval_cache_path() const { return eval_cache.empty() ? cache : eval_cache; }

  ModelConfig model_config(std::size_t vocab_size) const;
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json config_to_json(const RunConfig& config);
// Keys missing from `j` keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace tgvlm
