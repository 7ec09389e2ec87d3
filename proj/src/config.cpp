#include "tgvlm/config.hpp"

#include <type_traits>

#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"

namespace tgvlm {

using nlohmann::json;

namespace {

template <class C, class F>
void visit_fields(C& c, F&& f) {
  f("dataset", c.dataset);
  f("cache", c.cache);
  f("eval-dataset", c.eval_dataset);
  f("eval-cache", c.eval_cache);
  f("checkpoint", c.checkpoint);
  f("log", c.log);
  f("report", c.report);
  f("predictions", c.predictions);
  f("ablation-dir", c.ablation_dir);
  f("score-predictions", c.score_predictions);
  f("seed", c.seed);
  f("encoder-seed", c.encoder_seed);
  f("n-samples", c.n_samples);
  f("task-mix", c.task_mix);
  f("rgb-size", c.rgb_size);
  f("depth-size", c.depth_size);
  f("coverage-threshold", c.coverage_threshold);
  f("embed-dim", c.embed_dim);
  f("d-model", c.d_model);
  f("n-enc-layers", c.n_enc_layers);
  f("n-dec-layers", c.n_dec_layers);
  f("n-heads", c.n_heads);
  f("ffn-width", c.ffn_width);
  f("max-len", c.max_len);
  f("d-proj", c.d_proj);
  f("region-hidden", c.region_hidden);
  f("num-experts", c.num_experts);
  f("top-k", c.top_k);
  f("expert-hidden", c.expert_hidden);
  f("lr", c.lr);
  f("weight-decay", c.weight_decay);
  f("batch-size", c.batch_size);
  f("epochs-phase1", c.epochs_phase1);
  f("epochs-phase2", c.epochs_phase2);
  f("drop-distance-head", c.drop_distance_head);
  f("moe-enabled", c.moe_enabled);
  f("phase1-enabled", c.phase1_enabled);
  f("phase2-enabled", c.phase2_enabled);
  f("decode", c.decode);
  f("distance-tolerance", c.distance_tolerance);
  f("max-new-tokens", c.max_new_tokens);
  f("gating-limit", c.gating_limit);
}

template <class T>
void read_field(const json& j, const std::string& key, T& out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw FormatError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_unsigned()) throw FormatError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw FormatError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw FormatError("");
    }
    out = j.get<T>();
  } catch (const std::exception&) {
    throw FormatError("config key '" + key + "' has the wrong type: " + j.dump());
  }
}

}  // namespace

json config_to_json(const RunConfig& config) {
  json j = json::object();
  visit_fields(config, [&](const char* key, const auto& value) { j[key] = value; });
  return j;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  RunConfig config;
  std::size_t known = 0;
  visit_fields(config, [&](const char* key, auto& value) {
    auto it = j.find(key);
    if (it == j.end()) return;
    ++known;
    read_field(*it, key, value);
  });
  if (known != j.size()) {
    const json defaults = config_to_json(RunConfig{});
    for (const auto& [key, _] : j.items()) {
      if (!defaults.contains(key)) throw FormatError("unknown config key '" + key + "'");
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig m;
  m.seq.vocab_size = vocab_size;
  m.seq.d_model = d_model;
  m.seq.n_enc_layers = n_enc_layers;
  m.seq.n_dec_layers = n_dec_layers;
  m.seq.n_heads = n_heads;
  m.seq.ffn_width = ffn_width;
  m.seq.max_len = max_len;
  m.fusion.rgb_dim = embed_dim;
  m.fusion.depth_dim = embed_dim;
  m.fusion.d_proj = d_proj;
  m.fusion.region_hidden = region_hidden;
  m.moe.num_experts = num_experts;
  m.moe.top_k = top_k;
  m.moe.expert_hidden = expert_hidden;
  m.moe.enabled = moe_enabled;
  m.sync_widths();
  return m;
}

void RunConfig::validate() const {
  if (decode != "free" && decode != "constrained") {
    throw InputError("decode must be 'free' or 'constrained', got '" + decode + "'");
  }
  if (batch_size == 0) throw InputError("batch-size must be positive");
  if (!(lr > 0.0)) throw InputError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw InputError("weight-decay must be non-negative");
  if (!(distance_tolerance >= 0.0)) throw InputError("distance-tolerance must be non-negative");
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0)) throw InputError("coverage-threshold must be in (0, 1]");
  if (top_k == 0 || top_k > num_experts) {
    throw InputError("top-k must be in [1, num-experts], got " + std::to_string(top_k) + " with " +
                     std::to_string(num_experts) + " experts");
  }
  if (n_heads == 0 || d_model % n_heads != 0) throw InputError("d-model must be divisible by n-heads");
}

}  // namespace tgvlm
