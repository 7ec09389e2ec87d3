#include "tgvlm/commands.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "tgvlm/checkpoint.hpp"
#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"
#include "tgvlm/pipeline.hpp"

namespace tgvlm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

void append_log(const fs::path& path, const EpochRecord& r) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream log(path, std::ios::app);
  if (!log) throw InputError("cannot append to training log " + path.string());
  log << json{{"phase", r.phase}, {"epoch", r.epoch}, {"loss", r.loss}, {"wall_time", r.wall_time}}.dump() << '\n';
}

TrainOptions train_options(const RunConfig& config, int phase) {
  TrainOptions o;
  o.optimizer.learning_rate = config.lr;
  o.optimizer.weight_decay = config.weight_decay;
  o.batch_size = config.batch_size;
  o.epochs = phase == 1 ? config.epochs_phase1 : config.epochs_phase2;
  o.moe_enabled = config.moe_enabled;
  o.targets = phase == 1 ? TargetKind::Free : TargetKind::Normalized;
  o.seed = config.seed;
  o.phase = phase;
  return o;
}

struct TrainedModel {
  Vocabulary vocab;
  std::unique_ptr<TinyGiantModel> model;
};

TrainedModel load_trained(const RunConfig& config) {
  const fs::path ckpt = config.checkpoint;
  const fs::path vocab_path = with_suffix(ckpt, ".vocab");
  if (!fs::exists(ckpt) || !fs::exists(vocab_path)) {
    throw InputError("checkpoint " + ckpt.string() + " (or its .vocab) not found; run `tgvlm train` first");
  }
  TrainedModel t;
  t.vocab = Vocabulary::load(vocab_path);
  t.model = std::make_unique<TinyGiantModel>(config.model_config(t.vocab.size()), config.seed);
  ParameterList params = t.model->parameters();
  load_checkpoint(ckpt, params);
  return t;
}

std::vector<Example> eval_examples(const RunConfig& config, const Vocabulary& vocab, std::vector<Sample>* samples) {
  std::vector<Sample> s = read_dataset(config.eval_dataset_path(), false);
  std::vector<Example> ex = load_examples(s, config.eval_cache_path(), vocab);
  if (samples != nullptr) *samples = std::move(s);
  return ex;
}

PredictOptions predict_options(const RunConfig& config) {
  return {config.max_new_tokens, config.moe_enabled, config.decode == "constrained"};
}

std::vector<Prediction> run_predictions(const RunConfig& config, std::vector<Sample>* samples) {
  const TrainedModel t = load_trained(config);
  const std::vector<Example> examples = eval_examples(config, t.vocab, samples);
  const PredictOptions opts = predict_options(config);
  std::vector<Prediction> preds;
  preds.reserve(examples.size());
  for (const Example& e : examples) preds.push_back(predict(*t.model, t.vocab, e, opts));
  return preds;
}

}  // namespace

SynthConfig synth_config(const RunConfig& config) {
  SynthConfig s;
  s.seed = config.seed;
  s.n_samples = config.n_samples;
  s.task_mix = config.task_mix;
  s.rgb_size = config.rgb_size;
  s.depth_size = config.depth_size;
  return s;
}

void cmd_gen_data(const RunConfig& config, std::ostream& out) {
  generate_dataset_file(synth_config(config), config.dataset);
  out << "wrote " << config.n_samples << " samples to " << config.dataset << '\n';
}

void cmd_cache_features(const RunConfig& config, std::ostream& out) {
  config.validate();
  const FeatureExtractor extractor(extractor_config(config));
  std::vector<CacheRecord> records;
  for_each_sample(config.dataset, true,
                  [&](Sample&& s) { records.emplace_back(s.id, sample_features(extractor, s)); });
  write_feature_cache(config.cache, records);
  out << "cached features of " << records.size() << " samples in " << config.cache << '\n';
}

TrainSummary cmd_train(const RunConfig& config, std::ostream& out) {
  config.validate();
  if (!config.phase1_enabled && !config.phase2_enabled) throw InputError("train needs at least one enabled phase");

  // Images are never loaded here; everything visual comes from the cache.
  std::vector<Sample> samples = drop_distance_head(read_dataset(config.dataset, false), config.drop_distance_head);
  if (samples.empty()) throw InputError("no training samples left in " + config.dataset);
  const Vocabulary vocab = Vocabulary::build(vocabulary_texts(samples));
  const std::vector<Example> examples = load_examples(samples, config.cache, vocab);
  const ModelConfig model_config = config.model_config(vocab.size());

  const fs::path ckpt = config.checkpoint;
  const fs::path phase1_ckpt = with_suffix(ckpt, ".phase1");
  vocab.save(with_suffix(ckpt, ".vocab"));

  TrainSummary summary;
  summary.vocab_size = vocab.size();
  summary.n_examples = examples.size();
  const auto log_epoch = [&](const EpochRecord& r) {
    append_log(config.log, r);
    char line[128];
    std::snprintf(line, sizeof line, "phase %d epoch %zu loss %.6f (%.1fs)\n", r.phase, r.epoch, r.loss, r.wall_time);
    out << line << std::flush;
    return false;
  };

  auto model = std::make_unique<TinyGiantModel>(model_config, config.seed);
  if (config.phase1_enabled) {
    summary.phase1 = train_phase(*model, examples, train_options(config, 1), log_epoch);
    save_checkpoint(phase1_ckpt, model->parameters());
  }
  if (config.phase2_enabled) {
    if (config.phase1_enabled) {
      // Resume from the file, not from memory, and record both losses so the
      // handoff can be checked.
      auto resumed = std::make_unique<TinyGiantModel>(model_config, config.seed);
      ParameterList params = resumed->parameters();
      load_checkpoint(phase1_ckpt, params);
      const auto first = epoch_batches(examples.size(), config.batch_size, config.seed, 2, 1).front();
      summary.handoff_in_memory = dataset_loss(*model, examples, first, TargetKind::Normalized, config.moe_enabled);
      summary.handoff_loaded = dataset_loss(*resumed, examples, first, TargetKind::Normalized, config.moe_enabled);
      model = std::move(resumed);
    }
    summary.phase2 = train_phase(*model, examples, train_options(config, 2), log_epoch);
  }
  save_checkpoint(ckpt, model->parameters());
  out << "saved checkpoint " << ckpt.string() << '\n';
  return summary;
}

ScoreReport cmd_eval(const RunConfig& config, std::ostream& out) {
  config.validate();
  std::vector<Prediction> preds;
  std::vector<Sample> samples;
  if (!config.score_predictions.empty()) {
    preds = read_predictions(config.score_predictions);
    samples = read_dataset(config.eval_dataset_path(), false);
  } else {
    preds = run_predictions(config, &samples);
  }
  const std::vector<GroundTruth> truth = ground_truth(samples);
  const ScoreReport report = score(preds, truth, config.distance_tolerance);
  json j = report.to_json();
  j["distance_tolerance"] = config.distance_tolerance;
  io::write_file_atomic(config.report, j.dump(2) + "\n");
  out << report.table();
  return report;
}

std::vector<Prediction> cmd_predict(const RunConfig& config, std::ostream& out) {
  config.validate();
  const std::vector<Prediction> preds = run_predictions(config, nullptr);
  write_predictions(config.predictions, preds);
  out << "wrote " << preds.size() << " predictions to " << config.predictions << '\n';
  return preds;
}

std::vector<AblationCell> ablation_grid() {
  return {
      {false, true, false, 0.0, 25.59},
      {false, false, true, 0.0, 63.65},
      {false, true, true, 0.0, 65.09},
      {true, false, true, 0.0, 68.13},
      {true, true, true, 0.0, 72.52},
  };
}

std::string format_ablation(const std::vector<AblationCell>& cells) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-4s %-7s %-7s %9s %14s\n", "MoE", "Phase1", "Phase2", "score(%)", "reference(%)");
  out << line;
  const auto mark = [](bool b) { return b ? "yes" : "no"; };
  for (const AblationCell& c : cells) {
    std::snprintf(line, sizeof line, "%-4s %-7s %-7s %9.2f %14.2f\n", mark(c.moe), mark(c.phase1), mark(c.phase2),
                  c.score, c.reference);
    out << line;
  }
  out << "reference = original full-scale validation scores, shown for orientation only;\n"
         "the toy benchmark is not expected to reproduce them.\n";
  return out.str();
}

std::vector<AblationCell> cmd_ablation(const RunConfig& config, std::ostream& out) {
  std::vector<AblationCell> cells = ablation_grid();
  const fs::path dir = config.ablation_dir;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    AblationCell& cell = cells[i];
    RunConfig c = config;
    c.moe_enabled = cell.moe;
    c.phase1_enabled = cell.phase1;
    c.phase2_enabled = cell.phase2;
    const std::string stem = "cell" + std::to_string(i);
    c.checkpoint = (dir / (stem + ".ckpt")).string();
    c.log = (dir / (stem + ".log.jsonl")).string();
    c.report = (dir / (stem + ".report.json")).string();
    c.score_predictions.clear();
    fs::remove(c.log);
    std::ostringstream quiet;
    cmd_train(c, quiet);
    cell.score = cmd_eval(c, quiet).overall;
    out << "cell " << i << " done: " << cell.score << "%\n" << std::flush;
  }
  const std::string table = format_ablation(cells);
  io::write_file_atomic(dir / "ablation.txt", table);
  out << table;
  return cells;
}

std::string format_usage(const UsageTable& usage) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s", "expert");
  out << line;
  for (TaskType t : kAllTasks) {
    std::snprintf(line, sizeof line, " %10s", std::string(task_name(t)).c_str());
    out << line;
  }
  out << '\n';
  for (std::size_t e = 0; e < usage.size(); ++e) {
    std::snprintf(line, sizeof line, "%-8zu", e);
    out << line;
    for (std::uint64_t n : usage[e]) {
      std::snprintf(line, sizeof line, " %10llu", static_cast<unsigned long long>(n));
      out << line;
    }
    out << '\n';
  }
  return out.str();
}

GatingReport cmd_inspect_gating(const RunConfig& config, std::ostream& out) {
  if (!config.moe_enabled) throw InputError("inspect-gating needs a model trained with moe-enabled=true");
  const TrainedModel t = load_trained(config);
  const std::vector<Example> examples = eval_examples(config, t.vocab, nullptr);
  const std::size_t limit = config.gating_limit == 0 ? examples.size() : std::min(examples.size(), config.gating_limit);

  GatingReport report;
  std::vector<TaggedDecision> tagged;
  for (std::size_t i = 0; i < limit; ++i) {
    const Example& e = examples[i];
    EncodedContext ctx;
    {
      Tape::NoGrad no_grad;
      ctx = t.model->encode_context(e.question_ids, e.features, true);
    }
    for (const GateDecision& d : ctx.decisions) {
      std::string line = e.id + " region=" + std::to_string(d.token) + " task=" + std::string(task_name(e.task)) +
                         " experts=";
      for (std::size_t j = 0; j < d.selected.size(); ++j) line += (j ? "," : "") + std::to_string(d.selected[j]);
      line += " weights=";
      for (std::size_t j = 0; j < d.weights.size(); ++j) {
        char w[32];
        std::snprintf(w, sizeof w, "%s%.6f", j ? "," : "", d.weights[j]);
        line += w;
      }
      out << line << '\n';
      report.lines.push_back(std::move(line));
      tagged.push_back({e.task, d});
    }
  }
  report.usage = expert_usage_report(tagged, t.model->moe().config.num_experts);
  out << format_usage(report.usage);
  return report;
}

}  // namespace tgvlm
