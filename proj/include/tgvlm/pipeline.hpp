#pragma once

// Glue between the dataset files, the frozen encoders, the feature cache and
// the model.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tgvlm/answers.hpp"
#include "tgvlm/config.hpp"
#include "tgvlm/feature_cache.hpp"
#include "tgvlm/synth.hpp"
#include "tgvlm/training.hpp"

namespace tgvlm {

// Pixel scaling applied before encoding: rgb / 255, depth / kDepthScale.
inline constexpr double kDepthScale = 10.0;

FeatureExtractorConfig extractor_config(const RunConfig& config);
SampleFeatures sample_features(const FeatureExtractor& extractor, const Sample& sample);
std::vector<CacheRecord> extract_all(const FeatureExtractor& extractor, std::span<const Sample> samples);

// Tokenizer inputs of every sample (questions and both answer forms).
std::vector<std::string> vocabulary_texts(std::span<const Sample> samples);

Example make_example(const Sample& sample, const Vocabulary& vocab, SampleFeatures features);
// Samples come without images; features are read from the cache.
std::vector<Example> load_examples(std::span<const Sample> samples, const std::filesystem::path& cache_path,
                                   const Vocabulary& vocab);

// Removes the first n distance samples in file order.
std::vector<Sample> drop_distance_head(std::vector<Sample> samples, std::size_t n);

std::vector<GroundTruth> ground_truth(std::span<const Sample> samples);

// Restricts the next token to the canonical answer grammar of `task`.
TokenFilter answer_filter(TaskType task, const Vocabulary& vocab, std::size_t num_regions);

struct PredictOptions {
  std::size_t max_new_tokens = 24;
  bool moe_enabled = true;
  bool constrained = false;
};

std::string predict_text(const TinyGiantModel& model, const Vocabulary& vocab, const Example& example,
                         const PredictOptions& options);
// Normalized prediction (empty string on normalization failure).
Prediction predict(const TinyGiantModel& model, const Vocabulary& vocab, const Example& example,
                   const PredictOptions& options);

}  // namespace tgvlm
