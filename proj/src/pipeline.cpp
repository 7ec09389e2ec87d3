#include "tgvlm/pipeline.hpp"

#include <algorithm>

#include "tgvlm/errors.hpp"

namespace tgvlm {

FeatureExtractorConfig extractor_config(const RunConfig& config) {
  FeatureExtractorConfig fc;
  fc.rgb = ModalityEncoderConfig::rgb(config.embed_dim);
  fc.depth = ModalityEncoderConfig::depth(config.embed_dim);
  fc.coverage_threshold = config.coverage_threshold;
  fc.seed = config.encoder_seed;
  return fc;
}

SampleFeatures sample_features(const FeatureExtractor& extractor, const Sample& sample) {
  if (sample.rgb.values.empty() || sample.depth.values.empty()) {
    throw InputError("sample " + sample.id + " has no image data");
  }
  Image rgb = sample.rgb;
  for (double& v : rgb.values) v /= 255.0;
  Image depth = sample.depth;
  for (double& v : depth.values) v /= kDepthScale;
  std::vector<BinaryMask> masks;
  masks.reserve(sample.regions.size());
  for (const SampleRegion& r : sample.regions) masks.push_back(rle_decode(r.mask));
  return extractor.extract(rgb, depth, masks);
}

std::vector<CacheRecord> extract_all(const FeatureExtractor& extractor, std::span<const Sample> samples) {
  std::vector<CacheRecord> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.emplace_back(s.id, sample_features(extractor, s));
  return out;
}

std::vector<std::string> vocabulary_texts(std::span<const Sample> samples) {
  std::vector<std::string> texts;
  texts.reserve(samples.size() * 3);
  for (const Sample& s : samples) {
    texts.push_back(s.question);
    texts.push_back(s.answer_free);
    texts.push_back(s.answer_norm);
  }
  return texts;
}

Example make_example(const Sample& sample, const Vocabulary& vocab, SampleFeatures features) {
  if (features.regions.size() != sample.regions.size()) {
    throw InputError("sample " + sample.id + " has " + std::to_string(sample.regions.size()) +
                     " regions but its cached features have " + std::to_string(features.regions.size()));
  }
  Example e;
  e.id = sample.id;
  e.task = sample.task;
  e.question_ids = vocab.encode(sample.question);
  e.free_ids = target_ids(vocab, sample.answer_free);
  e.norm_ids = target_ids(vocab, sample.answer_norm);
  e.answer_norm = sample.answer_norm;
  e.features = std::move(features);
  return e;
}

std::vector<Example> load_examples(std::span<const Sample> samples, const std::filesystem::path& cache_path,
                                   const Vocabulary& vocab) {
  if (!std::filesystem::exists(cache_path)) {
    throw CacheMissError("feature cache " + cache_path.string() + " not found; run `tgvlm cache-features` first");
  }
  const FeatureCache cache = FeatureCache::open(cache_path);
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (!cache.contains(s.id)) {
      throw CacheMissError("sample " + s.id + " is missing from " + cache_path.string() +
                           "; rerun `tgvlm cache-features` for this dataset");
    }
    out.push_back(make_example(s, vocab, cache.read(s.id)));
  }
  return out;
}

std::vector<Sample> drop_distance_head(std::vector<Sample> samples, std::size_t n) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  std::size_t dropped = 0;
  for (Sample& s : samples) {
    if (s.task == TaskType::Distance && dropped < n) {
      ++dropped;
      continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<GroundTruth> ground_truth(std::span<const Sample> samples) {
  std::vector<GroundTruth> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back({s.id, s.task, s.answer_norm});
  return out;
}

TokenFilter answer_filter(TaskType task, const Vocabulary& vocab, std::size_t num_regions) {
  const std::size_t v = vocab.size();
  std::vector<int> digits;
  for (char c = '0'; c <= '9'; ++c) {
    if (vocab.contains(std::string(1, c))) digits.push_back(vocab.id(std::string(1, c)));
  }
  const auto is_digit = [digits](int id) { return std::find(digits.begin(), digits.end(), id) != digits.end(); };
  const auto allow = [v](std::initializer_list<std::span<const int>> groups) {
    std::vector<std::uint8_t> mask(v, 0);
    for (auto g : groups)
      for (int id : g) mask[static_cast<std::size_t>(id)] = 1;
    return mask;
  };
  const std::vector<int> eos{Vocabulary::kEos};

  switch (task) {
    case TaskType::LeftRight: {
      std::vector<int> sides;
      for (const char* w : {"left", "right"})
        if (vocab.contains(w)) sides.push_back(vocab.id(w));
      return [=](std::span<const int> prefix) { return prefix.empty() ? allow({sides}) : allow({eos}); };
    }
    case TaskType::Mcq: {
      std::vector<int> tags;
      for (std::size_t j = 0; j < num_regions && j < static_cast<std::size_t>(Vocabulary::kMaxRegions); ++j) {
        tags.push_back(Vocabulary::region_token(static_cast<int>(j)));
      }
      return [=](std::span<const int> prefix) { return prefix.empty() ? allow({tags}) : allow({eos}); };
    }
    case TaskType::Count:
      // up to two digits, no leading zero unless the answer is 0
      return [=](std::span<const int> prefix) {
        if (prefix.empty()) return allow({digits});
        if (prefix.size() == 1 && prefix[0] != vocab.id("0")) return allow({digits, eos});
        return allow({eos});
      };
    case TaskType::Distance: {
      const std::vector<int> dot{vocab.id(".")};
      return [=](std::span<const int> prefix) {
        std::size_t before = 0, after = 0;
        bool seen_dot = false;
        for (int id : prefix) {
          if (id == dot[0]) {
            seen_dot = true;
          } else if (is_digit(id)) {
            (seen_dot ? after : before) += 1;
          }
        }
        if (!seen_dot) return before == 0 ? allow({digits}) : before < 2 ? allow({digits, dot}) : allow({dot});
        return after < 2 ? allow({digits}) : allow({eos});
      };
    }
  }
  return nullptr;
}

std::string predict_text(const TinyGiantModel& model, const Vocabulary& vocab, const Example& example,
                         const PredictOptions& options) {
  const TokenFilter filter =
      options.constrained ? answer_filter(example.task, vocab, example.features.regions.size()) : nullptr;
  const std::vector<int> ids =
      model.generate(example.question_ids, example.features, options.max_new_tokens, options.moe_enabled, filter);
  return vocab.decode(ids);
}

Prediction predict(const TinyGiantModel& model, const Vocabulary& vocab, const Example& example,
                   const PredictOptions& options) {
  const std::string text = predict_text(model, vocab, example, options);
  return {example.id, normalize_answer(text, example.task).value_or("")};
}

}  // namespace tgvlm
