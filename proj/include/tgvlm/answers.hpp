#pragma once

// Rule-based answer normalization and per-task scoring.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tgvlm/task.hpp"

namespace tgvlm {

inline constexpr double kDefaultDistanceTolerance = 0.10;

// Extracts the canonical answer from free text, or nullopt when nothing
// usable is found (a normalization failure).
std::optional<std::string> normalize_answer(std::string_view free_text, TaskType task);

// Whether `answer` has the canonical form of its task.
bool matches_grammar(std::string_view answer, TaskType task);

struct Prediction {
  std::string id;
  std::string answer;  // empty when normalization failed
};

struct GroundTruth {
  std::string id;
  TaskType task = TaskType::Distance;
  std::string answer_norm;
};

struct TaskScore {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t failures = 0;  // predictions that did not normalize

  double accuracy() const { return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total); }
  bool operator==(const TaskScore&) const = default;
};

struct ScoreReport {
  std::array<TaskScore, kNumTasks> tasks{};
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t failures = 0;
  double overall = 0.0;  // percent, mean over all samples

  nlohmann::json to_json() const;
  std::string table() const;
  bool operator==(const ScoreReport&) const = default;
};

bool answer_correct(std::string_view predicted, std::string_view truth, TaskType task,
                    double distance_tolerance = kDefaultDistanceTolerance);

// Throws ScoringError naming the ids when the two id sets differ.
ScoreReport score(std::span<const Prediction> predictions, std::span<const GroundTruth> truth,
                  double distance_tolerance = kDefaultDistanceTolerance);

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace tgvlm
