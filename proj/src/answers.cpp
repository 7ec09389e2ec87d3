#include "tgvlm/answers.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"

namespace tgvlm {

using nlohmann::json;

namespace {

const std::regex kRegionTag(R"(<R\d+>)");
const std::regex kNumber(R"(\d+(?:\.\d+)?)");
const std::regex kInteger(R"(\d+)");
const std::regex kSide(R"(\b(left|right)\b)", std::regex::icase);
const std::regex kOptionLabel(R"(\(?\b([A-D])\b\)?)");

std::optional<std::string> first_match(const std::string& text, const std::regex& re, int group = 0) {
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return m[group].str();
}

std::string without_region_tags(std::string_view text) {
  return std::regex_replace(std::string(text), kRegionTag, " ");
}

}  // namespace

std::optional<std::string> normalize_answer(std::string_view free_text, TaskType task) {
  switch (task) {
    case TaskType::Distance: {
      auto num = first_match(without_region_tags(free_text), kNumber);
      if (!num) return std::nullopt;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f", std::stod(*num));
      return std::string(buf);
    }
    case TaskType::Count: {
      auto num = first_match(without_region_tags(free_text), kInteger);
      if (!num) return std::nullopt;
      const std::size_t nz = num->find_first_not_of('0');
      return nz == std::string::npos ? std::string("0") : num->substr(nz);
    }
    case TaskType::LeftRight: {
      auto side = first_match(std::string(free_text), kSide, 1);
      if (!side) return std::nullopt;
      for (char& c : *side) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return side;
    }
    case TaskType::Mcq: {
      const std::string text(free_text);
      if (auto t = first_match(text, kRegionTag)) return t;
      return first_match(text, kOptionLabel, 1);
    }
  }
  return std::nullopt;
}

bool matches_grammar(std::string_view answer, TaskType task) {
  static const std::regex distance(R"(\d+\.\d{2})");
  static const std::regex count(R"(0|[1-9]\d*)");
  static const std::regex side(R"(left|right)");
  static const std::regex mcq(R"(<R\d+>|[A-D])");
  const std::string s(answer);
  switch (task) {
    case TaskType::Distance: return std::regex_match(s, distance);
    case TaskType::Count: return std::regex_match(s, count);
    case TaskType::LeftRight: return std::regex_match(s, side);
    case TaskType::Mcq: return std::regex_match(s, mcq);
  }
  return false;
}

bool answer_correct(std::string_view predicted, std::string_view truth, TaskType task, double distance_tolerance) {
  if (!matches_grammar(predicted, task)) return false;
  if (task != TaskType::Distance) return predicted == truth;
  const double p = std::stod(std::string(predicted));
  const double t = std::stod(std::string(truth));
  if (t == 0.0) return p == 0.0;
  // Small slack so a value exactly on the threshold is not lost to rounding.
  return std::abs(p - t) / std::abs(t) <= distance_tolerance + 1e-12;
}

ScoreReport score(std::span<const Prediction> predictions, std::span<const GroundTruth> truth,
                  double distance_tolerance) {
  std::map<std::string, const Prediction*> by_id;
  for (const Prediction& p : predictions) {
    if (!by_id.emplace(p.id, &p).second) throw ScoringError("duplicate prediction id " + p.id);
  }
  std::vector<std::string> missing;
  std::set<std::string> truth_ids;
  for (const GroundTruth& g : truth) {
    truth_ids.insert(g.id);
    if (!by_id.count(g.id)) missing.push_back(g.id);
  }
  std::vector<std::string> extra;
  for (const auto& [id, _] : by_id)
    if (!truth_ids.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "prediction ids do not match ground truth;";
    const auto list = [&](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + label + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
    };
    list("missing", missing);
    list("unexpected", extra);
    throw ScoringError(msg);
  }

  ScoreReport report;
  for (const GroundTruth& g : truth) {
    TaskScore& ts = report.tasks[task_index(g.task)];
    const std::string& answer = by_id.at(g.id)->answer;
    ++ts.total;
    if (!matches_grammar(answer, g.task)) {
      ++ts.failures;
    } else if (answer_correct(answer, g.answer_norm, g.task, distance_tolerance)) {
      ++ts.correct;
    }
  }
  for (const TaskScore& ts : report.tasks) {
    report.total += ts.total;
    report.correct += ts.correct;
    report.failures += ts.failures;
  }
  report.overall =
      report.total == 0 ? 0.0 : 100.0 * static_cast<double>(report.correct) / static_cast<double>(report.total);
  return report;
}

json ScoreReport::to_json() const {
  json tasks_json = json::object();
  for (TaskType t : kAllTasks) {
    const TaskScore& ts = tasks[task_index(t)];
    tasks_json[std::string(task_name(t))] = {
        {"count", ts.total}, {"correct", ts.correct}, {"failures", ts.failures}, {"accuracy", ts.accuracy()}};
  }
  return {{"overall", overall},
          {"total", total},
          {"correct", correct},
          {"normalization_failures", failures},
          {"tasks", tasks_json}};
}

std::string ScoreReport::table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %7s %8s %9s %10s\n", "task", "count", "correct", "failures", "accuracy");
  out << line;
  for (TaskType t : kAllTasks) {
    const TaskScore& ts = tasks[task_index(t)];
    std::snprintf(line, sizeof line, "%-12s %7zu %8zu %9zu %9.2f%%\n", std::string(task_name(t)).c_str(), ts.total,
                  ts.correct, ts.failures, ts.accuracy());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %7zu %8zu %9zu %9.2f%%\n", "overall", total, correct, failures, overall);
  out << line;
  return out.str();
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::string out;
  for (const Prediction& p : predictions) {
    out += json{{"id", p.id}, {"answer", p.answer}}.dump();
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<Prediction> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("answer").get<std::string>()});
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tgvlm
