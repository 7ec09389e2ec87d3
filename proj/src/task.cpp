#include "tgvlm/task.hpp"

#include "tgvlm/errors.hpp"

namespace tgvlm {

std::string_view task_name(TaskType task) {
  switch (task) {
    case TaskType::Distance:
      return "distance";
    case TaskType::Count:
      return "count";
    case TaskType::Mcq:
      return "mcq";
    case TaskType::LeftRight:
      return "left_right";
  }
  return "unknown";
}

TaskType parse_task(std::string_view name) {
  for (TaskType t : kAllTasks) {
    if (task_name(t) == name) return t;
  }
  throw FormatError("unknown task type '" + std::string(name) + "'");
}

}  // namespace tgvlm
