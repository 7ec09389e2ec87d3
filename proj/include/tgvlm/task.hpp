#pragma once

#include <array>
#include <string>
#include <string_view>

namespace tgvlm {

enum class TaskType { Distance = 0, Count = 1, Mcq = 2, LeftRight = 3 };

inline constexpr std::size_t kNumTasks = 4;
inline constexpr std::array<TaskType, kNumTasks> kAllTasks = {TaskType::Distance, TaskType::Count, TaskType::Mcq,
                                                             TaskType::LeftRight};

std::string_view task_name(TaskType task);
TaskType parse_task(std::string_view name);  // throws FormatError
inline std::size_t task_index(TaskType task) { return static_cast<std::size_t>(task); }

}  // namespace tgvlm
