#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "taper/cohort/cohort.hpp"
#include "taper/cohort/vocabulary.hpp"

namespace taper::cohort {

enum class Task { readmission30, mortality, los9, code_prediction };

/// CLI spelling: "readmission", "mortality", "los", "codes".
std::string_view to_string(Task task);
Task parse_task(std::string_view text);

inline constexpr std::int64_t kReadmissionWindow = 30 * kSecondsPerDay;
inline constexpr int kLosClasses = 9;

struct TaskLabel {
  std::size_t patient = 0;  ///< index into Cohort::patients
  std::size_t visit = 0;    ///< 0-based visit index
  Task task = Task::mortality;
  /// Binary tasks: 0/1. los9: 1..9.
  int value = 0;
  /// code_prediction: vocabulary indices of the next visit's codes.
  std::vector<std::size_t> next_codes;
};

/// Stay length to class 1..9: ceil(days) clamped to [1, 7] up to a week,
/// 8 up to two weeks, 9 beyond.
int los_bucket(double stay_days);

/// Per-visit labels. Visits without a successor are skipped for
/// readmission30 and code_prediction. `vocab` is required for code_prediction.
std::vector<TaskLabel> extract_labels(const Cohort& cohort, Task task, const CodeVocabulary* vocab = nullptr);

/// Notes feeding the text representation of a visit for a task, joined with
/// single spaces in time order.
///   readmission30: discharge summaries, else notes in [discharge - 48h, discharge]
///   mortality, los9: notes in [admit, admit + 24h]
///   code_prediction: notes up to discharge
std::string select_task_text(const Visit& visit, Task task);

}  // namespace taper::cohort
