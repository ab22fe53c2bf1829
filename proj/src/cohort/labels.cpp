#include "taper/cohort/labels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taper::cohort {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::readmission30: return "readmission";
    case Task::mortality: return "mortality";
    case Task::los9: return "los";
    case Task::code_prediction: return "codes";
  }
  return "mortality";
}

Task parse_task(std::string_view text) {
  if (text == "readmission" || text == "readmission30") return Task::readmission30;
  if (text == "mortality") return Task::mortality;
  if (text == "los" || text == "los9") return Task::los9;
  if (text == "codes" || text == "code_prediction") return Task::code_prediction;
  throw std::invalid_argument("unknown task '" + std::string(text) + "' (expected readmission, mortality, los or codes)");
}

int los_bucket(double stay_days) {
  if (!(stay_days >= 0.0)) throw std::invalid_argument("los_bucket: negative stay " + std::to_string(stay_days));
  if (stay_days <= 7.0) return std::clamp(static_cast<int>(std::ceil(stay_days)), 1, 7);
  if (stay_days <= 14.0) return 8;
  return 9;
}

std::vector<TaskLabel> extract_labels(const Cohort& cohort, Task task, const CodeVocabulary* vocab) {
  if (task == Task::code_prediction && vocab == nullptr) {
    throw std::invalid_argument("extract_labels: code_prediction needs a vocabulary");
  }
  std::vector<TaskLabel> labels;
  for (std::size_t p = 0; p < cohort.patients.size(); ++p) {
    const auto& visits = cohort.patients[p].visits;
    for (std::size_t v = 0; v < visits.size(); ++v) {
      TaskLabel label{p, v, task, 0, {}};
      const bool has_next = v + 1 < visits.size();
      switch (task) {
        case Task::readmission30:
          if (!has_next) continue;
          label.value = visits[v + 1].admit_time - visits[v].discharge_time <= kReadmissionWindow ? 1 : 0;
          break;
        case Task::mortality:
          label.value = visits[v].died_in_visit ? 1 : 0;
          break;
        case Task::los9:
          label.value = los_bucket(visits[v].stay_days());
          break;
        case Task::code_prediction:
          if (!has_next) continue;
          label.next_codes = vocab->visit_indices(visits[v + 1]);
          break;
      }
      labels.push_back(std::move(label));
    }
  }
  return labels;
}

std::string select_task_text(const Visit& visit, Task task) {
  std::vector<const Note*> chosen;
  const auto in_window = [&](std::int64_t lo, std::int64_t hi) {
    for (const Note& n : visit.notes)
      if (n.time >= lo && n.time <= hi) chosen.push_back(&n);
  };
  switch (task) {
    case Task::readmission30:
      for (const Note& n : visit.notes)
        if (n.is_discharge_summary()) chosen.push_back(&n);
      if (chosen.empty()) in_window(visit.discharge_time - 48 * kSecondsPerHour, visit.discharge_time);
      break;
    case Task::mortality:
    case Task::los9:
      in_window(visit.admit_time, visit.admit_time + 24 * kSecondsPerHour);
      break;
    case Task::code_prediction:
      for (const Note& n : visit.notes)
        if (n.time <= visit.discharge_time) chosen.push_back(&n);
      break;
  }
  std::stable_sort(chosen.begin(), chosen.end(), [](const Note* a, const Note* b) { return a->time < b->time; });
  std::string text;
  for (const Note* n : chosen) {
    if (n->text.empty()) continue;
    if (!text.empty()) text.push_back(' ');
    text += n->text;
  }
  return text;
}

}  // namespace taper::cohort
