#include "taper/cohort/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

namespace taper::cohort {

std::string_view to_string(CodeSystem system) {
  switch (system) {
    case CodeSystem::diagnosis: return "dx";
    case CodeSystem::procedure: return "proc";
    case CodeSystem::medication: return "med";
  }
  return "dx";
}

CodeSystem parse_code_system(std::string_view text) {
  if (text == "dx") return CodeSystem::diagnosis;
  if (text == "proc") return CodeSystem::procedure;
  if (text == "med") return CodeSystem::medication;
  throw std::invalid_argument("unknown code system '" + std::string(text) + "' (expected dx, proc or med)");
}

std::string Code::key() const {
  return std::string(to_string(system)) + ":" + (group_id ? *group_id : raw_id);
}

bool Note::is_discharge_summary() const {
  if (!kind) return false;
  std::string k;
  for (char c : *kind) k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return k.starts_with("discharge");
}

const PatientRecord* Cohort::find(std::string_view patient_id) const {
  for (const auto& p : patients)
    if (p.patient_id == patient_id) return &p;
  return nullptr;
}

std::size_t Cohort::visit_count() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += p.visits.size();
  return n;
}

Cohort Cohort::subset(const std::vector<std::string>& ids) const {
  const std::unordered_set<std::string> wanted(ids.begin(), ids.end());
  Cohort out;
  for (const auto& p : patients)
    if (wanted.contains(p.patient_id)) out.patients.push_back(p);
  return out;
}

std::string validate_record(const PatientRecord& record) {
  if (record.patient_id.empty()) return "patient_id is empty";
  for (std::size_t v = 0; v < record.visits.size(); ++v) {
    const Visit& visit = record.visits[v];
    const std::string where = "visit " + std::to_string(v);
    if (visit.discharge_time < visit.admit_time) return where + ": discharge_time before admit_time";
    if (v > 0 && visit.admit_time <= record.visits[v - 1].admit_time) return where + ": visits not strictly ordered by admit_time";
    for (const Code& c : visit.codes)
      if (c.raw_id.empty()) return where + ": empty code";
    for (const Note& n : visit.notes) {
      if (n.time < visit.admit_time - kSecondsPerDay || n.time > visit.discharge_time + kSecondsPerDay) {
        return where + ": note time outside the visit window";
      }
    }
  }
  return {};
}

}  // namespace taper::cohort
