#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace taper::cohort {

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 24 * kSecondsPerHour;

enum class CodeSystem { diagnosis, procedure, medication };

/// "dx", "proc" or "med" (the JSONL spelling).
std::string_view to_string(CodeSystem system);
CodeSystem parse_code_system(std::string_view text);

struct Code {
  CodeSystem system = CodeSystem::diagnosis;
  std::string raw_id;
  std::optional<std::string> group_id;

  /// Vocabulary key, e.g. "dx:250". Uses the group when present.
  std::string key() const;

  bool operator==(const Code&) const = default;
};

struct Note {
  std::int64_t time = 0;
  std::optional<std::string> kind;
  std::string text;

  bool is_discharge_summary() const;
  bool operator==(const Note&) const = default;
};

struct Visit {
  std::int64_t admit_time = 0;
  std::int64_t discharge_time = 0;
  std::vector<Code> codes;
  std::vector<Note> notes;
  bool died_in_visit = false;

  double stay_days() const { return static_cast<double>(discharge_time - admit_time) / kSecondsPerDay; }
  bool operator==(const Visit&) const = default;
};

struct Demographics {
  double age = 0.0;
  std::string gender;
  std::string race;

  bool operator==(const Demographics&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  Demographics demographics;
  /// Strictly increasing admit_time.
  std::vector<Visit> visits;

  bool operator==(const PatientRecord&) const = default;
};

struct Cohort {
  std::vector<PatientRecord> patients;

  const PatientRecord* find(std::string_view patient_id) const;
  std::size_t visit_count() const;
  /// Patients whose id is in `ids`, in cohort order.
  Cohort subset(const std::vector<std::string>& ids) const;

  bool operator==(const Cohort&) const = default;
};

/// Empty string when the record satisfies the visit/note invariants,
/// otherwise a description of the first violation.
std::string validate_record(const PatientRecord& record);

}  // namespace taper::cohort
