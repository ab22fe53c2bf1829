#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "taper/cohort/cohort.hpp"

namespace taper::cohort {

struct IngestOptions {
  /// Skip invalid lines (recording them as issues) instead of failing.
  bool lenient = false;
};

struct IngestIssue {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  Cohort cohort;
  std::vector<IngestIssue> issues;
};

/// Raised for a malformed line. what() reads "<field>: line <n>" for missing
/// fields, or "<problem>: line <n>" otherwise.
class IngestError : public std::invalid_argument {
 public:
  IngestError(std::string what, std::size_t line) : std::invalid_argument(std::move(what)), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One patient JSON object per line; blank lines are ignored.
IngestResult read_cohort(std::istream& in, const IngestOptions& options = {});
IngestResult ingest_cohort(const std::filesystem::path& path, const IngestOptions& options = {});

PatientRecord patient_from_json(const nlohmann::json& j);
nlohmann::json patient_to_json(const PatientRecord& record);

void write_cohort(std::ostream& out, const Cohort& cohort);
void write_cohort(const std::filesystem::path& path, const Cohort& cohort);

/// raw_id -> group_id.
using GroupMap = std::unordered_map<std::string, std::string>;

/// CSV with the header "raw_id,group_id".
GroupMap read_group_map(std::istream& in);
GroupMap read_group_map(const std::filesystem::path& path);

}  // namespace taper::cohort
