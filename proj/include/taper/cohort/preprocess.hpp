#pragma once

#include <optional>
#include <set>
#include <string>

#include "taper/cohort/cohort.hpp"
#include "taper/cohort/io.hpp"

namespace taper::cohort {

struct PreprocessOptions {
  std::size_t min_code_freq = 5;
  double min_age = 18.0;
  std::size_t min_visits = 1;
  std::optional<GroupMap> group_map;
  /// Raw ids removed before counting (e.g. outcome-revealing codes).
  std::set<std::string> excluded_codes;
};

/// Groups codes, drops excluded and low-frequency codes, and drops patients
/// younger than min_age or with fewer than min_visits visits. Filtering
/// repeats until nothing changes, so the result is a fixed point and the
/// operation is idempotent. Throws if no patient survives.
Cohort preprocess(const Cohort& cohort, const PreprocessOptions& options);

}  // namespace taper::cohort
