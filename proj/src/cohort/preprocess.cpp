#include "taper/cohort/preprocess.hpp"

#include <stdexcept>

#include "taper/cohort/vocabulary.hpp"

namespace taper::cohort {

Cohort preprocess(const Cohort& input, const PreprocessOptions& options) {
  Cohort cohort = input;
  for (auto& p : cohort.patients) {
    for (auto& v : p.visits) {
      std::vector<Code> kept;
      for (auto& c : v.codes) {
        if (options.excluded_codes.contains(c.raw_id)) continue;
        if (options.group_map) {
          const auto it = options.group_map->find(c.raw_id);
          c.group_id = it != options.group_map->end() ? it->second : c.raw_id;
        } else if (!c.group_id) {
          c.group_id = c.raw_id;
        }
        kept.push_back(std::move(c));
      }
      v.codes = std::move(kept);
    }
  }

  bool changed = true;
  while (changed) {
    changed = false;
    std::erase_if(cohort.patients, [&](const PatientRecord& p) {
      const bool drop = p.demographics.age < options.min_age || p.visits.size() < options.min_visits;
      changed = changed || drop;
      return drop;
    });
    const auto counts = code_frequencies(cohort);
    for (auto& p : cohort.patients) {
      for (auto& v : p.visits) {
        const auto removed = std::erase_if(v.codes, [&](const Code& c) { return counts.at(c.key()) < options.min_code_freq; });
        changed = changed || removed > 0;
      }
    }
  }
  if (cohort.patients.empty()) throw std::invalid_argument("preprocess: no patients left after filtering");
  return cohort;
}

}  // namespace taper::cohort
