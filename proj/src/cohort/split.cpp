#include "taper/cohort/split.hpp"

#include <algorithm>
#include <stdexcept>

#include "taper/numerics/random.hpp"

namespace taper::cohort {

std::vector<Fold> patient_kfold_split(const Cohort& cohort, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("patient_kfold_split: k must be at least 2");
  if (k > cohort.patients.size()) {
    throw std::invalid_argument("patient_kfold_split: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(cohort.patients.size()) + " patients");
  }
  std::vector<std::string> ids;
  ids.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) ids.push_back(p.patient_id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(ids));
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < ids.size(); ++i) folds[i % k].push_back(std::move(ids[i]));
  return folds;
}

Fold train_ids(const std::vector<Fold>& folds, std::size_t test_fold) {
  Fold out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != test_fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  return out;
}

}  // namespace taper::cohort
