#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taper/cohort/cohort.hpp"

namespace taper::cohort {

using Fold = std::vector<std::string>;

/// Partitions patient ids into k folds whose sizes differ by at most one.
/// Ids are sorted, shuffled with `seed`, then dealt round-robin.
std::vector<Fold> patient_kfold_split(const Cohort& cohort, std::size_t k, std::uint64_t seed);

/// Ids of every fold except `test_fold`.
Fold train_ids(const std::vector<Fold>& folds, std::size_t test_fold);

}  // namespace taper::cohort
