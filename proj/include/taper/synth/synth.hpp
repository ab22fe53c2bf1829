#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "taper/cohort/cohort.hpp"
#include "taper/numerics/tensor.hpp"

namespace taper::synth {

/// Knobs for a cohort with planted latent conditions.
struct SynthConfig {
  std::size_t n_patients = 1000;
  std::size_t n_conditions = 8;
  /// Codes owned by each condition, per system.
  std::size_t dx_per_condition = 5;
  std::size_t proc_per_condition = 2;
  std::size_t med_per_condition = 2;
  double chronic_fraction = 0.5;
  std::size_t min_conditions = 1;
  std::size_t max_conditions = 3;
  std::size_t min_visits = 2;
  std::size_t max_visits = 5;
  /// Tokens per generated note.
  std::size_t note_tokens = 24;
  std::size_t tokens_per_condition = 6;
  /// Tokens a condition shares with its paired neighbour (2k, 2k+1).
  std::size_t shared_tokens = 2;
  /// Probability that an active condition shows up in a given note.
  double note_signal_prob = 0.75;
  std::size_t noise_vocabulary = 60;
  /// Probability of flipping each planted binary label; must be < 0.5.
  double label_noise = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct Condition {
  std::size_t id = 0;
  bool chronic = false;
  double mortality_weight = 0.0;
  double readmission_weight = 0.0;
  double los_days = 0.0;
  std::vector<std::string> codes;  ///< vocabulary keys, e.g. "dx:c3d1"
  std::vector<std::string> tokens;
};

/// What the generator planted.
struct GroundTruth {
  std::vector<Condition> conditions;
  std::map<std::string, std::vector<std::size_t>> patient_conditions;
  std::map<std::string, std::size_t> code_owner;
  /// Binary labels are [sum of active weights + age_weight * (age >= 70) > threshold],
  /// then flipped with probability label_noise.
  double mortality_threshold = 0.0;
  double readmission_threshold = 0.0;
  double age_weight = 0.0;
  double label_noise = 0.0;

  bool chronic_code(const std::string& key) const { return conditions.at(code_owner.at(key)).chronic; }

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct SyntheticCohort {
  cohort::Cohort cohort;
  GroundTruth truth;
};

SyntheticCohort generate_cohort(const SynthConfig& config);

/// affinity(i, j) = 1 when keys i and j are owned by the same condition or
/// i == j, else 0. Keys unknown to the ground truth only match themselves.
Tensor oracle_code_affinity(const GroundTruth& truth, const std::vector<std::string>& keys);

}  // namespace taper::synth
