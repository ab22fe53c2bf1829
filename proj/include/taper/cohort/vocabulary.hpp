#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "taper/cohort/cohort.hpp"
#include "taper/numerics/tensor.hpp"

namespace taper::cohort {

/// Dense index over (system, group) code keys, sorted lexicographically.
class CodeVocabulary {
 public:
  CodeVocabulary() = default;

  /// Every key seen in the cohort, with per-visit occurrence counts.
  static CodeVocabulary build(const Cohort& cohort);

  std::size_t size() const { return keys_.size(); }
  std::optional<std::size_t> index_of(const std::string& key) const;
  const std::string& key(std::size_t index) const { return keys_.at(index); }
  CodeSystem system(std::size_t index) const;
  std::size_t frequency(std::size_t index) const { return frequencies_.at(index); }
  const std::vector<std::string>& keys() const { return keys_; }

  /// Hex FNV-1a digest of the ordered keys. Checkpoints embed it.
  std::string content_hash() const;

  /// c_t: 1 x |C| with ones at the visit's in-vocabulary codes.
  Tensor encode_visit(const Visit& visit) const;
  /// Sorted, de-duplicated in-vocabulary indices of the visit's codes.
  std::vector<std::size_t> visit_indices(const Visit& visit) const;

  nlohmann::json to_json() const;
  static CodeVocabulary from_json(const nlohmann::json& j);

 private:
  void reindex();

  std::vector<std::string> keys_;
  std::vector<std::size_t> frequencies_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-visit occurrence counts (a code repeated within one visit counts once).
std::unordered_map<std::string, std::size_t> code_frequencies(const Cohort& cohort);

/// One-hot demographics: [gender..., gender_other, race..., race_other,
/// age bucket x4]. Categories are fixed when built from a cohort.
class DemographicsEncoder {
 public:
  static constexpr std::size_t kAgeBuckets = 4;

  DemographicsEncoder() = default;
  static DemographicsEncoder build(const Cohort& cohort);

  std::size_t dimension() const { return genders_.size() + races_.size() + 2 + kAgeBuckets; }
  /// Buckets [0,30), [30,50), [50,70), 70+; ages under 18 never reach here
  /// after preprocessing and fall in bucket 0.
  static std::size_t age_bucket(double age);

  /// d_t for visit `visit` (0-based). Age advances with time since the first admission.
  Tensor encode(const PatientRecord& record, std::size_t visit) const;

  nlohmann::json to_json() const;
  static DemographicsEncoder from_json(const nlohmann::json& j);

  std::size_t gender_other_slot() const { return genders_.size(); }
  std::size_t race_other_slot() const { return genders_.size() + 1 + races_.size(); }
  std::size_t age_slot(std::size_t bucket) const { return genders_.size() + races_.size() + 2 + bucket; }

 private:
  std::vector<std::string> genders_;
  std::vector<std::string> races_;
};

}  // namespace taper::cohort
