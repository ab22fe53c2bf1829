#include "taper/cohort/vocabulary.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "taper/numerics/random.hpp"

namespace taper::cohort {

std::unordered_map<std::string, std::size_t> code_frequencies(const Cohort& cohort) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& p : cohort.patients) {
    for (const auto& v : p.visits) {
      std::set<std::string> keys;
      for (const auto& c : v.codes) keys.insert(c.key());
      for (const auto& k : keys) ++counts[k];
    }
  }
  return counts;
}

CodeVocabulary CodeVocabulary::build(const Cohort& cohort) {
  const auto counts = code_frequencies(cohort);
  const std::map<std::string, std::size_t> ordered(counts.begin(), counts.end());
  CodeVocabulary vocab;
  for (const auto& [key, n] : ordered) {
    vocab.keys_.push_back(key);
    vocab.frequencies_.push_back(n);
  }
  vocab.reindex();
  return vocab;
}

void CodeVocabulary::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < keys_.size(); ++i) index_.emplace(keys_[i], i);
}

std::optional<std::size_t> CodeVocabulary::index_of(const std::string& key) const {
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  return std::nullopt;
}

CodeSystem CodeVocabulary::system(std::size_t index) const {
  const std::string& k = keys_.at(index);
  return parse_code_system(std::string_view(k).substr(0, k.find(':')));
}

std::string CodeVocabulary::content_hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& k : keys_) {
    h = fnv1a64(k, h);
    h = fnv1a64("\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::size_t> CodeVocabulary::visit_indices(const Visit& visit) const {
  std::vector<std::size_t> out;
  for (const auto& c : visit.codes)
    if (auto i = index_of(c.key())) out.push_back(*i);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Tensor CodeVocabulary::encode_visit(const Visit& visit) const {
  Tensor t({1, size()});
  for (std::size_t i : visit_indices(visit)) t[i] = 1.0;
  return t;
}

nlohmann::json CodeVocabulary::to_json() const {
  nlohmann::json j;
  j["codes"] = keys_;
  j["frequencies"] = frequencies_;
  j["hash"] = content_hash();
  return j;
}

CodeVocabulary CodeVocabulary::from_json(const nlohmann::json& j) {
  CodeVocabulary v;
  v.keys_ = j.at("codes").get<std::vector<std::string>>();
  v.frequencies_ = j.at("frequencies").get<std::vector<std::size_t>>();
  if (v.keys_.size() != v.frequencies_.size()) throw std::invalid_argument("vocabulary: codes/frequencies length mismatch");
  v.reindex();
  if (j.contains("hash") && j.at("hash").get<std::string>() != v.content_hash()) {
    throw std::invalid_argument("vocabulary: stored hash does not match its codes");
  }
  return v;
}

// ---------------------------------------------------------------------------

DemographicsEncoder DemographicsEncoder::build(const Cohort& cohort) {
  std::set<std::string> genders, races;
  for (const auto& p : cohort.patients) {
    genders.insert(p.demographics.gender);
    races.insert(p.demographics.race);
  }
  DemographicsEncoder enc;
  enc.genders_.assign(genders.begin(), genders.end());
  enc.races_.assign(races.begin(), races.end());
  return enc;
}

std::size_t DemographicsEncoder::age_bucket(double age) {
  if (age < 30) return 0;
  if (age < 50) return 1;
  if (age < 70) return 2;
  return 3;
}

Tensor DemographicsEncoder::encode(const PatientRecord& record, std::size_t visit) const {
  Tensor d({1, dimension()});
  const auto slot_of = [](const std::vector<std::string>& cats, const std::string& v) {
    const auto it = std::lower_bound(cats.begin(), cats.end(), v);
    return (it != cats.end() && *it == v) ? static_cast<std::size_t>(it - cats.begin()) : cats.size();
  };
  d[slot_of(genders_, record.demographics.gender)] = 1.0;
  d[genders_.size() + 1 + slot_of(races_, record.demographics.race)] = 1.0;
  double age = record.demographics.age;
  if (visit < record.visits.size() && !record.visits.empty()) {
    age += static_cast<double>(record.visits[visit].admit_time - record.visits.front().admit_time) /
           (365.25 * kSecondsPerDay);
  }
  d[age_slot(age_bucket(age))] = 1.0;
  return d;
}

nlohmann::json DemographicsEncoder::to_json() const { return {{"genders", genders_}, {"races", races_}}; }

DemographicsEncoder DemographicsEncoder::from_json(const nlohmann::json& j) {
  DemographicsEncoder enc;
  enc.genders_ = j.at("genders").get<std::vector<std::string>>();
  enc.races_ = j.at("races").get<std::vector<std::string>>();
  std::sort(enc.genders_.begin(), enc.genders_.end());
  std::sort(enc.races_.begin(), enc.races_.end());
  return enc;
}

}  // namespace taper::cohort
