#include "taper/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "taper/numerics/json_fields.hpp"
#include "taper/numerics/random.hpp"

namespace taper::synth {

using cohort::Code;
using cohort::CodeSystem;
using cohort::kSecondsPerDay;
using cohort::kSecondsPerHour;

void SynthConfig::validate() const {
  if (n_patients == 0 || n_conditions == 0 || dx_per_condition == 0 || note_tokens == 0 || tokens_per_condition == 0) {
    throw std::invalid_argument("synth: counts must be positive");
  }
  if (!(chronic_fraction >= 0.0 && chronic_fraction <= 1.0)) throw std::invalid_argument("synth: chronic_fraction outside [0, 1]");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw std::invalid_argument("synth: label_noise must be in [0, 0.5)");
  if (!(note_signal_prob >= 0.0 && note_signal_prob <= 1.0)) throw std::invalid_argument("synth: note_signal_prob outside [0, 1]");
  if (min_visits == 0 || min_visits > max_visits) throw std::invalid_argument("synth: need 1 <= min_visits <= max_visits");
  if (min_conditions == 0 || min_conditions > max_conditions || max_conditions > n_conditions) {
    throw std::invalid_argument("synth: need 1 <= min_conditions <= max_conditions <= n_conditions");
  }
  if (shared_tokens > tokens_per_condition) throw std::invalid_argument("synth: shared_tokens exceeds tokens_per_condition");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_patients", n_patients},
          {"n_conditions", n_conditions},
          {"dx_per_condition", dx_per_condition},
          {"proc_per_condition", proc_per_condition},
          {"med_per_condition", med_per_condition},
          {"chronic_fraction", chronic_fraction},
          {"min_conditions", min_conditions},
          {"max_conditions", max_conditions},
          {"min_visits", min_visits},
          {"max_visits", max_visits},
          {"note_tokens", note_tokens},
          {"tokens_per_condition", tokens_per_condition},
          {"shared_tokens", shared_tokens},
          {"note_signal_prob", note_signal_prob},
          {"noise_vocabulary", noise_vocabulary},
          {"label_noise", label_noise},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw std::invalid_argument("synth: unknown key '" + key + "'");
  }
  const auto get = [&](const char* key, auto& field) { read_field(j, key, field, "synth"); };
  get("n_patients", c.n_patients);
  get("n_conditions", c.n_conditions);
  get("dx_per_condition", c.dx_per_condition);
  get("proc_per_condition", c.proc_per_condition);
  get("med_per_condition", c.med_per_condition);
  get("chronic_fraction", c.chronic_fraction);
  get("min_conditions", c.min_conditions);
  get("max_conditions", c.max_conditions);
  get("min_visits", c.min_visits);
  get("max_visits", c.max_visits);
  get("note_tokens", c.note_tokens);
  get("tokens_per_condition", c.tokens_per_condition);
  get("shared_tokens", c.shared_tokens);
  get("note_signal_prob", c.note_signal_prob);
  get("noise_vocabulary", c.noise_vocabulary);
  get("label_noise", c.label_noise);
  get("seed", c.seed);
  return c;
}

nlohmann::json GroundTruth::to_json() const {
  nlohmann::json j;
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : conditions) {
    j["conditions"].push_back({{"id", c.id},
                               {"chronic", c.chronic},
                               {"mortality_weight", c.mortality_weight},
                               {"readmission_weight", c.readmission_weight},
                               {"los_days", c.los_days},
                               {"codes", c.codes},
                               {"tokens", c.tokens}});
  }
  j["patient_conditions"] = patient_conditions;
  j["mortality_threshold"] = mortality_threshold;
  j["readmission_threshold"] = readmission_threshold;
  j["age_weight"] = age_weight;
  j["label_noise"] = label_noise;
  return j;
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  GroundTruth t;
  for (const auto& jc : j.at("conditions")) {
    Condition c;
    c.id = jc.at("id");
    c.chronic = jc.at("chronic");
    c.mortality_weight = jc.at("mortality_weight");
    c.readmission_weight = jc.at("readmission_weight");
    c.los_days = jc.at("los_days");
    c.codes = jc.at("codes").get<std::vector<std::string>>();
    c.tokens = jc.at("tokens").get<std::vector<std::string>>();
    for (const auto& k : c.codes) t.code_owner[k] = c.id;
    t.conditions.push_back(std::move(c));
  }
  t.patient_conditions = j.at("patient_conditions").get<std::map<std::string, std::vector<std::size_t>>>();
  t.mortality_threshold = j.at("mortality_threshold");
  t.readmission_threshold = j.at("readmission_threshold");
  t.age_weight = j.at("age_weight");
  t.label_noise = j.at("label_noise");
  return t;
}

namespace {

constexpr std::int64_t kEpochStart = 1262304000;  // 2010-01-01
constexpr double kYearSeconds = 365.25 * kSecondsPerDay;

const std::vector<std::string> kGenders{"F", "M"};
const std::vector<std::string> kRaces{"asian", "black", "hispanic", "white"};

std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(std::span<std::size_t>(all));
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::string make_note(Rng& rng, const SynthConfig& cfg, const GroundTruth& truth, const std::vector<std::size_t>& active) {
  std::vector<std::string> words;
  for (std::size_t c : active) {
    if (!rng.bernoulli(cfg.note_signal_prob)) continue;
    const auto& toks = truth.conditions[c].tokens;
    const std::size_t n = std::min<std::size_t>(toks.size(), 3 + rng.index(2));
    for (std::size_t i = 0; i < n; ++i) words.push_back(toks[rng.index(toks.size())]);
  }
  while (words.size() < cfg.note_tokens) words.push_back("n" + std::to_string(rng.index(cfg.noise_vocabulary)));
  rng.shuffle(std::span<std::string>(words));
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text += (i % 8 == 0) ? ". " : " ";
    text += words[i];
  }
  return text + ".";
}

}  // namespace

SyntheticCohort generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticCohort out;
  GroundTruth& truth = out.truth;
  truth.mortality_threshold = 0.9;
  truth.readmission_threshold = 0.9;
  truth.age_weight = 0.35;
  truth.label_noise = cfg.label_noise;

  const auto n_chronic = static_cast<std::size_t>(std::lround(cfg.chronic_fraction * static_cast<double>(cfg.n_conditions)));
  const auto chronic_ids = sample_distinct(rng, cfg.n_conditions, n_chronic);
  for (std::size_t c = 0; c < cfg.n_conditions; ++c) {
    Condition cond;
    cond.id = c;
    cond.chronic = std::binary_search(chronic_ids.begin(), chronic_ids.end(), c);
    cond.mortality_weight = rng.uniform(0.1, 1.0);
    cond.readmission_weight = rng.uniform(0.1, 1.0);
    cond.los_days = rng.uniform(0.5, 5.0);
    const std::string stem = "c" + std::to_string(c);
    for (std::size_t k = 0; k < cfg.dx_per_condition; ++k) cond.codes.push_back("dx:" + stem + "d" + std::to_string(k));
    for (std::size_t k = 0; k < cfg.proc_per_condition; ++k) cond.codes.push_back("proc:" + stem + "p" + std::to_string(k));
    for (std::size_t k = 0; k < cfg.med_per_condition; ++k) cond.codes.push_back("med:" + stem + "m" + std::to_string(k));
    for (std::size_t k = 0; k < cfg.tokens_per_condition - cfg.shared_tokens; ++k) {
      cond.tokens.push_back(stem + "w" + std::to_string(k));
    }
    for (std::size_t k = 0; k < cfg.shared_tokens; ++k) cond.tokens.push_back("pair" + std::to_string(c / 2) + "w" + std::to_string(k));
    for (const auto& key : cond.codes) truth.code_owner[key] = c;
    truth.conditions.push_back(std::move(cond));
  }

  const auto flip = [&](bool y) { return rng.bernoulli(cfg.label_noise) ? !y : y; };

  for (std::size_t p = 0; p < cfg.n_patients; ++p) {
    char id[16];
    std::snprintf(id, sizeof id, "P%06zu", p);
    cohort::PatientRecord rec;
    rec.patient_id = id;
    rec.demographics.age = std::floor(rng.uniform(18.0, 90.0));
    rec.demographics.gender = kGenders[rng.index(kGenders.size())];
    rec.demographics.race = kRaces[rng.index(kRaces.size())];

    const std::size_t n_cond = static_cast<std::size_t>(rng.integer(static_cast<long long>(cfg.min_conditions),
                                                                    static_cast<long long>(cfg.max_conditions)));
    const auto conds = sample_distinct(rng, cfg.n_conditions, n_cond);
    truth.patient_conditions[rec.patient_id] = conds;
    const std::size_t n_visits = static_cast<std::size_t>(rng.integer(static_cast<long long>(cfg.min_visits),
                                                                      static_cast<long long>(cfg.max_visits)));
    std::vector<std::size_t> acute_visit(cfg.n_conditions, n_visits);
    for (std::size_t c : conds)
      if (!truth.conditions[c].chronic) acute_visit[c] = rng.index(n_visits);

    std::int64_t admit = kEpochStart + static_cast<std::int64_t>(rng.uniform(0.0, 1000.0) * kSecondsPerDay);
    const std::int64_t first_admit = admit;
    for (std::size_t v = 0; v < n_visits; ++v) {
      std::vector<std::size_t> active;
      for (std::size_t c : conds)
        if (truth.conditions[c].chronic || acute_visit[c] == v) active.push_back(c);

      cohort::Visit visit;
      visit.admit_time = admit;
      double stay = 0.5 + rng.exponential(1.0);
      for (std::size_t c : active) stay += truth.conditions[c].los_days;
      visit.discharge_time = admit + static_cast<std::int64_t>(stay * kSecondsPerDay);

      for (std::size_t c : active) {
        for (const auto& key : truth.conditions[c].codes) {
          const auto colon = key.find(':');
          visit.codes.push_back(Code{cohort::parse_code_system(key.substr(0, colon)), key.substr(colon + 1), std::nullopt});
        }
      }

      const double age_now = rec.demographics.age + static_cast<double>(admit - first_admit) / kYearSeconds;
      double mortality = age_now >= 70.0 ? truth.age_weight : 0.0;
      double readmit = 0.0;
      for (std::size_t c : active) {
        mortality += truth.conditions[c].mortality_weight;
        readmit += truth.conditions[c].readmission_weight;
      }
      visit.died_in_visit = flip(mortality > truth.mortality_threshold);

      const std::int64_t stay_s = visit.discharge_time - visit.admit_time;
      visit.notes.push_back({admit + static_cast<std::int64_t>(rng.uniform(0.0, 12.0) * kSecondsPerHour), std::string("admission"),
                             make_note(rng, cfg, truth, active)});
      if (stay_s > 36 * kSecondsPerHour) {
        const auto t = admit + 24 * kSecondsPerHour + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(stay_s - 24 * kSecondsPerHour));
        visit.notes.push_back({t, std::string("nursing"), make_note(rng, cfg, truth, active)});
      }
      visit.notes.push_back({visit.discharge_time, std::string("discharge_summary"), make_note(rng, cfg, truth, active)});

      const bool readmitted = flip(readmit > truth.readmission_threshold);
      const double gap_days = readmitted ? rng.uniform(2.0, 29.0) : rng.uniform(35.0, 300.0);
      admit = visit.discharge_time + static_cast<std::int64_t>(gap_days * kSecondsPerDay);
      rec.visits.push_back(std::move(visit));
    }
    out.cohort.patients.push_back(std::move(rec));
  }
  return out;
}

Tensor oracle_code_affinity(const GroundTruth& truth, const std::vector<std::string>& keys) {
  const std::size_t n = keys.size();
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    const auto oi = truth.code_owner.find(keys[i]);
    if (oi == truth.code_owner.end()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const auto oj = truth.code_owner.find(keys[j]);
      if (oj != truth.code_owner.end() && oj->second == oi->second) a(i, j) = 1.0;
    }
  }
  return a;
}

}  // namespace taper::synth
