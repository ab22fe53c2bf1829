#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "taper/cohort/io.hpp"
#include "taper/cohort/labels.hpp"
#include "taper/cohort/preprocess.hpp"
#include "taper/cohort/split.hpp"
#include "taper/cohort/vocabulary.hpp"

using namespace taper::cohort;

namespace {

constexpr std::int64_t kDay = kSecondsPerDay;
constexpr std::int64_t kHour = kSecondsPerHour;

Visit make_visit(std::int64_t admit, std::int64_t discharge, std::vector<std::string> dx = {}) {
  Visit v;
  v.admit_time = admit;
  v.discharge_time = discharge;
  for (auto& c : dx) v.codes.push_back(Code{CodeSystem::diagnosis, std::move(c), std::nullopt});
  return v;
}

PatientRecord make_patient(std::string id, double age, std::vector<Visit> visits) {
  return PatientRecord{std::move(id), Demographics{age, "F", "white"}, std::move(visits)};
}

const char* kTwoPatients =
    R"({"patient_id":"a","demographics":{"age":40,"gender":"F","race":"white"},"visits":[{"admit_time":0,"discharge_time":86400,"codes":[{"system":"dx","code":"401"}],"notes":[{"time":3600,"kind":null,"text":"chest pain"}],"died_in_visit":false}]}
{"patient_id":"b","demographics":{"age":71,"gender":"M","race":"black"},"visits":[{"admit_time":0,"discharge_time":3600,"codes":[{"system":"proc","code":"99"}],"notes":[],"died_in_visit":true}]}
)";

}  // namespace

TEST(Ingest, ParsesValidLines) {
  std::istringstream in(kTwoPatients);
  const auto result = read_cohort(in);
  ASSERT_EQ(result.cohort.patients.size(), 2u);
  EXPECT_TRUE(result.issues.empty());
  const auto& a = result.cohort.patients[0];
  EXPECT_EQ(a.visits[0].codes[0].system, CodeSystem::diagnosis);
  EXPECT_EQ(a.visits[0].notes[0].text, "chest pain");
  EXPECT_FALSE(a.visits[0].notes[0].kind.has_value());
  EXPECT_TRUE(result.cohort.patients[1].visits[0].died_in_visit);
}

TEST(Ingest, MissingVisitsNamesFieldAndLine) {
  std::istringstream in(
      R"({"patient_id":"a","demographics":{"age":40,"gender":"F","race":"white"},"visits":[]}
{"patient_id":"b","demographics":{"age":40,"gender":"F","race":"white"}}
)");
  try {
    read_cohort(in);
    FAIL() << "expected an ingest error";
  } catch (const IngestError& e) {
    EXPECT_STREQ(e.what(), "visits: line 2");
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Ingest, DuplicatePatientIdIsAnError) {
  std::istringstream in(std::string(kTwoPatients) + std::string(kTwoPatients).substr(0, std::string(kTwoPatients).find('\n') + 1));
  EXPECT_THROW(read_cohort(in), IngestError);
}

TEST(Ingest, LenientModeSkipsInvalidRecord) {
  std::istringstream in(std::string(kTwoPatients) +
                        R"({"patient_id":"c","demographics":{"age":50,"gender":"F","race":"white"},"visits":[{"admit_time":100,"discharge_time":50,"codes":[],"notes":[],"died_in_visit":false}]}
)");
  const auto result = read_cohort(in, {.lenient = true});
  EXPECT_EQ(result.cohort.patients.size(), 2u);
  ASSERT_EQ(result.issues.size(), 1u);
  EXPECT_EQ(result.issues[0].line, 3u);
  EXPECT_NE(result.issues[0].message.find("discharge_time before admit_time"), std::string::npos);
}

TEST(Ingest, WriteThenReadIsIdentity) {
  std::istringstream in(kTwoPatients);
  const Cohort original = read_cohort(in).cohort;
  std::stringstream buf;
  write_cohort(buf, original);
  EXPECT_EQ(read_cohort(buf).cohort, original);
}

TEST(GroupMapCsv, ParsesRows) {
  std::istringstream in("raw_id,group_id\n4019,htn\n4011,htn\n");
  const auto map = read_group_map(in);
  EXPECT_EQ(map.at("4019"), "htn");
  EXPECT_EQ(map.size(), 2u);
  std::istringstream bad("raw,group\n");
  EXPECT_THROW(read_group_map(bad), std::invalid_argument);
}

namespace {

// 6 patients; code "x" appears in 6 visits, "rare" in 4, "g1"/"g2" group to "g" (5 visits).
Cohort frequency_fixture() {
  Cohort c;
  for (int i = 0; i < 6; ++i) {
    std::vector<std::string> codes{"x"};
    if (i < 4) codes.push_back("rare");
    if (i < 3) codes.push_back("g1");
    else if (i < 5) codes.push_back("g2");
    c.patients.push_back(make_patient("p" + std::to_string(i), 30 + i, {make_visit(0, kDay, codes)}));
  }
  return c;
}

}  // namespace

TEST(Preprocess, DropsCodesSeenFewerThanFiveTimes) {
  const Cohort out = preprocess(frequency_fixture(), {});
  const auto counts = code_frequencies(out);
  EXPECT_FALSE(counts.contains("dx:rare"));
  EXPECT_EQ(counts.at("dx:x"), 6u);
}

TEST(Preprocess, FrequencyIsCountedAfterGrouping) {
  PreprocessOptions opt;
  opt.group_map = GroupMap{{"g1", "g"}, {"g2", "g"}};
  const auto counts = code_frequencies(preprocess(frequency_fixture(), opt));
  EXPECT_EQ(counts.at("dx:g"), 5u);
  EXPECT_FALSE(preprocess(frequency_fixture(), {}).patients[0].visits[0].codes.empty());
  EXPECT_FALSE(code_frequencies(preprocess(frequency_fixture(), {})).contains("dx:g1"));
}

TEST(Preprocess, DropsMinors) {
  Cohort c = frequency_fixture();
  c.patients[0].demographics.age = 17;
  const Cohort out = preprocess(c, {.min_code_freq = 1});
  EXPECT_EQ(out.find("p0"), nullptr);
  EXPECT_NE(out.find("p1"), nullptr);
}

TEST(Preprocess, MinVisitsDropsSingleVisitPatients) {
  Cohort c = frequency_fixture();
  c.patients[1].visits.push_back(make_visit(10 * kDay, 11 * kDay, {"x"}));
  const Cohort out = preprocess(c, {.min_code_freq = 1, .min_visits = 2});
  ASSERT_EQ(out.patients.size(), 1u);
  EXPECT_EQ(out.patients[0].patient_id, "p1");
}

TEST(Preprocess, ExcludedCodesAreRemoved) {
  PreprocessOptions opt;
  opt.min_code_freq = 1;
  opt.excluded_codes = {"x"};
  EXPECT_FALSE(code_frequencies(preprocess(frequency_fixture(), opt)).contains("dx:x"));
}

TEST(Preprocess, EmptyResultIsAnError) {
  EXPECT_THROW(preprocess(frequency_fixture(), {.min_age = 200}), std::invalid_argument);
}

TEST(Preprocess, IsIdempotent) {
  // Dropping a minor pushes "g2" below the threshold; the fixed point must account for it.
  Cohort c = frequency_fixture();
  c.patients[4].demographics.age = 10;
  PreprocessOptions opt;
  opt.min_code_freq = 2;
  const Cohort once = preprocess(c, opt);
  EXPECT_EQ(preprocess(once, opt), once);
  opt.group_map = GroupMap{{"g1", "g"}, {"g2", "g"}};
  const Cohort grouped = preprocess(c, opt);
  EXPECT_EQ(preprocess(grouped, opt), grouped);
}

TEST(Vocabulary, IndicesAreDenseAndFrequenciesRespectThreshold) {
  const Cohort out = preprocess(frequency_fixture(), {});
  const auto vocab = CodeVocabulary::build(out);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    EXPECT_EQ(vocab.index_of(vocab.key(i)), i);
    EXPECT_GE(vocab.frequency(i), 5u);
  }
}

TEST(Vocabulary, MultiHotEncoding) {
  const Cohort c = frequency_fixture();
  const auto vocab = CodeVocabulary::build(c);
  const std::size_t i = *vocab.index_of("dx:x"), j = *vocab.index_of("dx:rare");
  const auto hot = vocab.encode_visit(make_visit(0, 1, {"x", "rare", "x"}));
  ASSERT_EQ(hot.cols(), vocab.size());
  for (std::size_t k = 0; k < vocab.size(); ++k) EXPECT_EQ(hot[k], (k == i || k == j) ? 1.0 : 0.0);
  const auto none = vocab.encode_visit(make_visit(0, 1, {"unknown"}));
  for (double v : none.data()) EXPECT_EQ(v, 0.0);
}

TEST(Vocabulary, JsonRoundTripPreservesHash) {
  const auto vocab = CodeVocabulary::build(frequency_fixture());
  const auto back = CodeVocabulary::from_json(vocab.to_json());
  EXPECT_EQ(back.content_hash(), vocab.content_hash());
  EXPECT_EQ(back.keys(), vocab.keys());
}

TEST(Demographics, SameCategoriesGiveSameVector) {
  Cohort c;
  c.patients.push_back(make_patient("a", 40, {make_visit(0, 1)}));
  c.patients.push_back(make_patient("b", 41, {make_visit(0, 1)}));
  const auto enc = DemographicsEncoder::build(c);
  EXPECT_EQ(enc.encode(c.patients[0], 0), enc.encode(c.patients[1], 0));
}

TEST(Demographics, AgeBucketsAndUnknownCategories) {
  Cohort c;
  c.patients.push_back(make_patient("a", 25, {make_visit(0, 1)}));
  const auto enc = DemographicsEncoder::build(c);
  const auto d = enc.encode(c.patients[0], 0);
  EXPECT_EQ(d[enc.age_slot(0)], 1.0);

  PatientRecord stranger = make_patient("z", 80, {make_visit(0, 1)});
  stranger.demographics.gender = "unknown";
  stranger.demographics.race = "unlisted";
  const auto s = enc.encode(stranger, 0);
  EXPECT_EQ(s[enc.gender_other_slot()], 1.0);
  EXPECT_EQ(s[enc.race_other_slot()], 1.0);
  EXPECT_EQ(s[enc.age_slot(3)], 1.0);
  double total = 0;
  for (double v : s.data()) total += v;
  EXPECT_EQ(total, 3.0);
}

TEST(Demographics, AgeAdvancesAcrossVisits) {
  const auto p = make_patient("a", 29.5, {make_visit(0, kDay), make_visit(365 * kDay, 366 * kDay)});
  Cohort c;
  c.patients.push_back(p);
  const auto enc = DemographicsEncoder::build(c);
  EXPECT_EQ(enc.encode(p, 0)[enc.age_slot(0)], 1.0);
  EXPECT_EQ(enc.encode(p, 1)[enc.age_slot(1)], 1.0);
}

TEST(LosBucket, MatchesStayTable) {
  EXPECT_EQ(los_bucket(3.0), 3);
  EXPECT_EQ(los_bucket(10.0), 8);
  EXPECT_EQ(los_bucket(20.0), 9);
  EXPECT_EQ(los_bucket(0.2), 1);
  EXPECT_EQ(los_bucket(7.0), 7);
  EXPECT_EQ(los_bucket(7.01), 8);
  EXPECT_EQ(los_bucket(14.0), 8);
  EXPECT_THROW(los_bucket(-1.0), std::invalid_argument);
}

TEST(Labels, ReadmissionThreshold) {
  Cohort c;
  c.patients.push_back(make_patient("a", 40, {make_visit(0, kDay), make_visit(30 * kDay, 31 * kDay),
                                              make_visit(62 * kDay, 63 * kDay)}));
  c.patients.push_back(make_patient("b", 40, {make_visit(0, kDay)}));
  const auto labels = extract_labels(c, Task::readmission30);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].value, 1);  // 29-day gap
  EXPECT_EQ(labels[1].value, 0);  // 31-day gap
  for (const auto& l : labels) EXPECT_EQ(l.patient, 0u);
}

TEST(Labels, MortalityLosAndCodes) {
  Cohort c;
  auto v0 = make_visit(0, 3 * kDay, {"x"});
  auto v1 = make_visit(40 * kDay, 60 * kDay, {"x", "y"});
  v1.died_in_visit = true;
  c.patients.push_back(make_patient("a", 40, {v0, v1}));
  const auto mort = extract_labels(c, Task::mortality);
  ASSERT_EQ(mort.size(), 2u);
  EXPECT_EQ(mort[1].value, 1);
  const auto los = extract_labels(c, Task::los9);
  EXPECT_EQ(los[0].value, 3);
  EXPECT_EQ(los[1].value, 9);
  const auto vocab = CodeVocabulary::build(c);
  const auto codes = extract_labels(c, Task::code_prediction, &vocab);
  ASSERT_EQ(codes.size(), 1u);
  EXPECT_EQ(codes[0].next_codes.size(), 2u);
}

TEST(TaskText, MortalityUsesFirstDay) {
  Visit v = make_visit(0, 5 * kDay);
  v.notes = {{2 * kHour, std::nullopt, "early"}, {30 * kHour, std::nullopt, "late"}};
  EXPECT_EQ(select_task_text(v, Task::mortality), "early");
  EXPECT_EQ(select_task_text(v, Task::los9), "early");
  EXPECT_EQ(select_task_text(v, Task::code_prediction), "early late");
}

TEST(TaskText, ReadmissionPrefersDischargeSummary) {
  Visit v = make_visit(0, 5 * kDay);
  v.notes = {{5 * kDay - kHour, std::string("nursing"), "nurse"}, {5 * kDay, std::string("discharge_summary"), "summary"}};
  EXPECT_EQ(select_task_text(v, Task::readmission30), "summary");
  v.notes[1].kind = "radiology";
  v.notes.push_back({kHour, std::nullopt, "too early"});
  EXPECT_EQ(select_task_text(v, Task::readmission30), "nurse summary");
}

TEST(Split, FoldsPartitionPatients) {
  Cohort c;
  for (int i = 0; i < 14; ++i) c.patients.push_back(make_patient("p" + std::to_string(i), 40, {make_visit(0, 1)}));
  const auto folds = patient_kfold_split(c, 7, 42);
  ASSERT_EQ(folds.size(), 7u);
  std::set<std::string> all;
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 2u);
    for (const auto& id : f) EXPECT_TRUE(all.insert(id).second) << id << " appears twice";
  }
  EXPECT_EQ(all.size(), 14u);
  EXPECT_EQ(patient_kfold_split(c, 7, 42), folds);
}

TEST(Split, UnevenSizesDifferByAtMostOne) {
  Cohort c;
  for (int i = 0; i < 17; ++i) c.patients.push_back(make_patient("p" + std::to_string(i), 40, {make_visit(0, 1)}));
  const auto folds = patient_kfold_split(c, 5, 1);
  std::size_t lo = 99, hi = 0;
  for (const auto& f : folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
  }
  EXPECT_LE(hi - lo, 1u);
  EXPECT_THROW(patient_kfold_split(c, 18, 1), std::invalid_argument);
  EXPECT_THROW(patient_kfold_split(c, 1, 1), std::invalid_argument);
}
