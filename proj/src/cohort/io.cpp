#include "taper/cohort/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace taper::cohort {

namespace {

struct MissingField {
  std::string field;
};

const nlohmann::json& field(const nlohmann::json& obj, const char* name) {
  if (!obj.is_object() || !obj.contains(name) || obj.at(name).is_null()) throw MissingField{name};
  return obj.at(name);
}

template <class T>
T typed(const nlohmann::json& obj, const char* name) {
  try {
    return field(obj, name).get<T>();
  } catch (const nlohmann::json::type_error&) {
    throw std::invalid_argument(std::string(name) + ": wrong type");
  }
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  return s;
}

}  // namespace

PatientRecord patient_from_json(const nlohmann::json& j) {
  PatientRecord p;
  p.patient_id = typed<std::string>(j, "patient_id");
  const auto& demo = field(j, "demographics");
  p.demographics.age = typed<double>(demo, "age");
  p.demographics.gender = typed<std::string>(demo, "gender");
  p.demographics.race = typed<std::string>(demo, "race");
  const auto& visits = field(j, "visits");
  if (!visits.is_array()) throw std::invalid_argument("visits: wrong type");
  for (const auto& jv : visits) {
    Visit v;
    v.admit_time = typed<std::int64_t>(jv, "admit_time");
    v.discharge_time = typed<std::int64_t>(jv, "discharge_time");
    v.died_in_visit = jv.contains("died_in_visit") ? typed<bool>(jv, "died_in_visit") : false;
    for (const auto& jc : field(jv, "codes")) {
      Code c;
      c.system = parse_code_system(typed<std::string>(jc, "system"));
      c.raw_id = typed<std::string>(jc, "code");
      if (jc.contains("group") && !jc.at("group").is_null()) c.group_id = jc.at("group").get<std::string>();
      v.codes.push_back(std::move(c));
    }
    if (jv.contains("notes")) {
      for (const auto& jn : jv.at("notes")) {
        Note n;
        n.time = typed<std::int64_t>(jn, "time");
        if (jn.contains("kind") && !jn.at("kind").is_null()) n.kind = jn.at("kind").get<std::string>();
        n.text = typed<std::string>(jn, "text");
        v.notes.push_back(std::move(n));
      }
    }
    p.visits.push_back(std::move(v));
  }
  std::stable_sort(p.visits.begin(), p.visits.end(),
                   [](const Visit& a, const Visit& b) { return a.admit_time < b.admit_time; });
  return p;
}

nlohmann::json patient_to_json(const PatientRecord& record) {
  nlohmann::json j;
  j["patient_id"] = record.patient_id;
  j["demographics"] = {{"age", record.demographics.age},
                       {"gender", record.demographics.gender},
                       {"race", record.demographics.race}};
  j["visits"] = nlohmann::json::array();
  for (const Visit& v : record.visits) {
    nlohmann::json jv;
    jv["admit_time"] = v.admit_time;
    jv["discharge_time"] = v.discharge_time;
    jv["codes"] = nlohmann::json::array();
    for (const Code& c : v.codes) {
      nlohmann::json jc = {{"system", to_string(c.system)}, {"code", c.raw_id}};
      if (c.group_id) jc["group"] = *c.group_id;
      jv["codes"].push_back(std::move(jc));
    }
    jv["notes"] = nlohmann::json::array();
    for (const Note& n : v.notes) {
      jv["notes"].push_back({{"time", n.time}, {"kind", n.kind ? nlohmann::json(*n.kind) : nlohmann::json()}, {"text", n.text}});
    }
    jv["died_in_visit"] = v.died_in_visit;
    j["visits"].push_back(std::move(jv));
  }
  return j;
}

IngestResult read_cohort(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::string problem;
    PatientRecord record;
    try {
      record = patient_from_json(nlohmann::json::parse(line));
      problem = validate_record(record);
      if (problem.empty() && seen.contains(record.patient_id)) problem = "duplicate patient_id '" + record.patient_id + "'";
    } catch (const MissingField& m) {
      problem = m.field;
    } catch (const nlohmann::json::exception& e) {
      problem = std::string("malformed JSON (") + e.what() + ")";
    } catch (const std::invalid_argument& e) {
      problem = e.what();
    }
    if (!problem.empty()) {
      std::string message = problem + ": line " + std::to_string(line_no);
      if (!options.lenient) throw IngestError(message, line_no);
      result.issues.push_back({line_no, std::move(message)});
      continue;
    }
    seen.insert(record.patient_id);
    result.cohort.patients.push_back(std::move(record));
  }
  return result;
}

IngestResult ingest_cohort(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open cohort file " + path.string());
  return read_cohort(in, options);
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  for (const auto& p : cohort.patients) out << patient_to_json(p).dump() << '\n';
}

void write_cohort(const std::filesystem::path& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_cohort(out, cohort);
}

GroupMap read_group_map(std::istream& in) {
  GroupMap map;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "raw_id,group_id") {
    throw std::invalid_argument("group map: expected header 'raw_id,group_id'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size()) {
      throw std::invalid_argument("group map: malformed row: line " + std::to_string(line_no));
    }
    map[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return map;
}

GroupMap read_group_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open group map " + path.string());
  return read_group_map(in);
}

}  // namespace taper::cohort
