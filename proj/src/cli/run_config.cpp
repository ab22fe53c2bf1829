#include "taper/cli/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "taper/numerics/json_fields.hpp"

namespace taper::cli {

void RunConfig::derive_seeds() {
  synth.seed = derive_seed(seed, "synth");
  pipeline.seed = derive_seed(seed, "eval");
  pipeline.code.seed = derive_seed(seed, "code");
  pipeline.text.seed = derive_seed(seed, "text");
  pipeline.classifier.seed = derive_seed(seed, "classifier");
}

void RunConfig::validate() const {
  synth.validate();
  pipeline.validate();
  if (paths.out.empty()) throw std::invalid_argument("config: paths.out must not be empty");
  if (!(preprocess.min_age >= 0.0)) throw std::invalid_argument("config: preprocess.min_age must be >= 0");
}

nlohmann::json RunConfig::to_json() const {
  std::vector<std::string> ablated;
  for (rep::Segment s : ablate) ablated.emplace_back(rep::to_string(s));
  return {
      {"seed", seed},
      {"task", cohort::to_string(task)},
      {"ablate", ablated},
      {"paths", {{"cohort", paths.cohort}, {"group_map", paths.group_map}, {"sentence_vectors", paths.sentence_vectors}, {"out", paths.out}}},
      {"synth", synth.to_json()},
      {"preprocess",
       {{"min_code_freq", preprocess.min_code_freq},
        {"min_age", preprocess.min_age},
        {"min_visits", preprocess.min_visits},
        {"excluded_codes", preprocess.excluded_codes},
        {"lenient", lenient_ingest}}},
      {"code_embedder", pipeline.code.to_json()},
      {"summarizer", pipeline.text.to_json()},
      {"classifier", pipeline.classifier.to_json()},
      {"eval", {{"folds", pipeline.folds}, {"recall_k", pipeline.recall_k}, {"balance_los", pipeline.balance_los}}},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  const nlohmann::json defaults = c.to_json();
  reject_unknown_keys(j, defaults, "config");
  read_field(j, "seed", c.seed, "config");
  if (j.contains("task")) {
    std::string task;
    read_field(j, "task", task, "config");
    c.task = cohort::parse_task(task);
  }
  if (j.contains("ablate")) {
    std::vector<std::string> names;
    read_field(j, "ablate", names, "config");
    for (const auto& n : names) c.ablate.insert(rep::parse_segment(n));
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown_keys(p, defaults.at("paths"), "config.paths");
    read_field(p, "cohort", c.paths.cohort, "config.paths");
    read_field(p, "group_map", c.paths.group_map, "config.paths");
    read_field(p, "sentence_vectors", c.paths.sentence_vectors, "config.paths");
    read_field(p, "out", c.paths.out, "config.paths");
  }
  if (j.contains("synth")) c.synth = synth::SynthConfig::from_json(j.at("synth"));
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    reject_unknown_keys(p, defaults.at("preprocess"), "config.preprocess");
    read_field(p, "min_code_freq", c.preprocess.min_code_freq, "config.preprocess");
    read_field(p, "min_age", c.preprocess.min_age, "config.preprocess");
    read_field(p, "min_visits", c.preprocess.min_visits, "config.preprocess");
    read_field(p, "excluded_codes", c.preprocess.excluded_codes, "config.preprocess");
    read_field(p, "lenient", c.lenient_ingest, "config.preprocess");
  }
  if (j.contains("code_embedder")) c.pipeline.code = code::CodeEmbedderConfig::from_json(j.at("code_embedder"));
  if (j.contains("summarizer")) c.pipeline.text = text::SummarizerConfig::from_json(j.at("summarizer"));
  if (j.contains("classifier")) c.pipeline.classifier = tasks::ClassifierConfig::from_json(j.at("classifier"));
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown_keys(e, defaults.at("eval"), "config.eval");
    read_field(e, "folds", c.pipeline.folds, "config.eval");
    read_field(e, "recall_k", c.pipeline.recall_k, "config.eval");
    read_field(e, "balance_los", c.pipeline.balance_los, "config.eval");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace taper::cli
