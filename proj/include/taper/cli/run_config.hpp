#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"
#include "taper/cohort/labels.hpp"
#include "taper/cohort/preprocess.hpp"
#include "taper/eval/crossval.hpp"
#include "taper/synth/synth.hpp"

namespace taper::cli {

struct Paths {
  /// Raw cohort JSONL; empty means the generated cohort in the output directory.
  std::string cohort;
  std::string group_map;
  /// Optional JSONL of precomputed sentence vectors.
  std::string sentence_vectors;
  std::string out = "taper_out";
};

struct RunConfig {
  std::uint64_t seed = 1;
  cohort::Task task = cohort::Task::mortality;
  std::set<rep::Segment> ablate;
  Paths paths;
  synth::SynthConfig synth;
  cohort::PreprocessOptions preprocess;
  bool lenient_ingest = false;
  eval::PipelineConfig pipeline;

  /// Overwrites every module seed with one derived from `seed`.
  void derive_seeds();
  void validate() const;

  nlohmann::json to_json() const;
  /// Strict: unknown keys at any level are rejected. Missing keys keep defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace taper::cli
