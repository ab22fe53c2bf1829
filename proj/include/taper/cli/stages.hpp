#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "taper/cli/run_config.hpp"

namespace taper::cli {

/// Artifact file names inside the output directory.
namespace artifact {
inline constexpr const char* cohort = "cohort.jsonl";
inline constexpr const char* ground_truth = "ground_truth.json";
inline constexpr const char* preprocessed = "cohort.pre.jsonl";
inline constexpr const char* vocab = "vocab.json";
inline constexpr const char* code_model = "code.ckpt";
inline constexpr const char* text_model = "text.ckpt";
inline constexpr const char* config = "config.json";
inline constexpr const char* report_json = "report.json";
inline constexpr const char* report_csv = "report.csv";
inline constexpr const char* crossval_json = "crossval.json";
inline constexpr const char* crossval_csv = "crossval.csv";
inline constexpr const char* embeddings = "code_embeddings.csv";
std::string representations(cohort::Task task);
std::string classifier(cohort::Task task);
}  // namespace artifact

/// A prerequisite artifact is missing; the message names the stage to run.
class MissingArtifact : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Log = std::function<void(const std::string&)>;

/// Each stage reads its inputs from and writes its outputs to
/// `config.paths.out`, together with a copy of the resolved config. The
/// single-run stages train on every fold but the first and hold the first
/// fold out for evaluation.
void generate(const RunConfig& config, const Log& log = {});
void preprocess(const RunConfig& config, const Log& log = {});
void train_code(const RunConfig& config, const Log& log = {});
void train_text(const RunConfig& config, const Log& log = {});
void represent(const RunConfig& config, const Log& log = {});
void train_task(const RunConfig& config, const Log& log = {});
void evaluate(const RunConfig& config, const Log& log = {});
void export_embeddings(const RunConfig& config, const Log& log = {});
void run_crossval(const RunConfig& config, const Log& log = {});

}  // namespace taper::cli
