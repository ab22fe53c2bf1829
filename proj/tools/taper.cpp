#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "taper/cli/stages.hpp"

namespace {

using Stage = void (*)(const taper::cli::RunConfig&, const taper::cli::Log&);

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> task;
  std::optional<std::size_t> folds;
  std::optional<std::string> ablate;
  std::optional<std::string> cohort;
};

taper::cli::RunConfig resolve(const Flags& f) {
  taper::cli::RunConfig c = f.config.empty() ? taper::cli::RunConfig{} : taper::cli::RunConfig::load(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.paths.out = *f.out;
  if (f.task) c.task = taper::cohort::parse_task(*f.task);
  if (f.folds) c.pipeline.folds = *f.folds;
  if (f.ablate) c.ablate = taper::rep::parse_segments(*f.ablate);
  if (f.cohort) c.paths.cohort = *f.cohort;
  c.derive_seeds();
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAPER patient representations: train, extract and evaluate"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Top-level seed; every stage seed derives from it");
  app.add_option("--out", flags.out, "Output directory for artifacts");
  app.add_option("--task", flags.task, "readmission, mortality, los or codes");
  app.add_option("--folds", flags.folds, "Number of cross-validation folds");
  app.add_option("--ablate", flags.ablate, "Comma list of segments to zero: code,text,demo");
  app.add_option("--cohort", flags.cohort, "Raw cohort JSONL (default: the generated cohort)");

  const std::vector<std::pair<const char*, std::pair<const char*, Stage>>> stages{
      {"generate", {"Generate a synthetic cohort and its ground truth", taper::cli::generate}},
      {"preprocess", {"Filter the cohort and build the code vocabulary", taper::cli::preprocess}},
      {"train-code", {"Train the code embedder", taper::cli::train_code}},
      {"train-text", {"Train the note summarizer", taper::cli::train_text}},
      {"represent", {"Write patient representations for the task", taper::cli::represent}},
      {"train-task", {"Train the task classifier on the representations", taper::cli::train_task}},
      {"evaluate", {"Score the held-out fold and write the metric report", taper::cli::evaluate}},
      {"export", {"Write the code embedding matrix as CSV", taper::cli::export_embeddings}},
      {"crossval", {"Run k-fold cross-validation end to end", taper::cli::run_crossval}},
  };
  Stage chosen = nullptr;
  for (const auto& [name, info] : stages) {
    auto* sub = app.add_subcommand(name, info.first);
    sub->fallthrough();
    sub->callback([&chosen, stage = info.second] { chosen = stage; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    chosen(resolve(flags), [](const std::string& line) { std::cerr << line << '\n'; });
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
