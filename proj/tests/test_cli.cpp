#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "taper/cli/stages.hpp"

using namespace taper;
using namespace taper::cli;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const fs::path& out, std::uint64_t seed = 5) {
  RunConfig c;
  c.seed = seed;
  c.paths.out = out.string();
  c.synth.n_patients = 120;
  c.synth.n_conditions = 4;
  c.pipeline.code.d_code = 16;
  c.pipeline.code.n_head = 2;
  c.pipeline.code.d_head = 8;
  c.pipeline.code.epochs = 3;
  c.pipeline.code.lr0 = 1e-3;
  c.pipeline.text.d_text = 8;
  c.pipeline.text.d_enc = 12;
  c.pipeline.text.epochs = 2;
  c.pipeline.text.sentence_tokens = 8;
  c.pipeline.classifier.epochs = 5;
  c.pipeline.folds = 3;
  c.derive_seeds();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("taper_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void run_all(const RunConfig& c) {
  generate(c);
  preprocess(c);
  train_code(c);
  train_text(c);
  represent(c);
  train_task(c);
  evaluate(c);
  export_embeddings(c);
}

int run_tool(const std::string& args) {
  const int status = std::system((std::string(TAPER_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CliPipeline, RunsEndToEndAndWritesEveryArtifact) {
  const auto out = scratch("e2e");
  const RunConfig c = small_config(out);
  run_all(c);
  for (const char* name : {artifact::cohort, artifact::ground_truth, artifact::preprocessed, artifact::vocab,
                           artifact::code_model, artifact::text_model, artifact::config, artifact::report_json,
                           artifact::report_csv, artifact::embeddings}) {
    EXPECT_TRUE(fs::exists(out / name)) << name;
  }
  EXPECT_TRUE(fs::exists(out / artifact::representations(cohort::Task::mortality)));
  EXPECT_TRUE(fs::exists(out / artifact::classifier(cohort::Task::mortality)));

  const auto report = nlohmann::json::parse(slurp(out / artifact::report_json));
  const double auc = report.at("auc_roc").at("mean");
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);
  EXPECT_EQ(report.at("auc_roc").at("folds").size(), 1u);

  std::istringstream csv(slurp(out / artifact::embeddings));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 16);
  EXPECT_EQ(RunConfig::load(out / artifact::config).to_json(), c.to_json());
  fs::remove_all(out);
}

TEST(CliPipeline, SameSeedGivesByteIdenticalArtifacts) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_all(small_config(a));
  run_all(small_config(b));
  for (const std::string name : {"report.json", "report.csv", "code.ckpt", "text.ckpt", "classifier_mortality.ckpt",
                                 "representations_mortality.jsonl", "code_embeddings.csv"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  const auto c = scratch("det_c");
  run_all(small_config(c, 6));
  EXPECT_NE(slurp(a / "code.ckpt"), slurp(c / "code.ckpt"));
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(CliPipeline, OtherTasksAndCrossval) {
  const auto out = scratch("tasks");
  RunConfig c = small_config(out);
  generate(c);
  preprocess(c);
  train_code(c);
  train_text(c);
  c.task = cohort::Task::los9;
  c.pipeline.balance_los = false;
  represent(c);
  train_task(c);
  evaluate(c);
  EXPECT_TRUE(nlohmann::json::parse(slurp(out / artifact::report_json)).contains("top1_accuracy"));

  c.task = cohort::Task::code_prediction;
  EXPECT_THROW(train_task(c), std::invalid_argument);
  evaluate(c);
  const auto codes = nlohmann::json::parse(slurp(out / artifact::report_json));
  EXPECT_EQ(codes.at("recall@10").at("k"), 10);

  c.task = cohort::Task::mortality;
  c.ablate = {rep::Segment::text};
  run_crossval(c);
  const auto cv = nlohmann::json::parse(slurp(out / artifact::crossval_json));
  EXPECT_EQ(cv.at("code+demo/auc_roc").at("folds").size(), 3u);
  fs::remove_all(out);
}

TEST(CliStages, MissingArtifactsNameTheStageToRun) {
  const auto out = scratch("missing");
  const RunConfig c = small_config(out);
  const auto expect_message = [](auto&& stage, const std::string& text) {
    try {
      stage();
      FAIL() << "expected " << text;
    } catch (const MissingArtifact& e) {
      EXPECT_NE(std::string(e.what()).find(text), std::string::npos) << e.what();
    }
  };
  expect_message([&] { preprocess(c); }, "run generate first");
  generate(c);
  expect_message([&] { train_code(c); }, "run preprocess first");
  preprocess(c);
  expect_message([&] { represent(c); }, "run train-code first");
  train_code(c);
  expect_message([&] { represent(c); }, "run train-text first");
  train_text(c);
  expect_message([&] { train_task(c); }, "run represent first");
  represent(c);
  expect_message([&] { evaluate(c); }, "run train-task first");
  fs::remove_all(out);
}

TEST(CliStages, StaleArtifactsAreRejected) {
  const auto out = scratch("stale");
  RunConfig c = small_config(out);
  run_all(c);

  RunConfig ablated = c;
  ablated.ablate = {rep::Segment::code};
  EXPECT_THROW(evaluate(ablated), std::invalid_argument);

  std::ofstream(out / artifact::representations(cohort::Task::mortality), std::ios::app) << "\n";
  EXPECT_THROW(evaluate(c), std::invalid_argument);

  // A different vocabulary invalidates the trained checkpoints.
  c.preprocess.excluded_codes = {"c0d0"};
  preprocess(c);
  try {
    represent(c);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("vocabulary hash mismatch"), std::string::npos) << e.what();
  }
  fs::remove_all(out);
}

TEST(RunConfigTest, RoundTripsAndRejectsUnknownKeys) {
  RunConfig c;
  c.task = cohort::Task::los9;
  c.ablate = {rep::Segment::demo};
  c.pipeline.folds = 5;
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  EXPECT_THROW(RunConfig::from_json({{"sed", 1}}), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_json({{"paths", {{"outdir", "x"}}}}), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_json({{"code_embedder", {{"dcode", 3}}}}), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_json({{"eval", {{"folds", 1}}}}), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_json({{"task", "vitals"}}), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_json({{"synth", {{"n_patients", "many"}}}}), std::invalid_argument);
}

TEST(RunConfigTest, DefaultsFollowTheModelConfiguration) {
  const RunConfig c;
  EXPECT_EQ(c.pipeline.code.d_code, 128u);
  EXPECT_EQ(c.pipeline.code.lr0, 2.5e-4);
  EXPECT_EQ(c.pipeline.code.cosine_period, 50);
  EXPECT_EQ(c.pipeline.text.d_enc, 128u);
  EXPECT_EQ(c.pipeline.text.lr0, 1e-3);
  EXPECT_EQ(c.pipeline.classifier.epochs, 30);
  EXPECT_EQ(c.pipeline.classifier.step_every, 10);
  EXPECT_EQ(c.pipeline.folds, 7u);
  EXPECT_EQ(c.preprocess.min_code_freq, 5u);
  EXPECT_EQ(c.preprocess.min_age, 18.0);
}

TEST(RunConfigTest, StageSeedsDeriveFromTheTopLevelSeed) {
  RunConfig a, b;
  a.seed = 1;
  b.seed = 2;
  a.derive_seeds();
  b.derive_seeds();
  EXPECT_NE(a.pipeline.code.seed, b.pipeline.code.seed);
  EXPECT_NE(a.pipeline.code.seed, a.pipeline.text.seed);
  RunConfig a2;
  a2.seed = 1;
  a2.derive_seeds();
  EXPECT_EQ(a.to_json(), a2.to_json());
}

TEST(CliTool, ExitCodes) {
  const auto out = scratch("exit");
  EXPECT_EQ(run_tool("--help"), 0);
  EXPECT_EQ(run_tool("evaluate --out " + out.string()), 1);
  EXPECT_EQ(run_tool("generate --task vitals --out " + out.string()), 1);
  EXPECT_EQ(run_tool("generate --no-such-flag"), 1);
  EXPECT_EQ(run_tool(""), 1);

  const auto cfg = out.string() + ".json";
  std::ofstream(cfg) << R"({"synth": {"n_patients": 30}, "paths": {"out": ")" << out.string() << R"("}})";
  EXPECT_EQ(run_tool("generate --config " + cfg), 0);
  EXPECT_TRUE(fs::exists(out / artifact::cohort));

  // The output path exists as a regular file, so the stage cannot write.
  const auto blocked = scratch("blocked");
  std::ofstream(blocked) << "x";
  EXPECT_EQ(run_tool("generate --out " + blocked.string() + "/sub"), 2);
  fs::remove_all(out);
  fs::remove(cfg);
  fs::remove(blocked);
}
