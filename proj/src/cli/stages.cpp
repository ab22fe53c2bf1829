#include "taper/cli/stages.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "taper/cohort/io.hpp"

namespace taper::cli {

namespace fs = std::filesystem;

std::string artifact::representations(cohort::Task task) {
  return "representations_" + std::string(cohort::to_string(task)) + ".jsonl";
}

std::string artifact::classifier(cohort::Task task) { return "classifier_" + std::string(cohort::to_string(task)) + ".ckpt"; }

namespace {

fs::path out_dir(const RunConfig& config) { return fs::path(config.paths.out); }

fs::path require(const RunConfig& config, const std::string& name, const char* stage) {
  const fs::path p = out_dir(config) / name;
  if (!fs::exists(p)) throw MissingArtifact(p.string() + " not found; run " + stage + " first");
  return p;
}

void say(const Log& log, const std::string& line) {
  if (log) log(line);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw std::runtime_error("failed writing " + path.string());
}

void begin_stage(const RunConfig& config) {
  fs::create_directories(out_dir(config));
  write_file(out_dir(config) / artifact::config, config.to_json().dump(2) + "\n");
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Prepared {
  cohort::Cohort cohort;
  cohort::CodeVocabulary vocab;
  cohort::DemographicsEncoder demographics;
  std::string vocab_hash;
};

Prepared load_prepared(const RunConfig& config) {
  const fs::path cohort_path = require(config, artifact::preprocessed, "preprocess");
  const fs::path vocab_path = require(config, artifact::vocab, "preprocess");
  Prepared p;
  p.cohort = cohort::ingest_cohort(cohort_path).cohort;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(vocab_path));
    p.vocab = cohort::CodeVocabulary::from_json(j.at("codes"));
    p.demographics = cohort::DemographicsEncoder::from_json(j.at("demographics"));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(vocab_path.string() + ": " + e.what());
  }
  p.vocab_hash = p.vocab.content_hash();
  return p;
}

struct Split {
  cohort::Cohort train;
  cohort::Cohort test;
};

// The first fold of the cross-validation split is the single-run test set.
Split split(const RunConfig& config, const cohort::Cohort& c) {
  const auto folds = cohort::patient_kfold_split(c, config.pipeline.folds, derive_seed(config.pipeline.seed, "folds"));
  const auto train = cohort::train_ids(folds, 0);
  eval::assert_disjoint(train, folds[0], 1);
  return {c.subset(train), c.subset(folds[0])};
}

code::CodeEmbedderModel load_code(const RunConfig& config, const Prepared& p) {
  return code::CodeEmbedderModel::load(require(config, artifact::code_model, "train-code"), p.vocab_hash);
}

text::TextModel load_text(const RunConfig& config, const Prepared& p) {
  return text::TextModel::load(require(config, artifact::text_model, "train-text"), p.vocab_hash);
}

std::vector<std::string> segment_names(const std::set<rep::Segment>& s) {
  std::vector<std::string> out;
  for (rep::Segment x : s) out.emplace_back(rep::to_string(x));
  return out;
}

void write_reports(const fs::path& json, const fs::path& csv, const std::vector<eval::MetricReport>& reports) {
  write_file(json, eval::reports_to_json(reports).dump(2) + "\n");
  write_file(csv, eval::reports_to_csv(reports));
}

struct LabeledRows {
  tasks::Design train;
  tasks::Design test;
};

// Joins representation rows with the cohort's labels and splits them by fold.
LabeledRows labeled_rows(const RunConfig& config, const Prepared& p, const fs::path& reps_path, std::size_t width) {
  std::ifstream in(reps_path);
  const auto rows = rep::read_representations(in);
  std::map<std::pair<std::string, std::size_t>, const rep::RepresentationRow*> by_key;
  for (const auto& r : rows) {
    if (r.z.size() != width) {
      throw std::invalid_argument(reps_path.string() + ": representation width " + std::to_string(r.z.size()) +
                                  " does not match the models (" + std::to_string(width) + "); run represent again");
    }
    by_key[{r.patient_id, r.visit_index}] = &r;
  }
  const Split s = split(config, p.cohort);
  std::set<std::string> test_ids;
  for (const auto& patient : s.test.patients) test_ids.insert(patient.patient_id);

  std::vector<const rep::RepresentationRow*> tr, te;
  std::vector<int> ytr, yte;
  for (const auto& label : cohort::extract_labels(p.cohort, config.task, &p.vocab)) {
    const std::string& id = p.cohort.patients[label.patient].patient_id;
    const auto it = by_key.find({id, label.visit + 1});
    if (it == by_key.end()) {
      throw std::invalid_argument(reps_path.string() + " has no row for " + id + " visit " + std::to_string(label.visit + 1) +
                                  "; run represent again");
    }
    const bool is_test = test_ids.count(id) > 0;
    (is_test ? te : tr).push_back(it->second);
    (is_test ? yte : ytr).push_back(label.value);
  }
  const auto design = [&](const std::vector<const rep::RepresentationRow*>& src, std::vector<int> y) {
    tasks::Design d{Tensor::zeros(src.size(), width), std::move(y)};
    for (std::size_t i = 0; i < src.size(); ++i) std::copy(src[i]->z.begin(), src[i]->z.end(), d.z.row(i).begin());
    return d;
  };
  return {design(tr, std::move(ytr)), design(te, std::move(yte))};
}

void ablate_rows(Tensor& z, const rep::SegmentLayout& layout, const std::set<rep::Segment>& ablate) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (rep::Segment s : ablate) std::fill_n(row.begin() + static_cast<long>(layout.offset(s)), layout.width(s), 0.0);
  }
}

}  // namespace

void generate(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const auto generated = synth::generate_cohort(config.synth);
  cohort::write_cohort(out_dir(config) / artifact::cohort, generated.cohort);
  write_file(out_dir(config) / artifact::ground_truth, generated.truth.to_json().dump(2) + "\n");
  say(log, "generate: " + std::to_string(generated.cohort.patients.size()) + " patients, " +
               std::to_string(generated.cohort.visit_count()) + " visits");
}

void preprocess(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const fs::path input = config.paths.cohort.empty() ? require(config, artifact::cohort, "generate") : fs::path(config.paths.cohort);
  if (!fs::exists(input)) throw std::invalid_argument("cohort file " + input.string() + " not found");
  auto ingested = cohort::ingest_cohort(input, {config.lenient_ingest});
  for (const auto& issue : ingested.issues) say(log, "preprocess: skipped line " + std::to_string(issue.line) + ": " + issue.message);

  cohort::PreprocessOptions options = config.preprocess;
  if (!config.paths.group_map.empty()) options.group_map = cohort::read_group_map(config.paths.group_map);
  const cohort::Cohort pre = cohort::preprocess(ingested.cohort, options);
  const auto vocab = cohort::CodeVocabulary::build(pre);
  const auto demographics = cohort::DemographicsEncoder::build(pre);
  cohort::write_cohort(out_dir(config) / artifact::preprocessed, pre);
  const nlohmann::json j{{"codes", vocab.to_json()}, {"demographics", demographics.to_json()}, {"vocab_hash", vocab.content_hash()}};
  write_file(out_dir(config) / artifact::vocab, j.dump(2) + "\n");
  say(log, "preprocess: kept " + std::to_string(pre.patients.size()) + " of " + std::to_string(ingested.cohort.patients.size()) +
               " patients, " + std::to_string(vocab.size()) + " codes");
}

void train_code(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const Prepared p = load_prepared(config);
  const Split s = split(config, p.cohort);
  const auto trained = code::train_code_embedder(s.train, p.vocab, config.pipeline.code);
  const auto& h = trained.history;
  trained.model.save(out_dir(config) / artifact::code_model, p.vocab_hash,
                     {{"best_epoch", h.best_epoch}, {"validation_loss", h.validation_loss.empty() ? 0.0 : h.validation_loss[h.best_epoch]}});
  say(log, "train-code: " + std::to_string(h.train_loss.size()) + " epochs, best epoch " + std::to_string(h.best_epoch + 1) +
               (h.validation_loss.empty() ? "" : ", validation loss " + std::to_string(h.validation_loss[h.best_epoch])));
}

void train_text(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const Prepared p = load_prepared(config);
  const Split s = split(config, p.cohort);
  const auto trained = text::train_summarizer(s.train, config.pipeline.text);
  trained.model.save(out_dir(config) / artifact::text_model, p.vocab_hash);
  const auto& h = trained.history;
  say(log, "train-text: " + std::to_string(trained.model.tokens.size()) + " tokens, best epoch " + std::to_string(h.best_epoch + 1) +
               (h.validation_loss.empty() ? "" : ", validation loss " + std::to_string(h.validation_loss[h.best_epoch])));
}

void represent(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const Prepared p = load_prepared(config);
  const auto code_model = load_code(config, p);
  const auto text_model = load_text(config, p);
  text::SentenceVectors vectors;
  if (!config.paths.sentence_vectors.empty()) vectors = text::read_sentence_vectors(fs::path(config.paths.sentence_vectors));
  const rep::UpstreamModels models{&code_model, &text_model, &p.vocab, &p.demographics,
                                   config.paths.sentence_vectors.empty() ? nullptr : &vectors};
  const auto labels = cohort::extract_labels(p.cohort, config.task, &p.vocab);
  std::vector<rep::PatientRepresentation> reps;
  reps.reserve(labels.size());
  for (auto& l : rep::represent_labels(models, p.cohort, labels, config.task)) reps.push_back(std::move(l.rep));
  std::ostringstream out;
  rep::write_representations(out, reps, config.task);
  write_file(out_dir(config) / artifact::representations(config.task), out.str());
  say(log, "represent: " + std::to_string(reps.size()) + " " + std::string(cohort::to_string(config.task)) +
               " visits, width " + std::to_string(models.layout().total()));
}

void train_task(const RunConfig& config, const Log& log) {
  if (config.task == cohort::Task::code_prediction) {
    throw std::invalid_argument("task codes is ranked by the code embedder and has no classifier; run evaluate");
  }
  begin_stage(config);
  const fs::path reps_path = require(config, artifact::representations(config.task), "represent");
  const Prepared p = load_prepared(config);
  const rep::SegmentLayout layout{load_code(config, p).config().d_code, load_text(config, p).config.d_enc, p.demographics.dimension()};
  LabeledRows rows = labeled_rows(config, p, reps_path, layout.total());
  ablate_rows(rows.train.z, layout, config.ablate);
  const auto trained = tasks::train_task(rows.train.z, rows.train.labels, config.task, config.pipeline.classifier);
  trained.model.save(out_dir(config) / artifact::classifier(config.task), p.vocab_hash,
                     {{"ablate", segment_names(config.ablate)},
                      {"layout", {layout.code, layout.text, layout.demo}},
                      {"representations_hash", hex(fnv1a64(read_file(reps_path)))}});
  say(log, "train-task: " + std::to_string(rows.train.labels.size()) + " training visits, final loss " +
               std::to_string(trained.history.train_loss.empty() ? 0.0 : trained.history.train_loss.back()));
}

void evaluate(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const Prepared p = load_prepared(config);
  std::vector<eval::MetricReport> reports;
  if (config.task == cohort::Task::code_prediction) {
    const auto model = load_code(config, p);
    const Split s = split(config, p.cohort);
    for (const auto& [name, v] : eval::evaluate_code_prediction(model, p.vocab, s.test, config.pipeline.recall_k)) {
      reports.push_back(eval::MetricReport::from_folds(name, {v}, std::stoul(name.substr(7))));
    }
  } else {
    const fs::path ckpt = require(config, artifact::classifier(config.task), "train-task");
    const fs::path reps_path = require(config, artifact::representations(config.task), "represent");
    const auto extra = tasks::ClassifierModel::load_extra(ckpt);
    if (extra.at("representations_hash").get<std::string>() != hex(fnv1a64(read_file(reps_path)))) {
      throw std::invalid_argument(reps_path.string() + " changed after the classifier was trained; run train-task again");
    }
    if (extra.at("ablate").get<std::vector<std::string>>() != segment_names(config.ablate)) {
      throw std::invalid_argument("the classifier was trained with a different --ablate; run train-task again");
    }
    const auto model = tasks::ClassifierModel::load(ckpt, p.vocab_hash);
    const auto dims = extra.at("layout").get<std::vector<std::size_t>>();
    const rep::SegmentLayout layout{dims.at(0), dims.at(1), dims.at(2)};
    if (model.input_dim() != layout.total()) throw std::invalid_argument("classifier input width does not match its layout");
    LabeledRows rows = labeled_rows(config, p, reps_path, layout.total());
    ablate_rows(rows.test.z, layout, config.ablate);
    if (rows.test.labels.empty()) throw std::invalid_argument("evaluate: no labeled visits in the test fold");
    const Tensor probs = model.predict(rows.test.z);
    if (config.task == cohort::Task::los9) {
      std::vector<std::size_t> keep(rows.test.labels.size());
      std::iota(keep.begin(), keep.end(), std::size_t{0});
      if (config.pipeline.balance_los) {
        keep = tasks::balance_for_los(rows.train.labels, rows.test.labels, derive_seed(config.pipeline.seed, "balance"));
      }
      std::vector<std::size_t> predicted, truth;
      for (std::size_t i : keep) {
        const auto row = probs.row(i);
        predicted.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) + 1);
        truth.push_back(static_cast<std::size_t>(rows.test.labels[i]));
      }
      reports.push_back(eval::MetricReport::from_folds("top1_accuracy", {eval::top1_accuracy(predicted, truth)}));
    } else {
      const std::vector<double> scores(probs.data().begin(), probs.data().end());
      reports.push_back(eval::MetricReport::from_folds("auc_roc", {eval::auc_roc(scores, rows.test.labels)}));
      reports.push_back(eval::MetricReport::from_folds("pr_auc", {eval::pr_auc(scores, rows.test.labels)}));
    }
  }
  write_reports(out_dir(config) / artifact::report_json, out_dir(config) / artifact::report_csv, reports);
  for (const auto& r : reports) say(log, "evaluate: " + r.metric + " = " + std::to_string(r.mean));
}

void export_embeddings(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const Prepared p = load_prepared(config);
  const auto model = load_code(config, p);
  const Tensor& w = model.embedding_matrix();
  std::ostringstream out;
  out << "code_id";
  for (std::size_t j = 0; j < w.cols(); ++j) out << ",e" << j + 1;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < w.rows(); ++i) {
    out << p.vocab.key(i);
    for (double v : w.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(static_cast<float>(v)));
      out << buf;
    }
    out << '\n';
  }
  write_file(out_dir(config) / artifact::embeddings, out.str());
  say(log, "export: " + std::to_string(w.rows()) + " codes x " + std::to_string(w.cols()));
}

void run_crossval(const RunConfig& config, const Log& log) {
  begin_stage(config);
  const Prepared p = load_prepared(config);
  text::SentenceVectors vectors;
  if (!config.paths.sentence_vectors.empty()) vectors = text::read_sentence_vectors(fs::path(config.paths.sentence_vectors));
  const auto result = eval::crossval(p.cohort, p.vocab, p.demographics, config.task, {eval::make_variant(config.ablate)},
                                     config.pipeline, config.paths.sentence_vectors.empty() ? nullptr : &vectors,
                                     [&](const std::string& line) { say(log, "crossval: " + line); });
  write_reports(out_dir(config) / artifact::crossval_json, out_dir(config) / artifact::crossval_csv, result.reports);
  for (const auto& r : result.reports) say(log, "crossval: " + r.metric + " = " + std::to_string(r.mean) + " +/- " + std::to_string(r.std));
}

}  // namespace taper::cli
