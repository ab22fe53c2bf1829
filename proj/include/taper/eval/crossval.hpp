#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "taper/cohort/split.hpp"
#include "taper/eval/metrics.hpp"
#include "taper/rep/patient_rep.hpp"
#include "taper/tasks/classifier.hpp"

namespace taper::eval {

struct PipelineConfig {
  code::CodeEmbedderConfig code;
  text::SummarizerConfig text;
  tasks::ClassifierConfig classifier;
  std::size_t folds = 7;
  /// Cutoffs reported for code prediction.
  std::vector<std::size_t> recall_k{10, 20, 30};
  /// Evaluate length of stay on a class-balanced subsample of each test fold.
  bool balance_los = true;
  std::uint64_t seed = 1;

  void validate() const;
};

/// A representation variant: the segments zeroed before the classifier.
struct Variant {
  std::string name;
  std::set<rep::Segment> ablate;
  /// Train the classifier on permuted labels (a chance-level control).
  bool shuffle_labels = false;
};

/// "code+text+demo" style name of the segments that remain.
std::string variant_name(const std::set<rep::Segment>& ablate);
Variant make_variant(const std::set<rep::Segment>& ablate, bool shuffle_labels = false);

/// Upstream models trained on one fold's training patients.
struct FoldModels {
  code::CodeEmbedderModel code;
  text::TextModel text;
};
FoldModels train_upstream(const cohort::Cohort& train, const cohort::CodeVocabulary& vocab, const PipelineConfig& config,
                          std::uint64_t seed);

using NamedMetrics = std::vector<std::pair<std::string, double>>;

/// Trains a classifier for one variant on `train` and scores it on `test`.
/// Binary tasks report auc_roc and pr_auc; length of stay reports
/// top1_accuracy.
NamedMetrics evaluate_variant(const std::vector<rep::LabeledRepresentation>& train,
                              const std::vector<rep::LabeledRepresentation>& test, cohort::Task task,
                              const Variant& variant, const PipelineConfig& config, std::uint64_t seed);

/// Code prediction metrics (recall@k overall and per code system) on a test cohort.
NamedMetrics evaluate_code_prediction(const code::CodeEmbedderModel& model, const cohort::CodeVocabulary& vocab,
                                      const cohort::Cohort& test, std::span<const std::size_t> ks);

struct CrossvalResult {
  std::vector<cohort::Fold> folds;
  /// Metric names are qualified by variant ("code+text+demo/auc_roc").
  std::vector<MetricReport> reports;

  const MetricReport& find(const std::string& variant, const std::string& metric) const;
};

/// Throws std::logic_error if any test patient also appears in training.
void assert_disjoint(const cohort::Fold& train, const cohort::Fold& test, std::size_t fold);

/// k-fold evaluation on patient ids. For each fold the upstream models are
/// trained on the training patients only and shared by every variant. Errors
/// from a fold are rethrown with the fold index. `progress` receives one line
/// per finished fold.
CrossvalResult crossval(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                        const cohort::DemographicsEncoder& demographics, cohort::Task task,
                        const std::vector<Variant>& variants, const PipelineConfig& config,
                        const text::SentenceVectors* sentence_vectors = nullptr,
                        const std::function<void(const std::string&)>& progress = {});

}  // namespace taper::eval
