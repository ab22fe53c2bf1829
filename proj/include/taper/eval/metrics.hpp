#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace taper::eval {

/// |top-k ∩ truth| / |truth|. k is clamped to the ranking length. Empty
/// truth has no recall and gives nothing.
std::optional<double> recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k);

/// Mean recall@k over samples, counting the ones skipped for empty truth.
class RecallAccumulator {
 public:
  explicit RecallAccumulator(std::size_t k) : k_(k) {}
  void add(std::span<const std::size_t> ranked, std::span<const std::size_t> truth);
  double mean() const;
  std::size_t count() const { return n_; }
  std::size_t skipped() const { return skipped_; }

 private:
  std::size_t k_;
  double sum_ = 0.0;
  std::size_t n_ = 0;
  std::size_t skipped_ = 0;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Labels are 0 or 1 and both must occur.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Area under the precision-recall curve with step interpolation over the
/// distinct score thresholds (average precision). Needs a positive.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

double top1_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct MetricReport {
  std::string metric;
  std::optional<std::size_t> k;
  std::vector<double> folds;
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single fold.
  double std = 0.0;

  static MetricReport from_folds(std::string metric, std::vector<double> folds, std::optional<std::size_t> k = {});
};

/// {metric: {"folds": [...], "mean": m, "std": s}} (plus "k" when set).
nlohmann::json reports_to_json(const std::vector<MetricReport>& reports);
/// metric,k,mean,std,fold_1,...
std::string reports_to_csv(const std::vector<MetricReport>& reports);

}  // namespace taper::eval
