#include "taper/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace taper::eval {

namespace {

void check_scores(std::span<const double> scores, std::span<const int> labels, const char* op) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(labels.size()) + " labels");
  }
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument(std::string(op) + ": labels must be 0 or 1");
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument(std::string(op) + ": NaN score");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::optional<double> recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be >= 1");
  const std::unordered_set<std::size_t> wanted(truth.begin(), truth.end());
  if (wanted.empty()) return std::nullopt;
  const std::size_t top = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += wanted.count(ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(wanted.size());
}

void RecallAccumulator::add(std::span<const std::size_t> ranked, std::span<const std::size_t> truth) {
  if (const auto r = recall_at_k(ranked, truth, k_)) {
    sum_ += *r;
    ++n_;
  } else {
    ++skipped_;
  }
}

double RecallAccumulator::mean() const {
  if (n_ == 0) throw std::invalid_argument("recall@" + std::to_string(k_) + ": no sample had a non-empty truth set");
  return sum_ / static_cast<double>(n_);
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  check_scores(scores, labels, "auc_roc");
  const std::size_t n = scores.size();
  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0 || pos == n) throw std::invalid_argument("auc_roc: needs both classes, got " + std::to_string(pos) + " positives of " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks, 1-based, shared across ties.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) pos_rank_sum += rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(n - pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_scores(scores, labels, "pr_auc");
  const std::size_t n = scores.size();
  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) throw std::invalid_argument("pr_auc: needs at least one positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) tp += labels[order[j++]] == 1;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double top1_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("top1_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw std::invalid_argument("top1_accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

MetricReport MetricReport::from_folds(std::string metric, std::vector<double> folds, std::optional<std::size_t> k) {
  if (folds.empty()) throw std::invalid_argument("metric report '" + metric + "' has no folds");
  MetricReport r{std::move(metric), k, std::move(folds), 0.0, 0.0};
  const double n = static_cast<double>(r.folds.size());
  r.mean = std::accumulate(r.folds.begin(), r.folds.end(), 0.0) / n;
  if (r.folds.size() > 1) {
    double ss = 0.0;
    for (double v : r.folds) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

nlohmann::json reports_to_json(const std::vector<MetricReport>& reports) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : reports) {
    nlohmann::json entry{{"folds", r.folds}, {"mean", r.mean}, {"std", r.std}};
    if (r.k) entry["k"] = *r.k;
    j[r.metric] = std::move(entry);
  }
  return j;
}

std::string reports_to_csv(const std::vector<MetricReport>& reports) {
  std::size_t folds = 0;
  for (const auto& r : reports) folds = std::max(folds, r.folds.size());
  std::ostringstream os;
  os << "metric,k,mean,std";
  for (std::size_t f = 0; f < folds; ++f) os << ",fold_" << f + 1;
  os << '\n';
  for (const auto& r : reports) {
    os << r.metric << ',' << (r.k ? std::to_string(*r.k) : "") << ',' << format_double(r.mean) << ','
       << format_double(r.std);
    for (std::size_t f = 0; f < folds; ++f) os << ',' << (f < r.folds.size() ? format_double(r.folds[f]) : "");
    os << '\n';
  }
  return os.str();
}

}  // namespace taper::eval
