#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "taper/cohort/labels.hpp"
#include "taper/numerics/graph.hpp"
#include "taper/rep/patient_rep.hpp"

namespace taper::tasks {

struct ClassifierConfig {
  double lr0 = 1e-3;
  int epochs = 30;
  double step_factor = 0.1;
  int step_every = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

/// 1 for the binary tasks, 9 for length of stay. Code prediction has no head.
std::size_t output_width(cohort::Task task);

/// Two-layer head: input -> ceil(input/2) ReLU -> sigmoid (binary) or
/// softmax (length of stay).
class ClassifierModel {
 public:
  ClassifierModel(std::size_t input_dim, cohort::Task task, std::uint64_t seed);

  std::size_t input_dim() const { return w1_.value.rows(); }
  std::size_t hidden_dim() const { return w1_.value.cols(); }
  std::size_t output_dim() const { return w2_.value.cols(); }
  cohort::Task task() const { return task_; }

  ParameterRefs parameters();
  /// Pre-activation outputs, N x output_dim.
  Var logits(Graph& g, Var z);
  /// Mean cross-entropy. Labels are 0/1 for binary tasks and 1..9 for length of stay.
  Var loss(Graph& g, const Tensor& z, std::span<const int> labels);

  /// N x output_dim probabilities.
  Tensor predict(const Tensor& z) const;
  std::vector<double> predict(std::span<const double> z) const;
  /// Positive-class probability (binary) or most probable class 1..9.
  double score(std::span<const double> z) const;
  int predicted_class(std::span<const double> z) const;

  void save(const std::filesystem::path& path, const std::string& vocab_hash,
            const nlohmann::json& extra = nlohmann::json::object()) const;
  static ClassifierModel load(const std::filesystem::path& path, const std::string& vocab_hash = {});
  /// Metadata stored alongside the weights by `save`.
  static nlohmann::json load_extra(const std::filesystem::path& path);

 private:
  cohort::Task task_;
  Parameter w1_, b1_, w2_, b2_;
};

struct ClassifierHistory {
  std::vector<double> train_loss;
  std::vector<double> learning_rate;
};

struct TrainedClassifier {
  ClassifierModel model;
  ClassifierHistory history;
};

/// Trains a fresh head on fixed representations `z` (one row per label).
/// A training set with a single class is rejected.
TrainedClassifier train_task(const Tensor& z, std::span<const int> labels, cohort::Task task, const ClassifierConfig& config);

/// Representation rows with the `ablate` segments zeroed, and their labels.
struct Design {
  Tensor z;
  std::vector<int> labels;
};
Design make_design(const std::vector<rep::LabeledRepresentation>& reps, const std::set<rep::Segment>& ablate = {});

/// Indices into `test_labels` forming a class-balanced subsample: every class
/// seen in either split is kept with the count of the rarest one. A class
/// missing from the test pool is an error naming it.
std::vector<std::size_t> balance_for_los(std::span<const int> train_labels, std::span<const int> test_labels,
                                         std::uint64_t seed);

}  // namespace taper::tasks
