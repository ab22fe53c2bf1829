#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "taper/cohort/cohort.hpp"
#include "taper/cohort/vocabulary.hpp"
#include "taper/numerics/graph.hpp"
#include "taper/numerics/optim.hpp"

namespace taper::code {

struct CodeEmbedderConfig {
  std::size_t d_code = 128;
  std::size_t n_layers = 2;
  std::size_t n_head = 8;
  std::size_t d_head = 64;
  /// Feed-forward inner width; 0 means 4 * d_code.
  std::size_t d_ff = 0;
  std::size_t window = 2;
  double lr0 = 2.5e-4;
  int cosine_period = 50;
  int epochs = 50;
  std::size_t batch_size = 32;
  /// Share of training patients held out to pick the best epoch.
  double validation_fraction = 0.1;
  /// Use a softmax over the vocabulary instead of per-code sigmoids.
  bool softmax_output = false;
  std::uint64_t seed = 1;

  std::size_t ff_width() const { return d_ff == 0 ? 4 * d_code : d_ff; }
  void validate() const;
  nlohmann::json to_json() const;
  static CodeEmbedderConfig from_json(const nlohmann::json& j);
};

/// Patients' visit sequences, each a T x |C| multi-hot matrix. Sequences are
/// kept unpadded; `padding_mask` describes the equivalent padded layout.
struct VisitSequenceBatch {
  std::vector<Tensor> sequences;
  std::vector<std::vector<std::int64_t>> times;

  std::size_t size() const { return sequences.size(); }
  std::size_t max_length() const;
  std::size_t total_visits() const;
  /// B x max_length, 1 where a position is padding.
  Mask padding_mask() const;
  /// All sequences stacked along rows.
  Tensor stacked() const;

  static VisitSequenceBatch from_patients(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                                          const std::vector<std::size_t>& patients);
};

/// T x |C| multi-hot matrix for the first `visits` visits of a patient.
Tensor encode_history(const cohort::PatientRecord& record, const cohort::CodeVocabulary& vocab, std::size_t visits);

/// Row t: sin(t / 10000^(2i/d)) in even dims, cos in odd dims.
Tensor positional_encoding(std::size_t length, std::size_t d);

class CodeEmbedderModel {
 public:
  CodeEmbedderModel(const CodeEmbedderConfig& config, std::size_t vocab_size);

  const CodeEmbedderConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  ParameterRefs parameters();

  struct Output {
    Var representations;  ///< N x d_code, sequences stacked
    Var probabilities;    ///< N x |C|
  };
  Output forward(Graph& g, const VisitSequenceBatch& batch);

  /// Differentiable pieces, exposed for testing.
  Var embed(Graph& g, Var codes);
  Var attention_layer(Graph& g, std::size_t layer, Var x, std::span<const std::size_t> lengths);

  /// Inference on one sequence: T x d_code and T x |C|.
  Tensor represent(const Tensor& sequence) const;
  Tensor predict(const Tensor& sequence) const;

  const Tensor& embedding_matrix() const { return embedding_.value; }

  void save(const std::filesystem::path& path, const std::string& vocab_hash, const nlohmann::json& extra = {}) const;
  static CodeEmbedderModel load(const std::filesystem::path& path, const std::string& vocab_hash = {});

 private:
  struct Layer {
    Parameter wq, wk, wv, wo, bo;
    Parameter ln1_gain, ln1_bias;
    Parameter w1, b1, w2, b2;
    Parameter ln2_gain, ln2_bias;
  };

  CodeEmbedderConfig config_;
  std::size_t vocab_size_ = 0;
  Parameter embedding_;
  std::vector<Layer> layers_;
  Parameter out_weight_, out_bias_;
};

/// Visit-window skip-gram objective. `probs` and `codes` hold the batch's
/// sequences stacked along rows with the given lengths. Each sequence
/// contributes the mean over its valid (t, t+j) pairs of the summed per-code
/// cross-entropy; the result is the mean over sequences with at least one
/// pair.
Var skipgram_loss(Var probs, const Tensor& codes, std::span<const std::size_t> lengths, std::size_t window,
                  double eps = 1e-7);

struct TrainingHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::vector<double> learning_rate;
  std::size_t best_epoch = 0;
};

struct TrainedCodeEmbedder {
  CodeEmbedderModel model;
  TrainingHistory history;
};

/// Trains on patients with at least two visits. Returns the parameters of
/// the epoch with the lowest validation loss, rounded to float precision.
TrainedCodeEmbedder train_code_embedder(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                                        const CodeEmbedderConfig& config);

/// Vocabulary indices ranked by the next-visit probability after the last
/// row of `history`. Ties keep vocabulary order. With `system`, only codes
/// of that system are ranked.
std::vector<std::size_t> predict_next_codes(const CodeEmbedderModel& model, const Tensor& history,
                                            const cohort::CodeVocabulary* vocab = nullptr,
                                            std::optional<cohort::CodeSystem> system = std::nullopt);

/// Indices ranked by how many visits of `cohort` contain each code; the
/// usual baseline for next-visit prediction.
std::vector<std::size_t> frequency_ranking(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                                           std::optional<cohort::CodeSystem> system = std::nullopt);

}  // namespace taper::code
