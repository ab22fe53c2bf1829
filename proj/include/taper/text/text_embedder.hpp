#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "taper/cohort/cohort.hpp"
#include "taper/numerics/graph.hpp"

namespace taper::text {

/// Lowercased alphanumeric runs; every other character separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Token ids; 0 is the shared unknown token.
class TokenVocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr const char* kUnkToken = "<unk>";

  TokenVocabulary();
  /// Tokens seen at least `min_count` times, most frequent first (ties
  /// alphabetical), capped at `max_tokens` plus the unknown token.
  static TokenVocabulary build(const std::vector<std::string>& corpus, std::size_t min_count = 2,
                               std::size_t max_tokens = 20000);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::string content_hash() const;

  nlohmann::json to_json() const;
  static TokenVocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Sentence = std::vector<std::size_t>;

/// Tokenizes and greedily chunks into sentences of at most `n` ids. Empty
/// text gives no sentences.
std::vector<Sentence> tokenize_and_batch(std::string_view text, const TokenVocabulary& vocab, std::size_t n);

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::size_t dimension() const = 0;
  /// 1 x dimension().
  virtual Tensor encode(const Sentence& sentence) const = 0;
};

/// Mean of per-token embedding rows.
class BagEncoder : public SentenceEncoder {
 public:
  BagEncoder() = default;
  BagEncoder(std::size_t vocab_size, std::size_t d_text, std::uint64_t seed);

  std::size_t dimension() const override { return table_.value.cols(); }
  Tensor encode(const Sentence& sentence) const override;
  /// m x d_text with gradients flowing into the table.
  Var encode(Graph& g, const std::vector<Sentence>& sentences);

  Parameter& table() { return table_; }
  const Parameter& table() const { return table_; }

 private:
  Parameter table_;
};

/// U: one row per sentence.
Tensor encode_sentences(const std::vector<Sentence>& sentences, const SentenceEncoder& encoder);

struct SummarizerConfig {
  std::size_t d_text = 64;
  std::size_t d_enc = 128;
  std::size_t n_layers = 2;
  /// Maximum tokens per sentence.
  std::size_t sentence_tokens = 16;
  double teacher_forcing = 0.5;
  double lr0 = 1e-3;
  double lr_decay = 0.1;
  int lr_step_epochs = 50;
  int epochs = 50;
  std::size_t batch_size = 32;
  double validation_fraction = 0.1;
  std::size_t min_token_count = 2;
  std::size_t max_tokens = 20000;
  /// Also update the sentence encoder's token table (targets stay fixed per step).
  bool train_encoder = false;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SummarizerConfig from_json(const nlohmann::json& j);
};

/// Bidirectional GRU encoder with attention pooling and a GRU decoder that
/// reconstructs the sentence matrix.
class Summarizer {
 public:
  Summarizer() = default;
  explicit Summarizer(const SummarizerConfig& config);

  const SummarizerConfig& config() const { return config_; }
  ParameterRefs parameters();

  struct BatchResult {
    Var loss;                     ///< mean over sequences of the summed squared error
    Var reconstruction;           ///< decoder outputs stacked like the inputs
    std::vector<Var> summaries;   ///< 1 x d_enc each (only when requested)
    std::vector<Var> attention;   ///< m x m weights each (only when requested)
  };
  /// `inputs` are the sentence matrices; `targets` their fixed values.
  /// Teacher-forcing coins are drawn from `rng`, one per sequence and step.
  BatchResult run(Graph& g, const std::vector<Var>& inputs, const std::vector<Tensor>& targets, double teacher_forcing,
                  Rng& rng, bool with_summaries, bool with_decoder = true);

  /// E_U: 1 x d_enc.
  Tensor summarize(const Tensor& u) const;
  /// Row-stochastic self-attention weights over the encoder states.
  Tensor attention_weights(const Tensor& u) const;

  struct Reconstruction {
    Tensor u_hat;
    double loss = 0.0;
  };
  Reconstruction reconstruct(const Tensor& u, double teacher_forcing, Rng& rng) const;

 private:
  struct Gru {
    Parameter wx, wh, bx, bh;
  };
  Var gru_step(Graph& g, Gru& cell, Var x, Var h);

  SummarizerConfig config_;
  std::vector<Gru> forward_cells_, backward_cells_;
  Gru decoder_;
  Parameter out_weight_, out_bias_;
};

/// Token vocabulary, sentence encoder and summarizer trained together.
struct TextModel {
  SummarizerConfig config;
  TokenVocabulary tokens;
  BagEncoder encoder;
  Summarizer summarizer;

  /// Summary of free text, or nothing when it has no tokens.
  std::optional<Tensor> embed(std::string_view text) const;
  std::vector<Sentence> sentences(std::string_view text) const;
  ParameterRefs parameters();

  void save(const std::filesystem::path& path, const std::string& vocab_hash) const;
  static TextModel load(const std::filesystem::path& path, const std::string& vocab_hash = {});
};

struct TextTrainingHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::vector<double> learning_rate;
  std::size_t best_epoch = 0;
  /// Free-running reconstruction loss on the validation documents before training.
  double initial_validation_loss = 0.0;
};

struct TrainedTextModel {
  TextModel model;
  TextTrainingHistory history;
};

/// All notes of a visit in time order, joined by spaces.
std::string visit_document(const cohort::Visit& visit);

/// Trains on every visit document of the cohort; validation documents come
/// from a held-out share of patients.
TrainedTextModel train_summarizer(const cohort::Cohort& cohort, const SummarizerConfig& config);

/// Pre-computed sentence vectors keyed by visit ("<patient_id>:<visit index>").
using SentenceVectors = std::map<std::string, Tensor>;
SentenceVectors read_sentence_vectors(std::istream& in);
SentenceVectors read_sentence_vectors(const std::filesystem::path& path);
std::string visit_key(const std::string& patient_id, std::size_t visit_index);

}  // namespace taper::text
