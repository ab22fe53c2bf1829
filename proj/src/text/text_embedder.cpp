#include "taper/text/text_embedder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "taper/numerics/checkpoint.hpp"
#include "taper/numerics/json_fields.hpp"
#include "taper/numerics/optim.hpp"

namespace taper::text {

namespace {

constexpr const char* kSection = "text";

std::map<std::size_t, double> bag_weights(const Sentence& sentence) {
  if (sentence.empty()) throw std::invalid_argument("bag encoder: empty sentence");
  std::map<std::size_t, double> w;
  const double share = 1.0 / static_cast<double>(sentence.size());
  for (std::size_t id : sentence) w[id] += share;
  return w;
}

Parameter gate_weight(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Parameter p(name, Tensor::zeros(rows, cols));
  init_fan_in_uniform(p, fan_in, rng);
  return p;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TokenVocabulary::TokenVocabulary() : tokens_{kUnkToken}, index_{{kUnkToken, kUnk}} {}

TokenVocabulary TokenVocabulary::build(const std::vector<std::string>& corpus, std::size_t min_count,
                                       std::size_t max_tokens) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (auto& t : tokenize(doc)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, n] : counts)
    if (n >= min_count && t != kUnkToken) kept.emplace_back(t, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (kept.size() > max_tokens) kept.resize(max_tokens);
  TokenVocabulary v;
  for (auto& [t, _] : kept) {
    v.index_.emplace(t, v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

std::size_t TokenVocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::string TokenVocabulary::content_hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json TokenVocabulary::to_json() const { return tokens_; }

TokenVocabulary TokenVocabulary::from_json(const nlohmann::json& j) {
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.empty() || tokens.front() != kUnkToken) throw std::invalid_argument("token vocabulary must start with " + std::string(kUnkToken));
  TokenVocabulary v;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (!v.index_.emplace(tokens[i], v.tokens_.size()).second) throw std::invalid_argument("duplicate token '" + tokens[i] + "'");
    v.tokens_.push_back(tokens[i]);
  }
  return v;
}

std::vector<Sentence> tokenize_and_batch(std::string_view text, const TokenVocabulary& vocab, std::size_t n) {
  if (n == 0) throw std::invalid_argument("tokenize_and_batch: sentence length must be >= 1");
  std::vector<Sentence> out;
  for (const auto& t : tokenize(text)) {
    if (out.empty() || out.back().size() == n) out.emplace_back();
    out.back().push_back(vocab.id(t));
  }
  return out;
}

BagEncoder::BagEncoder(std::size_t vocab_size, std::size_t d_text, std::uint64_t seed)
    : table_("bag.table", Tensor::zeros(vocab_size, d_text)) {
  if (vocab_size == 0 || d_text == 0) throw std::invalid_argument("bag encoder: sizes must be positive");
  Rng rng(seed);
  for (double& v : table_.value.data()) v = rng.normal();
}

Tensor BagEncoder::encode(const Sentence& sentence) const {
  const std::size_t d = dimension();
  Tensor out = Tensor::zeros(1, d);
  for (const auto& [id, w] : bag_weights(sentence)) {
    if (id >= table_.value.rows()) throw std::out_of_range("bag encoder: token id " + std::to_string(id) + " out of range");
    const auto row = table_.value.row(id);
    for (std::size_t k = 0; k < d; ++k) out[k] += w * row[k];
  }
  return out;
}

Var BagEncoder::encode(Graph& g, const std::vector<Sentence>& sentences) {
  Tensor select = Tensor::zeros(sentences.size(), table_.value.rows());
  for (std::size_t i = 0; i < sentences.size(); ++i)
    for (const auto& [id, w] : bag_weights(sentences[i])) select(i, id) = w;
  return matmul(g.constant(std::move(select)), g.parameter(table_));
}

Tensor encode_sentences(const std::vector<Sentence>& sentences, const SentenceEncoder& encoder) {
  Tensor u = Tensor::zeros(sentences.size(), encoder.dimension());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const Tensor row = encoder.encode(sentences[i]);
    std::copy(row.data().begin(), row.data().end(), u.row(i).begin());
  }
  return u;
}

void SummarizerConfig::validate() const {
  if (d_text == 0 || d_enc == 0 || n_layers == 0 || sentence_tokens == 0 || batch_size == 0) {
    throw std::invalid_argument("summarizer: d_text, d_enc, n_layers, sentence_tokens and batch_size must be positive");
  }
  if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) throw std::invalid_argument("summarizer: teacher_forcing must be in [0, 1]");
  if (!(lr0 > 0.0)) throw std::invalid_argument("summarizer: lr0 must be positive");
  if (lr_step_epochs <= 0) throw std::invalid_argument("summarizer: lr_step_epochs must be positive");
  if (epochs < 0) throw std::invalid_argument("summarizer: epochs must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("summarizer: validation_fraction must be in [0, 1)");
  }
}

nlohmann::json SummarizerConfig::to_json() const {
  return {{"d_text", d_text},
          {"d_enc", d_enc},
          {"n_layers", n_layers},
          {"sentence_tokens", sentence_tokens},
          {"teacher_forcing", teacher_forcing},
          {"lr0", lr0},
          {"lr_decay", lr_decay},
          {"lr_step_epochs", lr_step_epochs},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"validation_fraction", validation_fraction},
          {"min_token_count", min_token_count},
          {"max_tokens", max_tokens},
          {"train_encoder", train_encoder},
          {"seed", seed}};
}

SummarizerConfig SummarizerConfig::from_json(const nlohmann::json& j) {
  SummarizerConfig c;
  const std::string ctx = "summarizer";
  reject_unknown_keys(j, c.to_json(), ctx);
  read_field(j, "d_text", c.d_text, ctx);
  read_field(j, "d_enc", c.d_enc, ctx);
  read_field(j, "n_layers", c.n_layers, ctx);
  read_field(j, "sentence_tokens", c.sentence_tokens, ctx);
  read_field(j, "teacher_forcing", c.teacher_forcing, ctx);
  read_field(j, "lr0", c.lr0, ctx);
  read_field(j, "lr_decay", c.lr_decay, ctx);
  read_field(j, "lr_step_epochs", c.lr_step_epochs, ctx);
  read_field(j, "epochs", c.epochs, ctx);
  read_field(j, "batch_size", c.batch_size, ctx);
  read_field(j, "validation_fraction", c.validation_fraction, ctx);
  read_field(j, "min_token_count", c.min_token_count, ctx);
  read_field(j, "max_tokens", c.max_tokens, ctx);
  read_field(j, "train_encoder", c.train_encoder, ctx);
  read_field(j, "seed", c.seed, ctx);
  c.validate();
  return c;
}

Summarizer::Summarizer(const SummarizerConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, "text/summarizer"));
  const std::size_t h = config_.d_enc;
  const auto make_gru = [&](const std::string& name, std::size_t in) {
    return Gru{gate_weight(name + ".wx", in, 3 * h, h, rng), gate_weight(name + ".wh", h, 3 * h, h, rng),
               gate_weight(name + ".bx", 1, 3 * h, h, rng), gate_weight(name + ".bh", 1, 3 * h, h, rng)};
  };
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::size_t in = l == 0 ? config_.d_text : h;
    forward_cells_.push_back(make_gru("enc" + std::to_string(l) + ".fwd", in));
    backward_cells_.push_back(make_gru("enc" + std::to_string(l) + ".bwd", in));
  }
  decoder_ = make_gru("dec", config_.d_text);
  out_weight_ = gate_weight("dec.out_weight", h, config_.d_text, h, rng);
  out_bias_ = Parameter("dec.out_bias", Tensor::zeros(1, config_.d_text));
}

ParameterRefs Summarizer::parameters() {
  ParameterRefs refs;
  const auto add_gru = [&](Gru& c) {
    for (Parameter* p : {&c.wx, &c.wh, &c.bx, &c.bh}) refs.push_back(p);
  };
  for (std::size_t l = 0; l < forward_cells_.size(); ++l) {
    add_gru(forward_cells_[l]);
    add_gru(backward_cells_[l]);
  }
  add_gru(decoder_);
  refs.push_back(&out_weight_);
  refs.push_back(&out_bias_);
  return refs;
}

Var Summarizer::gru_step(Graph& g, Gru& cell, Var x, Var h) {
  const std::size_t b = x.rows(), n = config_.d_enc;
  const Var gx = add(matmul(x, g.parameter(cell.wx)), g.parameter(cell.bx));
  const Var gh = add(matmul(h, g.parameter(cell.wh)), g.parameter(cell.bh));
  const Var r = sigmoid(add(slice(gx, 0, b, 0, n), slice(gh, 0, b, 0, n)));
  const Var z = sigmoid(add(slice(gx, 0, b, n, 2 * n), slice(gh, 0, b, n, 2 * n)));
  const Var cand = tanh(add(slice(gx, 0, b, 2 * n, 3 * n), mul(r, slice(gh, 0, b, 2 * n, 3 * n))));
  // (1 - z) * cand + z * h
  return add(cand, mul(z, sub(h, cand)));
}

Summarizer::BatchResult Summarizer::run(Graph& g, const std::vector<Var>& inputs, const std::vector<Tensor>& targets,
                                        double teacher_forcing, Rng& rng, bool with_summaries, bool with_decoder) {
  if (inputs.empty()) throw std::invalid_argument("summarizer: empty batch");
  if (with_decoder && targets.size() != inputs.size()) throw std::invalid_argument("summarizer: targets do not match inputs");
  const std::size_t B = inputs.size(), H = config_.d_enc, D = config_.d_text;
  std::vector<std::size_t> len(B), offset(B);
  std::size_t N = 0, M = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (inputs[b].rows() == 0) throw std::invalid_argument("summarizer: sequence " + std::to_string(b) + " has no sentences");
    if (inputs[b].cols() != D) {
      throw std::invalid_argument("summarizer: sentence width " + std::to_string(inputs[b].cols()) + ", expected d_text " +
                                  std::to_string(D));
    }
    len[b] = inputs[b].rows();
    offset[b] = N;
    N += len[b];
    M = std::max(M, len[b]);
  }

  // Position of sequence b at step s of a direction, or N when past its end.
  const auto position = [&](std::size_t b, std::size_t s, bool reverse) {
    if (s >= len[b]) return N;
    return offset[b] + (reverse ? len[b] - 1 - s : s);
  };
  std::vector<std::vector<std::uint8_t>> active(M, std::vector<std::uint8_t>(B, 0));
  std::vector<bool> all_active(M, true);
  for (std::size_t s = 0; s < M; ++s)
    for (std::size_t b = 0; b < B; ++b) {
      active[s][b] = s < len[b];
      all_active[s] = all_active[s] && active[s][b];
    }

  Var layer_in = B == 1 ? inputs.front() : concat(inputs, 0);
  Var finals[2];
  for (std::size_t l = 0; l < forward_cells_.size(); ++l) {
    Var outs[2];
    for (int dir = 0; dir < 2; ++dir) {
      Gru& cell = dir == 0 ? forward_cells_[l] : backward_cells_[l];
      Var h = g.constant(Tensor::zeros(B, H));
      std::vector<Var> states;
      states.reserve(M);
      for (std::size_t s = 0; s < M; ++s) {
        Tensor select = Tensor::zeros(B, N);
        for (std::size_t b = 0; b < B; ++b)
          if (const std::size_t p = position(b, s, dir == 1); p < N) select(b, p) = 1.0;
        const Var x = matmul(g.constant(std::move(select)), layer_in);
        const Var next = gru_step(g, cell, x, h);
        h = all_active[s] ? next : where_rows(active[s], next, h);
        states.push_back(h);
      }
      Tensor gather = Tensor::zeros(N, M * B);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < len[b]; ++s) gather(position(b, s, dir == 1), s * B + b) = 1.0;
      outs[dir] = matmul(g.constant(std::move(gather)), concat(states, 0));
      finals[dir] = h;
    }
    layer_in = add(outs[0], outs[1]);
  }
  const Var states = layer_in;  // N x d_enc, summed directions of the top layer

  BatchResult result;
  if (with_summaries) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(H));
    for (std::size_t b = 0; b < B; ++b) {
      const Var hb = slice(states, offset[b], offset[b] + len[b], 0, H);
      const Var weights = softmax_rows(scale(matmul(hb, transpose(hb)), inv));
      result.attention.push_back(weights);
      result.summaries.push_back(mean(matmul(weights, hb), 0));
    }
  }
  if (!with_decoder) return result;

  Tensor target_stack = Tensor::zeros(N, D);
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b].shape() != inputs[b].shape()) throw std::invalid_argument("summarizer: target shape differs from input");
    std::copy(targets[b].data().begin(), targets[b].data().end(), target_stack.data().begin() + offset[b] * D);
  }

  Var h = add(finals[0], finals[1]);
  Var prev;
  std::vector<Var> preds;
  preds.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    Var x;
    if (i == 0) {
      x = g.constant(Tensor::zeros(B, D));
    } else {
      Tensor teacher = Tensor::zeros(B, D);
      std::vector<std::uint8_t> coins(B);
      bool all_heads = true, all_tails = true;
      for (std::size_t b = 0; b < B; ++b) {
        coins[b] = rng.bernoulli(teacher_forcing);
        all_heads = all_heads && coins[b];
        all_tails = all_tails && !coins[b];
        if (i - 1 < len[b]) {
          const auto src = target_stack.row(offset[b] + i - 1);
          std::copy(src.begin(), src.end(), teacher.row(b).begin());
        }
      }
      const Var tv = g.constant(std::move(teacher));
      x = all_heads ? tv : all_tails ? prev : where_rows(coins, tv, prev);
    }
    h = gru_step(g, decoder_, x, h);
    prev = add(matmul(h, g.parameter(out_weight_)), g.parameter(out_bias_));
    preds.push_back(prev);
  }
  Tensor gather = Tensor::zeros(N, M * B);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < len[b]; ++i) gather(offset[b] + i, i * B + b) = 1.0;
  result.reconstruction = matmul(g.constant(std::move(gather)), concat(preds, 0));
  const Var diff = sub(result.reconstruction, g.constant(std::move(target_stack)));
  result.loss = scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(B));
  return result;
}

Tensor Summarizer::summarize(const Tensor& u) const {
  auto& self = const_cast<Summarizer&>(*this);
  Graph g;
  Rng unused(0);
  return self.run(g, {g.constant(u)}, {}, 0.0, unused, true, false).summaries.front().value();
}

Tensor Summarizer::attention_weights(const Tensor& u) const {
  auto& self = const_cast<Summarizer&>(*this);
  Graph g;
  Rng unused(0);
  return self.run(g, {g.constant(u)}, {}, 0.0, unused, true, false).attention.front().value();
}

Summarizer::Reconstruction Summarizer::reconstruct(const Tensor& u, double teacher_forcing, Rng& rng) const {
  if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) throw std::invalid_argument("reconstruct: teacher_forcing must be in [0, 1]");
  auto& self = const_cast<Summarizer&>(*this);
  Graph g;
  const auto r = self.run(g, {g.constant(u)}, {u}, teacher_forcing, rng, false);
  return {r.reconstruction.value(), r.loss.value()[0]};
}

std::vector<Sentence> TextModel::sentences(std::string_view text) const {
  return tokenize_and_batch(text, tokens, config.sentence_tokens);
}

std::optional<Tensor> TextModel::embed(std::string_view text) const {
  const auto s = sentences(text);
  if (s.empty()) return std::nullopt;
  return summarizer.summarize(encode_sentences(s, encoder));
}

ParameterRefs TextModel::parameters() {
  ParameterRefs refs{&encoder.table()};
  for (Parameter* p : summarizer.parameters()) refs.push_back(p);
  return refs;
}

void TextModel::save(const std::filesystem::path& path, const std::string& vocab_hash) const {
  save_checkpoint(path, kSection, vocab_hash, config.to_json(), const_cast<TextModel&>(*this).parameters(),
                  {{"tokens", tokens.to_json()}});
}

TextModel TextModel::load(const std::filesystem::path& path, const std::string& vocab_hash) {
  const Checkpoint ckp = load_checkpoint(path, kSection, vocab_hash);
  TextModel m;
  m.config = SummarizerConfig::from_json(ckp.config);
  m.tokens = TokenVocabulary::from_json(ckp.extra.at("tokens"));
  m.encoder = BagEncoder(m.tokens.size(), m.config.d_text, 0);
  m.summarizer = Summarizer(m.config);
  ckp.load_into(m.parameters());
  return m;
}

std::string visit_document(const cohort::Visit& visit) {
  std::vector<const cohort::Note*> notes;
  for (const auto& n : visit.notes) notes.push_back(&n);
  std::stable_sort(notes.begin(), notes.end(), [](const auto* a, const auto* b) { return a->time < b->time; });
  std::string doc;
  for (const auto* n : notes) {
    if (n->text.empty()) continue;
    if (!doc.empty()) doc.push_back(' ');
    doc += n->text;
  }
  return doc;
}

namespace {

struct Document {
  std::vector<Sentence> sentences;
  Tensor u;  // fixed encoding when the encoder is frozen
};

double mean_loss(TextModel& model, const std::vector<Document>& docs, std::span<const std::size_t> idx,
                 std::size_t batch_size) {
  double total = 0.0;
  Rng unused(0);
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - b);
    Graph g;
    std::vector<Var> inputs;
    std::vector<Tensor> targets;
    for (std::size_t k = b; k < b + n; ++k) {
      const Tensor u = encode_sentences(docs[idx[k]].sentences, model.encoder);
      inputs.push_back(g.constant(u));
      targets.push_back(u);
    }
    total += model.summarizer.run(g, inputs, targets, 0.0, unused, false).loss.value()[0] * static_cast<double>(n);
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace

TrainedTextModel train_summarizer(const cohort::Cohort& cohort, const SummarizerConfig& config) {
  config.validate();
  std::vector<std::string> corpus;
  std::vector<std::size_t> owner;
  for (std::size_t p = 0; p < cohort.patients.size(); ++p)
    for (const auto& v : cohort.patients[p].visits) {
      std::string doc = visit_document(v);
      if (tokenize(doc).empty()) continue;
      corpus.push_back(std::move(doc));
      owner.push_back(p);
    }
  if (corpus.empty()) throw std::invalid_argument("train_summarizer: the cohort has no note text");

  TrainedTextModel result;
  TextModel& model = result.model;
  model.config = config;
  model.tokens = TokenVocabulary::build(corpus, config.min_token_count, config.max_tokens);
  model.encoder = BagEncoder(model.tokens.size(), config.d_text, derive_seed(config.seed, "text/bag"));
  model.summarizer = Summarizer(config);

  std::vector<Document> docs;
  for (const auto& text : corpus) {
    Document d{model.sentences(text), {}};
    d.u = encode_sentences(d.sentences, model.encoder);
    docs.push_back(std::move(d));
  }

  // Hold out whole patients.
  Rng rng(derive_seed(config.seed, "text/train"));
  std::vector<std::size_t> patients(owner.begin(), owner.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  rng.shuffle(std::span<std::size_t>(patients));
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(patients.size())));
  if (n_val >= patients.size()) n_val = patients.size() - 1;
  const std::set<std::size_t> val_patients(patients.begin(), patients.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < docs.size(); ++i) (val_patients.contains(owner[i]) ? val_idx : train_idx).push_back(i);
  const std::vector<std::size_t>& monitor = val_idx.empty() ? train_idx : val_idx;

  ParameterRefs params = config.train_encoder ? model.parameters() : model.summarizer.parameters();
  AdamState adam = AdamState::for_params(params);
  const LrSchedule schedule = StepDecay{config.lr0, config.lr_decay, config.lr_step_epochs};
  const ParameterRefs saved = model.parameters();

  result.history.initial_validation_loss = mean_loss(model, docs, monitor, config.batch_size);
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = snapshot(saved);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    rng.shuffle(std::span<std::size_t>(train_idx));
    double sum_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < train_idx.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, train_idx.size() - b);
      Graph g;
      std::vector<Var> inputs;
      std::vector<Tensor> targets;
      for (std::size_t k = b; k < b + n; ++k) {
        const Document& d = docs[train_idx[k]];
        if (config.train_encoder) {
          inputs.push_back(model.encoder.encode(g, d.sentences));
          targets.push_back(inputs.back().value());
        } else {
          inputs.push_back(g.constant(d.u));
          targets.push_back(d.u);
        }
      }
      double loss = 0.0;
      try {
        const auto r = model.summarizer.run(g, inputs, targets, config.teacher_forcing, rng, false);
        loss = r.loss.value()[0];
        if (std::isfinite(loss)) {
          g.backward(r.loss);
          adam_step(params, adam, lr);
        }
      } catch (const std::invalid_argument& e) {
        if (std::string(e.what()).find("NaN") == std::string::npos) throw;
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_summarizer: diverged at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches) + " (lr " + std::to_string(lr) + ")");
      }
      sum_loss += loss;
      ++batches;
    }
    if (config.train_encoder)
      for (Document& d : docs) d.u = encode_sentences(d.sentences, model.encoder);
    const double val = mean_loss(model, docs, monitor, config.batch_size);
    result.history.train_loss.push_back(sum_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
    result.history.validation_loss.push_back(val);
    result.history.learning_rate.push_back(lr);
    if (val < best) {
      best = val;
      best_values = snapshot(saved);
      result.history.best_epoch = static_cast<std::size_t>(epoch);
    }
  }
  restore(saved, best_values);
  round_to_float(saved);
  return result;
}

std::string visit_key(const std::string& patient_id, std::size_t visit_index) {
  return patient_id + ":" + std::to_string(visit_index);
}

SentenceVectors read_sentence_vectors(std::istream& in) {
  SentenceVectors out;
  std::string line;
  std::size_t lineno = 0, width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "sentence vectors: line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    if (!j.contains("visit_key") || !j.contains("vectors")) throw std::invalid_argument(where + ": needs visit_key and vectors");
    const auto rows = j.at("vectors").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw std::invalid_argument(where + ": no vectors");
    if (width == 0) width = rows.front().size();
    Tensor u = Tensor::zeros(rows.size(), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != width || width == 0) throw std::invalid_argument(where + ": inconsistent vector width");
      std::copy(rows[r].begin(), rows[r].end(), u.row(r).begin());
    }
    if (!out.emplace(j.at("visit_key").get<std::string>(), std::move(u)).second) {
      throw std::invalid_argument(where + ": duplicate visit_key");
    }
  }
  return out;
}

SentenceVectors read_sentence_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_sentence_vectors(in);
}

}  // namespace taper::text
