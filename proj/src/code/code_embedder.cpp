#include "taper/code/code_embedder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "taper/numerics/checkpoint.hpp"
#include "taper/numerics/json_fields.hpp"

namespace taper::code {

namespace {

constexpr const char* kSection = "code";

void expect_shape(const Var& v, std::size_t rows, std::size_t cols, const char* what) {
  if (v.rows() != rows || v.cols() != cols) {
    throw std::logic_error(std::string("code embedder: ") + what + " has shape " + shape_string(v.shape()) +
                           ", expected [" + std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

Parameter make_param(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  Parameter p(name, Tensor::zeros(rows, cols));
  init_fan_in_uniform(p, rows, rng);
  return p;
}

Parameter make_const(const std::string& name, std::size_t cols, double v) {
  return Parameter(name, Tensor({1, cols}, v));
}

std::vector<std::size_t> lengths_of(const VisitSequenceBatch& batch) {
  std::vector<std::size_t> out;
  out.reserve(batch.size());
  for (const Tensor& s : batch.sequences) out.push_back(s.rows());
  return out;
}

}  // namespace

void CodeEmbedderConfig::validate() const {
  if (d_code == 0 || n_head == 0 || d_head == 0 || n_layers == 0) {
    throw std::invalid_argument("code embedder: d_code, n_layers, n_head and d_head must be positive");
  }
  if (window == 0) throw std::invalid_argument("code embedder: window must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("code embedder: batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("code embedder: epochs must be >= 0");
  if (cosine_period <= 0) throw std::invalid_argument("code embedder: cosine_period must be positive");
  if (!(lr0 > 0.0)) throw std::invalid_argument("code embedder: lr0 must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("code embedder: validation_fraction must be in [0, 1)");
  }
}

nlohmann::json CodeEmbedderConfig::to_json() const {
  return {{"d_code", d_code},
          {"n_layers", n_layers},
          {"n_head", n_head},
          {"d_head", d_head},
          {"d_ff", d_ff},
          {"window", window},
          {"lr0", lr0},
          {"cosine_period", cosine_period},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"validation_fraction", validation_fraction},
          {"softmax_output", softmax_output},
          {"seed", seed}};
}

CodeEmbedderConfig CodeEmbedderConfig::from_json(const nlohmann::json& j) {
  CodeEmbedderConfig c;
  const std::string ctx = "code_embedder";
  reject_unknown_keys(j, c.to_json(), ctx);
  read_field(j, "d_code", c.d_code, ctx);
  read_field(j, "n_layers", c.n_layers, ctx);
  read_field(j, "n_head", c.n_head, ctx);
  read_field(j, "d_head", c.d_head, ctx);
  read_field(j, "d_ff", c.d_ff, ctx);
  read_field(j, "window", c.window, ctx);
  read_field(j, "lr0", c.lr0, ctx);
  read_field(j, "cosine_period", c.cosine_period, ctx);
  read_field(j, "epochs", c.epochs, ctx);
  read_field(j, "batch_size", c.batch_size, ctx);
  read_field(j, "validation_fraction", c.validation_fraction, ctx);
  read_field(j, "softmax_output", c.softmax_output, ctx);
  read_field(j, "seed", c.seed, ctx);
  c.validate();
  return c;
}

std::size_t VisitSequenceBatch::max_length() const {
  std::size_t m = 0;
  for (const Tensor& s : sequences) m = std::max(m, s.rows());
  return m;
}

std::size_t VisitSequenceBatch::total_visits() const {
  std::size_t n = 0;
  for (const Tensor& s : sequences) n += s.rows();
  return n;
}

Mask VisitSequenceBatch::padding_mask() const {
  const std::size_t t = max_length();
  Mask m{{size(), t}, std::vector<std::uint8_t>(size() * t, 0)};
  for (std::size_t b = 0; b < size(); ++b)
    for (std::size_t i = sequences[b].rows(); i < t; ++i) m.bits[b * t + i] = 1;
  return m;
}

Tensor VisitSequenceBatch::stacked() const {
  if (sequences.empty()) throw std::invalid_argument("visit batch is empty");
  const std::size_t cols = sequences.front().cols();
  Tensor out = Tensor::zeros(total_visits(), cols);
  std::size_t r = 0;
  for (const Tensor& s : sequences) {
    if (s.cols() != cols) throw std::invalid_argument("visit batch: sequences disagree on vocabulary size");
    std::copy(s.data().begin(), s.data().end(), out.data().begin() + r * cols);
    r += s.rows();
  }
  return out;
}

VisitSequenceBatch VisitSequenceBatch::from_patients(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                                                     const std::vector<std::size_t>& patients) {
  VisitSequenceBatch batch;
  for (std::size_t p : patients) {
    const auto& record = cohort.patients.at(p);
    batch.sequences.push_back(encode_history(record, vocab, record.visits.size()));
    std::vector<std::int64_t> times;
    for (const auto& v : record.visits) times.push_back(v.admit_time);
    batch.times.push_back(std::move(times));
  }
  return batch;
}

Tensor encode_history(const cohort::PatientRecord& record, const cohort::CodeVocabulary& vocab, std::size_t visits) {
  if (visits == 0) throw std::invalid_argument("code history for " + record.patient_id + " is empty");
  if (visits > record.visits.size()) {
    throw std::invalid_argument("patient " + record.patient_id + " has " + std::to_string(record.visits.size()) +
                                " visits, asked for " + std::to_string(visits));
  }
  Tensor out = Tensor::zeros(visits, vocab.size());
  for (std::size_t t = 0; t < visits; ++t)
    for (std::size_t i : vocab.visit_indices(record.visits[t])) out(t, i) = 1.0;
  return out;
}

Tensor positional_encoding(std::size_t length, std::size_t d) {
  Tensor pe = Tensor::zeros(length, d);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t k = 0; k < d; ++k) {
      const double freq = std::pow(10000.0, static_cast<double>(k - k % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(t) / freq;
      pe(t, k) = k % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

CodeEmbedderModel::CodeEmbedderModel(const CodeEmbedderConfig& config, std::size_t vocab_size)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size == 0) throw std::invalid_argument("code embedder: empty vocabulary");
  Rng rng(derive_seed(config_.seed, "code/init"));
  const std::size_t d = config_.d_code, hd = config_.n_head * config_.d_head, ff = config_.ff_width();
  embedding_ = Parameter("embedding", Tensor::zeros(vocab_size, d));
  init_fan_in_uniform(embedding_, d, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    layers_.push_back(Layer{make_param(p + "wq", d, hd, rng), make_param(p + "wk", d, hd, rng),
                            make_param(p + "wv", d, hd, rng), make_param(p + "wo", hd, d, rng),
                            make_const(p + "bo", d, 0.0), make_const(p + "ln1_gain", d, 1.0),
                            make_const(p + "ln1_bias", d, 0.0), make_param(p + "w1", d, ff, rng),
                            make_const(p + "b1", ff, 0.0), make_param(p + "w2", ff, d, rng),
                            make_const(p + "b2", d, 0.0), make_const(p + "ln2_gain", d, 1.0),
                            make_const(p + "ln2_bias", d, 0.0)});
  }
  out_weight_ = make_param("out_weight", d, vocab_size, rng);
  out_bias_ = make_const("out_bias", vocab_size, 0.0);
}

ParameterRefs CodeEmbedderModel::parameters() {
  ParameterRefs refs{&embedding_};
  for (Layer& l : layers_) {
    for (Parameter* p : {&l.wq, &l.wk, &l.wv, &l.wo, &l.bo, &l.ln1_gain, &l.ln1_bias, &l.w1, &l.b1, &l.w2, &l.b2,
                         &l.ln2_gain, &l.ln2_bias})
      refs.push_back(p);
  }
  refs.push_back(&out_weight_);
  refs.push_back(&out_bias_);
  return refs;
}

Var CodeEmbedderModel::embed(Graph& g, Var codes) {
  if (codes.cols() != vocab_size_) {
    throw std::invalid_argument("embed: visit vector has " + std::to_string(codes.cols()) + " entries, vocabulary has " +
                                std::to_string(vocab_size_));
  }
  return matmul(codes, g.parameter(embedding_));
}

Var CodeEmbedderModel::attention_layer(Graph& g, std::size_t layer, Var x, std::span<const std::size_t> lengths) {
  Layer& L = layers_.at(layer);
  const std::size_t n = x.rows(), d = config_.d_code, dh = config_.d_head, hd = config_.n_head * dh;
  expect_shape(x, n, d, "layer input");
  const Var q = matmul(x, g.parameter(L.wq));
  const Var k = matmul(x, g.parameter(L.wk));
  const Var v = matmul(x, g.parameter(L.wv));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Var> per_sequence;
  per_sequence.reserve(lengths.size());
  std::size_t offset = 0;
  for (std::size_t t : lengths) {
    const Mask causal = Mask::causal(t);
    std::vector<Var> heads;
    heads.reserve(config_.n_head);
    for (std::size_t h = 0; h < config_.n_head; ++h) {
      const std::size_t c0 = h * dh, c1 = c0 + dh;
      const Var qh = slice(q, offset, offset + t, c0, c1);
      const Var kh = slice(k, offset, offset + t, c0, c1);
      const Var vh = slice(v, offset, offset + t, c0, c1);
      const Var scores = masked_fill(scale(matmul(qh, transpose(kh)), inv_scale), causal);
      heads.push_back(matmul(softmax_rows(scores), vh));
    }
    per_sequence.push_back(concat(heads, 1));
    offset += t;
  }
  const Var joined = concat(per_sequence, 0);
  expect_shape(joined, n, hd, "concatenated heads");

  const Var attended = add(matmul(joined, g.parameter(L.wo)), g.parameter(L.bo));
  const Var x1 = layer_norm(add(x, attended), g.parameter(L.ln1_gain), g.parameter(L.ln1_bias));
  const Var inner = relu(add(matmul(x1, g.parameter(L.w1)), g.parameter(L.b1)));
  expect_shape(inner, n, config_.ff_width(), "feed-forward inner");
  const Var ff = add(matmul(inner, g.parameter(L.w2)), g.parameter(L.b2));
  const Var out = layer_norm(add(x1, ff), g.parameter(L.ln2_gain), g.parameter(L.ln2_bias));
  expect_shape(out, n, d, "layer output");
  return out;
}

CodeEmbedderModel::Output CodeEmbedderModel::forward(Graph& g, const VisitSequenceBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch.sequences[b].rows() == 0) throw std::invalid_argument("forward: sequence " + std::to_string(b) + " has no visits");
  }
  const std::vector<std::size_t> lengths = lengths_of(batch);
  const Tensor codes = batch.stacked();
  const std::size_t n = codes.rows(), d = config_.d_code;

  Tensor pe_stacked = Tensor::zeros(n, d);
  const Tensor pe = positional_encoding(batch.max_length(), d);
  std::size_t r = 0;
  for (std::size_t t : lengths) {
    std::copy(pe.data().begin(), pe.data().begin() + t * d, pe_stacked.data().begin() + r * d);
    r += t;
  }

  Var x = add(embed(g, g.constant(codes)), g.constant(std::move(pe_stacked)));
  for (std::size_t l = 0; l < layers_.size(); ++l) x = attention_layer(g, l, x, lengths);
  const Var logits = add(matmul(x, g.parameter(out_weight_)), g.parameter(out_bias_));
  expect_shape(logits, n, vocab_size_, "logits");
  return {x, config_.softmax_output ? softmax_rows(logits) : sigmoid(logits)};
}

Tensor CodeEmbedderModel::represent(const Tensor& sequence) const {
  // Binding parameters to a graph only reads them, so a frozen model can be shared.
  auto& self = const_cast<CodeEmbedderModel&>(*this);
  Graph g;
  return self.forward(g, VisitSequenceBatch{{sequence}, {}}).representations.value();
}

Tensor CodeEmbedderModel::predict(const Tensor& sequence) const {
  auto& self = const_cast<CodeEmbedderModel&>(*this);
  Graph g;
  return self.forward(g, VisitSequenceBatch{{sequence}, {}}).probabilities.value();
}

void CodeEmbedderModel::save(const std::filesystem::path& path, const std::string& vocab_hash,
                             const nlohmann::json& extra) const {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["vocab_size"] = vocab_size_;
  save_checkpoint(path, kSection, vocab_hash, config_.to_json(), const_cast<CodeEmbedderModel&>(*this).parameters(), meta);
}

CodeEmbedderModel CodeEmbedderModel::load(const std::filesystem::path& path, const std::string& vocab_hash) {
  const Checkpoint ckp = load_checkpoint(path, kSection, vocab_hash);
  CodeEmbedderModel model(CodeEmbedderConfig::from_json(ckp.config), ckp.extra.at("vocab_size").get<std::size_t>());
  ckp.load_into(model.parameters());
  return model;
}

Var skipgram_loss(Var probs, const Tensor& codes, std::span<const std::size_t> lengths, std::size_t window, double eps) {
  if (window == 0) throw std::invalid_argument("skipgram_loss: window must be >= 1");
  if (probs.shape() != codes.shape()) {
    throw std::invalid_argument("skipgram_loss: shape mismatch " + shape_string(probs.shape()) + " vs " +
                                shape_string(codes.shape()));
  }
  const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (total != codes.rows()) {
    throw std::invalid_argument("skipgram_loss: lengths cover " + std::to_string(total) + " rows, inputs have " +
                                std::to_string(codes.rows()));
  }
  std::size_t contributing = 0;
  for (std::size_t t : lengths) {
    if (t == 0) throw std::invalid_argument("skipgram_loss: empty sequence");
    contributing += t >= 2;
  }
  if (contributing == 0) throw std::invalid_argument("skipgram_loss: no sequence has a context visit");

  const std::size_t c = codes.cols();
  const auto w = static_cast<std::ptrdiff_t>(window);
  Tensor targets = Tensor::zeros(codes.rows(), c);
  std::vector<double> weights(codes.rows(), 0.0);
  std::size_t offset = 0;
  for (std::size_t len : lengths) {
    const auto T = static_cast<std::ptrdiff_t>(len);
    std::size_t pairs = 0;
    for (std::ptrdiff_t t = 0; t < T; ++t) pairs += static_cast<std::size_t>(std::min(T - 1, t + w) - std::max<std::ptrdiff_t>(0, t - w));
    for (std::ptrdiff_t t = 0; t < T && len >= 2; ++t) {
      std::size_t n_t = 0;
      auto row = targets.row(offset + static_cast<std::size_t>(t));
      for (std::ptrdiff_t j = -w; j <= w; ++j) {
        const std::ptrdiff_t s = t + j;
        if (j == 0 || s < 0 || s >= T) continue;
        ++n_t;
        const auto src = codes.row(offset + static_cast<std::size_t>(s));
        for (std::size_t k = 0; k < c; ++k) row[k] += src[k];
      }
      for (double& y : row) y /= static_cast<double>(n_t);
      weights[offset + static_cast<std::size_t>(t)] =
          static_cast<double>(n_t) / (static_cast<double>(pairs) * static_cast<double>(contributing));
    }
    offset += len;
  }
  return binary_cross_entropy(probs, targets, eps, weights);
}

namespace {

double batch_loss(CodeEmbedderModel& model, const std::vector<Tensor>& sequences, std::span<const std::size_t> idx,
                  bool train, AdamState* adam, double lr) {
  VisitSequenceBatch batch;
  for (std::size_t i : idx) batch.sequences.push_back(sequences[i]);
  const std::vector<std::size_t> lengths = lengths_of(batch);
  Graph g;
  const auto out = model.forward(g, batch);
  const Var loss = skipgram_loss(out.probabilities, batch.stacked(), lengths, model.config().window);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) return value;
  if (train) {
    const ParameterRefs params = model.parameters();
    g.backward(loss);
    adam_step(params, *adam, lr);
  }
  return value;
}

}  // namespace

TrainedCodeEmbedder train_code_embedder(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                                        const CodeEmbedderConfig& config) {
  config.validate();
  std::vector<std::size_t> eligible;
  for (std::size_t p = 0; p < cohort.patients.size(); ++p)
    if (cohort.patients[p].visits.size() >= 2) eligible.push_back(p);
  if (eligible.empty()) throw std::invalid_argument("train_code_embedder: no patient has two or more visits");

  Rng rng(derive_seed(config.seed, "code/train"));
  rng.shuffle(std::span<std::size_t>(eligible));
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(eligible.size())));
  if (n_val >= eligible.size()) n_val = eligible.size() - 1;

  std::vector<Tensor> sequences;
  for (std::size_t p : eligible) sequences.push_back(encode_history(cohort.patients[p], vocab, cohort.patients[p].visits.size()));
  std::vector<std::size_t> val_idx(n_val), train_idx(eligible.size() - n_val);
  std::iota(val_idx.begin(), val_idx.end(), std::size_t{0});
  std::iota(train_idx.begin(), train_idx.end(), n_val);

  TrainedCodeEmbedder result{CodeEmbedderModel(config, vocab.size()), {}};
  CodeEmbedderModel& model = result.model;
  const ParameterRefs params = model.parameters();
  AdamState adam = AdamState::for_params(params);
  const LrSchedule schedule = CosineAnnealing{config.cosine_period, config.lr0, 0.0};

  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = snapshot(params);
  const std::size_t bs = config.batch_size;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    rng.shuffle(std::span<std::size_t>(train_idx));
    double train_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < train_idx.size(); b += bs) {
      const std::span<const std::size_t> idx(train_idx.data() + b, std::min(bs, train_idx.size() - b));
      const auto where = [&] {
        return " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) + " (lr " +
               std::to_string(lr) + ")";
      };
      double loss = 0.0;
      try {
        loss = batch_loss(model, sequences, idx, true, &adam, lr);
      } catch (const std::invalid_argument& e) {
        if (std::string(e.what()).find("NaN") == std::string::npos) throw;
        throw std::runtime_error("train_code_embedder: diverged" + where() + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_code_embedder: diverged to loss " + std::to_string(loss) + where());
      }
      train_sum += loss;
      ++batches;
    }
    const double train_loss = train_sum / static_cast<double>(batches);

    double val_loss = train_loss;
    if (!val_idx.empty()) {
      double weighted = 0.0;
      for (std::size_t b = 0; b < val_idx.size(); b += bs) {
        const std::size_t n = std::min(bs, val_idx.size() - b);
        weighted += batch_loss(model, sequences, std::span<const std::size_t>(val_idx.data() + b, n), false, nullptr, 0.0) *
                    static_cast<double>(n);
      }
      val_loss = weighted / static_cast<double>(val_idx.size());
    }
    result.history.train_loss.push_back(train_loss);
    result.history.validation_loss.push_back(val_loss);
    result.history.learning_rate.push_back(lr);
    if (val_loss < best) {
      best = val_loss;
      best_values = snapshot(params);
      result.history.best_epoch = static_cast<std::size_t>(epoch);
    }
  }
  restore(params, best_values);
  round_to_float(params);
  return result;
}

std::vector<std::size_t> predict_next_codes(const CodeEmbedderModel& model, const Tensor& history,
                                            const cohort::CodeVocabulary* vocab, std::optional<cohort::CodeSystem> system) {
  if (history.rows() == 0) throw std::invalid_argument("predict_next_codes: empty history");
  if (system && !vocab) throw std::invalid_argument("predict_next_codes: filtering by system needs the vocabulary");
  const Tensor probs = model.predict(history);
  const auto last = probs.row(probs.rows() - 1);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < model.vocab_size(); ++i)
    if (!system || vocab->system(i) == *system) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return last[a] > last[b]; });
  return order;
}

std::vector<std::size_t> frequency_ranking(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                                           std::optional<cohort::CodeSystem> system) {
  std::vector<std::size_t> counts(vocab.size(), 0);
  for (const auto& p : cohort.patients)
    for (const auto& v : p.visits)
      for (std::size_t i : vocab.visit_indices(v)) ++counts[i];
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (!system || vocab.system(i) == *system) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  return order;
}

}  // namespace taper::code
