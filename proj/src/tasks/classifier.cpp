#include "taper/tasks/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "taper/numerics/checkpoint.hpp"
#include "taper/numerics/json_fields.hpp"
#include "taper/numerics/optim.hpp"

namespace taper::tasks {

namespace {

constexpr const char* kSection = "classifier";

bool is_binary(cohort::Task task) { return task == cohort::Task::readmission30 || task == cohort::Task::mortality; }

void check_labels(std::span<const int> labels, cohort::Task task) {
  for (int y : labels) {
    const bool ok = is_binary(task) ? (y == 0 || y == 1) : (y >= 1 && y <= cohort::kLosClasses);
    if (!ok) {
      throw std::invalid_argument("label " + std::to_string(y) + " is not valid for task " + std::string(cohort::to_string(task)));
    }
  }
}

}  // namespace

void ClassifierConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("classifier: lr0 must be positive");
  if (epochs < 0) throw std::invalid_argument("classifier: epochs must be >= 0");
  if (step_every <= 0) throw std::invalid_argument("classifier: step_every must be positive");
  if (!(step_factor > 0.0)) throw std::invalid_argument("classifier: step_factor must be positive");
  if (batch_size == 0) throw std::invalid_argument("classifier: batch_size must be positive");
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"lr0", lr0},       {"epochs", epochs},         {"step_factor", step_factor},
          {"step_every", step_every}, {"batch_size", batch_size}, {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  const std::string ctx = "classifier config";
  reject_unknown_keys(j, c.to_json(), ctx);
  read_field(j, "lr0", c.lr0, ctx);
  read_field(j, "epochs", c.epochs, ctx);
  read_field(j, "step_factor", c.step_factor, ctx);
  read_field(j, "step_every", c.step_every, ctx);
  read_field(j, "batch_size", c.batch_size, ctx);
  read_field(j, "seed", c.seed, ctx);
  c.validate();
  return c;
}

std::size_t output_width(cohort::Task task) {
  if (is_binary(task)) return 1;
  if (task == cohort::Task::los9) return cohort::kLosClasses;
  throw std::invalid_argument("task " + std::string(cohort::to_string(task)) + " has no classifier head");
}

ClassifierModel::ClassifierModel(std::size_t input_dim, cohort::Task task, std::uint64_t seed) : task_(task) {
  if (input_dim == 0) throw std::invalid_argument("classifier: input dimension must be positive");
  const std::size_t hidden = (input_dim + 1) / 2;
  const std::size_t out = output_width(task);
  Rng rng(derive_seed(seed, "classifier/init"));
  w1_ = Parameter("w1", Tensor::zeros(input_dim, hidden));
  init_fan_in_uniform(w1_, input_dim, rng);
  b1_ = Parameter("b1", Tensor::zeros(1, hidden));
  w2_ = Parameter("w2", Tensor::zeros(hidden, out));
  init_fan_in_uniform(w2_, hidden, rng);
  b2_ = Parameter("b2", Tensor::zeros(1, out));
}

ParameterRefs ClassifierModel::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

Var ClassifierModel::logits(Graph& g, Var z) {
  if (z.cols() != input_dim()) {
    throw std::invalid_argument("classifier: representation width " + std::to_string(z.cols()) + ", expected " +
                                std::to_string(input_dim()));
  }
  const Var h = relu(matmul(z, g.parameter(w1_)) + g.parameter(b1_));
  return matmul(h, g.parameter(w2_)) + g.parameter(b2_);
}

Var ClassifierModel::loss(Graph& g, const Tensor& z, std::span<const int> labels) {
  if (z.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("classifier: " + std::to_string(z.rows()) + " rows for " + std::to_string(labels.size()) + " labels");
  }
  check_labels(labels, task_);
  const Var out = logits(g, g.constant(z));
  const double n = static_cast<double>(labels.size());
  if (is_binary(task_)) {
    Tensor y = Tensor::zeros(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i];
    return scale(binary_cross_entropy(sigmoid(out), y), 1.0 / n);
  }
  std::vector<std::size_t> classes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) classes[i] = static_cast<std::size_t>(labels[i] - 1);
  return scale(softmax_cross_entropy(out, classes), 1.0 / n);
}

Tensor ClassifierModel::predict(const Tensor& z) const {
  auto& self = const_cast<ClassifierModel&>(*this);
  Graph g;
  const Var out = self.logits(g, g.constant(z));
  return (is_binary(task_) ? sigmoid(out) : softmax_rows(out)).value();
}

std::vector<double> ClassifierModel::predict(std::span<const double> z) const {
  const Tensor p = predict(Tensor::row_vector(z));
  return {p.data().begin(), p.data().end()};
}

double ClassifierModel::score(std::span<const double> z) const {
  if (!is_binary(task_)) throw std::invalid_argument("classifier: score is defined for binary tasks");
  return predict(z)[0];
}

int ClassifierModel::predicted_class(std::span<const double> z) const {
  const auto p = predict(z);
  if (is_binary(task_)) return p[0] >= 0.5 ? 1 : 0;
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
}

void ClassifierModel::save(const std::filesystem::path& path, const std::string& vocab_hash, const nlohmann::json& extra) const {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["task"] = cohort::to_string(task_);
  meta["input_dim"] = input_dim();
  save_checkpoint(path, kSection, vocab_hash, nlohmann::json::object(), const_cast<ClassifierModel&>(*this).parameters(), meta);
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path, const std::string& vocab_hash) {
  const Checkpoint ckp = load_checkpoint(path, kSection, vocab_hash);
  ClassifierModel model(ckp.extra.at("input_dim").get<std::size_t>(),
                        cohort::parse_task(ckp.extra.at("task").get<std::string>()), 0);
  ckp.load_into(model.parameters());
  return model;
}

nlohmann::json ClassifierModel::load_extra(const std::filesystem::path& path) { return load_checkpoint(path, kSection).extra; }

TrainedClassifier train_task(const Tensor& z, std::span<const int> labels, cohort::Task task, const ClassifierConfig& config) {
  config.validate();
  if (z.rows() != labels.size()) {
    throw std::invalid_argument("train_task: " + std::to_string(z.rows()) + " representations for " +
                                std::to_string(labels.size()) + " labels");
  }
  check_labels(labels, task);
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) {
    throw std::invalid_argument("train_task: training set for " + std::string(cohort::to_string(task)) +
                                " has a single class" + (classes.empty() ? "" : " (" + std::to_string(*classes.begin()) + ")"));
  }

  TrainedClassifier result{ClassifierModel(z.cols(), task, config.seed), {}};
  ClassifierModel& model = result.model;
  const ParameterRefs params = model.parameters();
  AdamState adam = AdamState::for_params(params);
  const LrSchedule schedule = StepDecay{config.lr0, config.step_factor, config.step_every};
  Rng rng(derive_seed(config.seed, "classifier/train"));
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - b);
      Tensor zb = Tensor::zeros(n, z.cols());
      std::vector<int> yb(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto src = z.row(order[b + i]);
        std::copy(src.begin(), src.end(), zb.row(i).begin());
        yb[i] = labels[order[b + i]];
      }
      Graph g;
      const Var loss = model.loss(g, zb, yb);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw std::runtime_error("train_task: diverged to loss " + std::to_string(value) + " at epoch " + std::to_string(epoch));
      }
      g.backward(loss);
      adam_step(params, adam, lr);
      total += value * static_cast<double>(n);
    }
    result.history.train_loss.push_back(total / static_cast<double>(labels.size()));
    result.history.learning_rate.push_back(lr);
  }
  round_to_float(params);
  return result;
}

Design make_design(const std::vector<rep::LabeledRepresentation>& reps, const std::set<rep::Segment>& ablate) {
  Design d;
  if (reps.empty()) return d;
  const std::size_t width = reps.front().rep.z.size();
  d.z = Tensor::zeros(reps.size(), width);
  d.labels.reserve(reps.size());
  for (std::size_t i = 0; i < reps.size(); ++i) {
    rep::PatientRepresentation r = reps[i].rep;
    if (r.z.size() != width) throw std::invalid_argument("make_design: representations have mixed widths");
    r.zero(ablate);
    std::copy(r.z.begin(), r.z.end(), d.z.row(i).begin());
    d.labels.push_back(reps[i].label.value);
  }
  return d;
}

std::vector<std::size_t> balance_for_los(std::span<const int> train_labels, std::span<const int> test_labels,
                                         std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> pool;
  for (int y : train_labels) pool[y];
  for (std::size_t i = 0; i < test_labels.size(); ++i) pool[test_labels[i]].push_back(i);
  std::string missing;
  std::size_t per_class = test_labels.size();
  for (const auto& [cls, idx] : pool) {
    if (idx.empty()) missing += (missing.empty() ? "" : ", ") + std::to_string(cls);
    per_class = std::min(per_class, idx.size());
  }
  if (!missing.empty()) throw std::invalid_argument("balance_for_los: test pool has no instance of class " + missing);
  if (pool.empty()) return {};
  Rng rng(derive_seed(seed, "los/balance"));
  std::vector<std::size_t> out;
  for (auto& [cls, idx] : pool) {
    rng.shuffle(std::span<std::size_t>(idx));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<long>(per_class));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace taper::tasks
