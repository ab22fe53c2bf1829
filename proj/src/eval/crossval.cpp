#include "taper/eval/crossval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace taper::eval {

void PipelineConfig::validate() const {
  code.validate();
  text.validate();
  classifier.validate();
  if (folds < 2) throw std::invalid_argument("eval: folds must be >= 2");
  if (recall_k.empty()) throw std::invalid_argument("eval: recall_k must list at least one cutoff");
  for (std::size_t k : recall_k)
    if (k == 0) throw std::invalid_argument("eval: recall_k cutoffs must be >= 1");
}

std::string variant_name(const std::set<rep::Segment>& ablate) {
  std::string name;
  for (rep::Segment s : {rep::Segment::code, rep::Segment::text, rep::Segment::demo}) {
    if (ablate.count(s)) continue;
    if (!name.empty()) name += '+';
    name += rep::to_string(s);
  }
  return name.empty() ? "none" : name;
}

Variant make_variant(const std::set<rep::Segment>& ablate, bool shuffle_labels) {
  return {variant_name(ablate) + (shuffle_labels ? ":shuffled" : ""), ablate, shuffle_labels};
}

FoldModels train_upstream(const cohort::Cohort& train, const cohort::CodeVocabulary& vocab, const PipelineConfig& config,
                          std::uint64_t seed) {
  code::CodeEmbedderConfig cc = config.code;
  cc.seed = derive_seed(seed, "code");
  text::SummarizerConfig tc = config.text;
  tc.seed = derive_seed(seed, "text");
  return {code::train_code_embedder(train, vocab, cc).model, text::train_summarizer(train, tc).model};
}

NamedMetrics evaluate_variant(const std::vector<rep::LabeledRepresentation>& train,
                              const std::vector<rep::LabeledRepresentation>& test, cohort::Task task,
                              const Variant& variant, const PipelineConfig& config, std::uint64_t seed) {
  tasks::Design tr = tasks::make_design(train, variant.ablate);
  const tasks::Design te = tasks::make_design(test, variant.ablate);
  if (tr.labels.empty() || te.labels.empty()) {
    throw std::invalid_argument("no labeled " + std::string(cohort::to_string(task)) + " visits in the " +
                                (tr.labels.empty() ? "training" : "test") + " patients");
  }
  if (variant.shuffle_labels) {
    Rng rng(derive_seed(seed, "shuffle"));
    rng.shuffle(std::span<int>(tr.labels));
  }
  tasks::ClassifierConfig cc = config.classifier;
  cc.seed = derive_seed(seed, "classifier");
  const auto model = tasks::train_task(tr.z, tr.labels, task, cc).model;
  const Tensor probs = model.predict(te.z);

  if (task == cohort::Task::los9) {
    std::vector<std::size_t> keep(te.labels.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    if (config.balance_los) keep = tasks::balance_for_los(tr.labels, te.labels, derive_seed(seed, "balance"));
    std::vector<std::size_t> predicted, truth;
    for (std::size_t i : keep) {
      const auto row = probs.row(i);
      predicted.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) + 1);
      truth.push_back(static_cast<std::size_t>(te.labels[i]));
    }
    return {{"top1_accuracy", top1_accuracy(predicted, truth)}};
  }
  const std::vector<double> scores(probs.data().begin(), probs.data().end());
  return {{"auc_roc", auc_roc(scores, te.labels)}, {"pr_auc", pr_auc(scores, te.labels)}};
}

NamedMetrics evaluate_code_prediction(const code::CodeEmbedderModel& model, const cohort::CodeVocabulary& vocab,
                                      const cohort::Cohort& test, std::span<const std::size_t> ks) {
  std::vector<cohort::CodeSystem> systems;
  for (auto s : {cohort::CodeSystem::diagnosis, cohort::CodeSystem::procedure, cohort::CodeSystem::medication}) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (vocab.system(i) == s) {
        systems.push_back(s);
        break;
      }
    }
  }
  // One accumulator per (k, system), with std::nullopt standing for all codes.
  std::vector<std::pair<std::optional<cohort::CodeSystem>, std::vector<RecallAccumulator>>> acc;
  acc.push_back({std::nullopt, {}});
  for (auto s : systems) acc.push_back({s, {}});
  for (auto& [_, per_k] : acc)
    for (std::size_t k : ks) per_k.emplace_back(k);

  for (const auto& p : test.patients) {
    if (p.visits.size() < 2) continue;
    const Tensor probs = model.predict(code::encode_history(p, vocab, p.visits.size()));
    for (std::size_t t = 0; t + 1 < p.visits.size(); ++t) {
      const auto row = probs.row(t);
      const auto next = vocab.visit_indices(p.visits[t + 1]);
      for (auto& [system, per_k] : acc) {
        std::vector<std::size_t> ranked, truth;
        for (std::size_t i = 0; i < vocab.size(); ++i)
          if (!system || vocab.system(i) == *system) ranked.push_back(i);
        std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        for (std::size_t i : next)
          if (!system || vocab.system(i) == *system) truth.push_back(i);
        for (auto& a : per_k) a.add(ranked, truth);
      }
    }
  }
  NamedMetrics out;
  for (const auto& [system, per_k] : acc) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      std::string name = "recall@" + std::to_string(ks[i]);
      if (system) name += "/" + std::string(cohort::to_string(*system));
      out.emplace_back(name, per_k[i].mean());
    }
  }
  return out;
}

const MetricReport& CrossvalResult::find(const std::string& variant, const std::string& metric) const {
  const std::string name = variant.empty() ? metric : variant + "/" + metric;
  for (const auto& r : reports)
    if (r.metric == name) return r;
  throw std::invalid_argument("no metric '" + name + "' in the report");
}

void assert_disjoint(const cohort::Fold& train, const cohort::Fold& test, std::size_t fold) {
  const std::unordered_set<std::string> seen(train.begin(), train.end());
  for (const auto& id : test) {
    if (seen.count(id)) throw std::logic_error("fold " + std::to_string(fold) + ": patient " + id + " is in both train and test");
  }
}

CrossvalResult crossval(const cohort::Cohort& cohort, const cohort::CodeVocabulary& vocab,
                        const cohort::DemographicsEncoder& demographics, cohort::Task task,
                        const std::vector<Variant>& variants, const PipelineConfig& config,
                        const text::SentenceVectors* sentence_vectors,
                        const std::function<void(const std::string&)>& progress) {
  config.validate();
  if (task != cohort::Task::code_prediction && variants.empty()) throw std::invalid_argument("crossval: no variants to evaluate");
  CrossvalResult result;
  result.folds = cohort::patient_kfold_split(cohort, config.folds, derive_seed(config.seed, "folds"));

  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  const auto record = [&](const std::string& name, double v) {
    if (!values.count(name)) order.push_back(name);
    values[name].push_back(v);
  };

  for (std::size_t f = 0; f < result.folds.size(); ++f) {
    const std::string where = "crossval fold " + std::to_string(f + 1) + " of " + std::to_string(result.folds.size()) + ": ";
    try {
      const cohort::Fold train_ids = cohort::train_ids(result.folds, f);
      assert_disjoint(train_ids, result.folds[f], f + 1);
      const cohort::Cohort train = cohort.subset(train_ids);
      const cohort::Cohort test = cohort.subset(result.folds[f]);
      const std::uint64_t seed = derive_seed(config.seed, "fold/" + std::to_string(f));

      if (task == cohort::Task::code_prediction) {
        code::CodeEmbedderConfig cc = config.code;
        cc.seed = derive_seed(seed, "code");
        const auto model = code::train_code_embedder(train, vocab, cc).model;
        for (const auto& [name, v] : evaluate_code_prediction(model, vocab, test, config.recall_k)) record(name, v);
      } else {
        const FoldModels models = train_upstream(train, vocab, config, seed);
        const rep::UpstreamModels up{&models.code, &models.text, &vocab, &demographics, sentence_vectors};
        const auto train_reps = rep::represent_labels(up, train, cohort::extract_labels(train, task), task);
        const auto test_reps = rep::represent_labels(up, test, cohort::extract_labels(test, task), task);
        for (const Variant& variant : variants) {
          for (const auto& [name, v] : evaluate_variant(train_reps, test_reps, task, variant, config, seed)) {
            record(variant.name + "/" + name, v);
          }
        }
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    } catch (const std::logic_error& e) {
      throw std::logic_error(where + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(where + e.what());
    }
    if (progress) progress("fold " + std::to_string(f + 1) + "/" + std::to_string(result.folds.size()) + " done");
  }

  for (const auto& name : order) {
    std::optional<std::size_t> k;
    if (name.rfind("recall@", 0) == 0) k = std::stoul(name.substr(7));
    result.reports.push_back(MetricReport::from_folds(name, values[name], k));
  }
  return result;
}

}  // namespace taper::eval
