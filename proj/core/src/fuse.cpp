#include "enseval/fuse.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "enseval/util.hpp"

namespace enseval {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

std::vector<ModelKey> by_priority(const Corpus& corpus, std::vector<ModelKey> subset) {
  return corpus.priority.sorted(std::move(subset));
}

EnsembleChoice missing_choice(const std::string& example_id, const ModelKey& nominal,
                              Method method) {
  EnsembleChoice choice;
  choice.example_id = example_id;
  choice.chosen = nominal;
  choice.method = method;
  choice.detail["missing"] = "true";
  return choice;
}

double pick_prob(const PredictionRecord& rec, bool use_normalized) {
  SequenceScore s = normalize_sequence_prob(rec.seq_logprob, rec.token_count);
  return use_normalized ? s.norm_prob : s.raw_prob;
}

}  // namespace

SequenceScore normalize_sequence_prob(double raw_logprob, int token_count) {
  if (raw_logprob > 0.0) {
    throw FuseError("sequence log-probability must be <= 0, got " + format_double(raw_logprob));
  }
  if (token_count < 1) {
    throw FuseError("token count must be >= 1, got " + std::to_string(token_count));
  }
  SequenceScore s;
  s.raw_logprob = raw_logprob;
  s.token_count = token_count;
  s.raw_prob = std::exp(raw_logprob);
  s.norm_prob = std::exp(raw_logprob / static_cast<double>(token_count));
  return s;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::oracle: return "oracle";
    case Method::majority: return "majority";
    case Method::max_prob: return "max_prob";
    case Method::weighted_vote: return "weighted_vote";
    case Method::meta_classifier: return "meta_classifier";
    case Method::cascade: return "cascade";
    case Method::two_step: return "two_step";
    case Method::choose_best: return "choose_best";
  }
  return "oracle";
}

std::optional<Method> method_from_string(std::string_view s) {
  for (Method m : {Method::oracle, Method::majority, Method::max_prob, Method::weighted_vote,
                   Method::meta_classifier, Method::cascade, Method::two_step,
                   Method::choose_best}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::string choice_to_jsonl_line(const EnsembleChoice& choice) {
  nlohmann::ordered_json j;
  j["example_id"] = choice.example_id;
  j["model_id"] = choice.chosen.model_id;
  j["augmentation"] = std::string(to_string(choice.chosen.augmentation));
  j["answer"] = choice.answer;
  j["method"] = std::string(to_string(choice.method));
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
  for (const auto& [k, v] : choice.detail) detail[k] = v;
  j["detail"] = detail;
  return j.dump();
}

SelectionResult oracle_select(const Corpus& corpus, const std::vector<ModelKey>& subset,
                              const EquivalenceOracle& oracle, std::uint64_t seed) {
  if (subset.empty()) throw FuseError("oracle_select requires a non-empty model subset");
  std::vector<ModelKey> ordered = by_priority(corpus, subset);
  Rng rng(seed);
  SelectionResult result;
  std::size_t hits = 0;
  for (const auto& id : corpus.example_ids()) {
    const GoldRecord& gold = corpus.gold.at(id);
    const PredictionRecord* first_correct = nullptr;
    std::vector<const PredictionRecord*> present;
    for (const auto& key : ordered) {
      const PredictionRecord* rec = corpus.find(id, key);
      if (!rec) continue;
      present.push_back(rec);
      if (!first_correct && oracle.is_correct(rec->answer, gold.gold_answers)) {
        first_correct = rec;
      }
    }
    EnsembleChoice choice;
    choice.example_id = id;
    choice.method = Method::oracle;
    if (first_correct) {
      ++hits;
      choice.chosen = first_correct->key();
      choice.answer = first_correct->answer;
      choice.detail["correct"] = "true";
    } else if (!present.empty()) {
      const PredictionRecord* picked = present[rng.index(present.size())];
      choice.chosen = picked->key();
      choice.answer = picked->answer;
      choice.detail["random_fallback"] = "true";
    } else {
      choice = missing_choice(id, ordered.front(), Method::oracle);
    }
    result.choices.push_back(std::move(choice));
  }
  result.n = result.choices.size();
  result.accuracy = result.n == 0 ? 0.0 : static_cast<double>(hits) / result.n;
  return result;
}

SelectionResult majority_vote(const Corpus& corpus, const std::vector<ModelKey>& subset,
                              const EquivalenceOracle& oracle) {
  if (subset.empty()) throw FuseError("majority_vote requires a non-empty model subset");
  std::vector<ModelKey> ordered = by_priority(corpus, subset);
  std::vector<EnsembleChoice> choices;
  for (const auto& id : corpus.example_ids()) {
    std::vector<std::pair<ModelKey, std::string>> answers;
    for (const auto& key : ordered) {
      if (const PredictionRecord* rec = corpus.find(id, key)) {
        answers.emplace_back(key, rec->answer);
      }
    }
    ClusterResult clustered = cluster_answers(answers, oracle);
    EnsembleChoice choice;
    choice.example_id = id;
    choice.method = Method::majority;
    if (clustered.clusters.empty()) {
      choice.chosen = ordered.front();
      choice.detail["all_empty"] = "true";
    } else {
      const AnswerCluster* best = &clustered.clusters.front();
      for (const auto& cluster : clustered.clusters) {
        if (cluster.members.size() > best->members.size()) best = &cluster;
      }
      choice.chosen = best->founder;
      choice.answer = best->representative;
      choice.detail["votes"] = std::to_string(best->members.size());
    }
    choices.push_back(std::move(choice));
  }
  return score_choices(corpus, std::move(choices), oracle);
}

std::vector<EnsembleChoice> max_prob_select(const Corpus& corpus,
                                            const std::vector<ModelKey>& subset,
                                            bool use_normalized) {
  if (subset.empty()) throw FuseError("max_prob_select requires a non-empty model subset");
  std::vector<ModelKey> ordered = by_priority(corpus, subset);
  std::vector<EnsembleChoice> choices;
  for (const auto& id : corpus.example_ids()) {
    const PredictionRecord* best = nullptr;
    double best_prob = -1.0;
    for (const auto& key : ordered) {
      const PredictionRecord* rec = corpus.find(id, key);
      if (!rec) continue;
      double prob = pick_prob(*rec, use_normalized);
      if (prob > best_prob) {  // strict: ties keep the higher-priority model
        best = rec;
        best_prob = prob;
      }
    }
    if (!best) {
      choices.push_back(missing_choice(id, ordered.front(), Method::max_prob));
      continue;
    }
    EnsembleChoice choice;
    choice.example_id = id;
    choice.method = Method::max_prob;
    choice.chosen = best->key();
    choice.answer = best->answer;
    choice.detail["prob"] = format_double(best_prob);
    choices.push_back(std::move(choice));
  }
  return choices;
}

std::vector<EnsembleChoice> weighted_vote(const Corpus& corpus,
                                          const std::vector<ModelKey>& subset,
                                          const EquivalenceOracle& oracle, bool use_normalized) {
  if (subset.empty()) throw FuseError("weighted_vote requires a non-empty model subset");
  std::vector<ModelKey> ordered = by_priority(corpus, subset);
  std::vector<EnsembleChoice> choices;
  for (const auto& id : corpus.example_ids()) {
    std::vector<std::pair<ModelKey, std::string>> answers;
    std::map<ModelKey, double> probs;
    for (const auto& key : ordered) {
      if (const PredictionRecord* rec = corpus.find(id, key)) {
        answers.emplace_back(key, rec->answer);
        probs[key] = pick_prob(*rec, use_normalized);
      }
    }
    ClusterResult clustered = cluster_answers(answers, oracle);
    EnsembleChoice choice;
    choice.example_id = id;
    choice.method = Method::weighted_vote;
    if (clustered.clusters.empty()) {
      choice.chosen = ordered.front();
      choice.detail["all_empty"] = "true";
    } else {
      const AnswerCluster* best = nullptr;
      double best_score = -1.0;
      for (const auto& cluster : clustered.clusters) {
        double sum = 0.0;
        for (const auto& member : cluster.members) sum += probs.at(member);
        double score = sum / static_cast<double>(cluster.members.size());
        if (score > best_score) {  // strict: ties keep the earliest-founded cluster
          best = &cluster;
          best_score = score;
        }
      }
      choice.chosen = best->founder;
      choice.answer = best->representative;
      choice.detail["cluster_score"] = format_double(best_score);
    }
    choices.push_back(std::move(choice));
  }
  return choices;
}

SelectionResult score_choices(const Corpus& corpus, std::vector<EnsembleChoice> choices,
                              const EquivalenceOracle& oracle) {
  SelectionResult result;
  result.choices = std::move(choices);
  std::size_t hits = 0;
  for (const auto& choice : result.choices) {
    auto it = corpus.gold.find(choice.example_id);
    if (it == corpus.gold.end()) continue;
    ++result.n;
    if (oracle.is_correct(choice.answer, it->second.gold_answers)) ++hits;
  }
  result.accuracy = result.n == 0 ? 0.0 : static_cast<double>(hits) / result.n;
  return result;
}

std::size_t FeatureSpec::dimension(std::size_t num_classes) const {
  std::size_t d = num_classes;
  if (zscore) d += num_classes;
  if (sqrt) d += num_classes;
  if (power) d += num_classes;
  if (pairwise_products) d += num_classes * (num_classes - 1) / 2;
  if (missing_mask) d += num_classes;
  return d;
}

std::vector<double> build_features(const std::vector<std::optional<SequenceScore>>& scores,
                                   const FeatureSpec& spec) {
  std::size_t c = scores.size();
  std::vector<double> base(c, 0.0);
  std::vector<double> mask(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    if (scores[i]) {
      base[i] = scores[i]->norm_prob;
    } else {
      mask[i] = 1.0;
    }
  }
  std::vector<double> out = base;
  if (spec.zscore) {
    if (spec.z_mean.size() != c || spec.z_std.size() != c) {
      throw FuseError("z-score features requested without fitted statistics");
    }
    for (std::size_t i = 0; i < c; ++i) {
      double sd = spec.z_std[i];
      out.push_back(sd > 0.0 ? (base[i] - spec.z_mean[i]) / sd : 0.0);
    }
  }
  if (spec.sqrt) {
    for (std::size_t i = 0; i < c; ++i) out.push_back(std::sqrt(base[i]));
  }
  if (spec.power) {
    for (std::size_t i = 0; i < c; ++i) out.push_back(std::pow(base[i], *spec.power));
  }
  if (spec.pairwise_products) {
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = i + 1; j < c; ++j) out.push_back(base[i] * base[j]);
    }
  }
  if (spec.missing_mask) {
    for (std::size_t i = 0; i < c; ++i) out.push_back(mask[i]);
  }
  return out;
}

double MetaClassifier::class_score(std::size_t class_index,
                                   const std::vector<double>& features) const {
  const std::vector<double>& w = weights.at(class_index);
  double z = w.back();  // bias
  for (std::size_t i = 0; i < features.size(); ++i) z += w[i] * features[i];
  return sigmoid(z);
}

double ovr_loss(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                const std::vector<double>& weights, double l2) {
  std::size_t n = features.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = weights.back();
    for (std::size_t j = 0; j < features[i].size(); ++j) z += weights[j] * features[i][j];
    // -log p(y|x) = softplus(z) - y*z
    loss += softplus(z) - (labels[i] ? z : 0.0);
  }
  loss /= static_cast<double>(n);
  double reg = 0.0;
  for (std::size_t j = 0; j + 1 < weights.size(); ++j) reg += weights[j] * weights[j];
  return loss + 0.5 * l2 * reg;
}

std::vector<double> ovr_gradient(const std::vector<std::vector<double>>& features,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& weights, double l2) {
  std::size_t n = features.size();
  std::vector<double> grad(weights.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double z = weights.back();
    for (std::size_t j = 0; j < features[i].size(); ++j) z += weights[j] * features[i][j];
    double err = sigmoid(z) - static_cast<double>(labels[i]);
    for (std::size_t j = 0; j < features[i].size(); ++j) grad[j] += err * features[i][j];
    grad.back() += err;
  }
  for (auto& g : grad) g /= static_cast<double>(n);
  for (std::size_t j = 0; j + 1 < weights.size(); ++j) grad[j] += l2 * weights[j];
  return grad;
}

namespace {

std::vector<std::optional<SequenceScore>> example_scores(const Corpus& corpus,
                                                         const std::string& example_id,
                                                         const std::vector<ModelKey>& classes) {
  std::vector<std::optional<SequenceScore>> scores;
  scores.reserve(classes.size());
  for (const auto& key : classes) {
    const PredictionRecord* rec = corpus.find(example_id, key);
    if (rec) {
      scores.push_back(normalize_sequence_prob(rec->seq_logprob, rec->token_count));
    } else {
      scores.push_back(std::nullopt);
    }
  }
  return scores;
}

}  // namespace

MetaClassifier train_ovr_logreg(const Corpus& corpus, const std::vector<ModelKey>& classes,
                                const std::vector<std::vector<std::string>>& folds,
                                int heldout_fold, FeatureSpec spec, const LogRegHyper& hyper,
                                const EquivalenceOracle& oracle) {
  if (classes.empty()) throw FuseError("meta-classifier needs at least one class");
  std::vector<std::string> train_ids;
  if (folds.empty()) {
    train_ids = corpus.example_ids();
  } else {
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (static_cast<int>(f) == heldout_fold) continue;
      train_ids.insert(train_ids.end(), folds[f].begin(), folds[f].end());
    }
    std::sort(train_ids.begin(), train_ids.end());
  }
  if (train_ids.empty()) throw FuseError("no training examples outside the held-out fold");

  std::vector<ModelKey> ordered = corpus.priority.sorted(classes);
  std::size_t c = ordered.size();

  // z-score statistics come from the training folds only
  if (spec.zscore && spec.z_mean.empty()) {
    std::vector<double> mean(c, 0.0), m2(c, 0.0);
    for (const auto& id : train_ids) {
      auto scores = example_scores(corpus, id, ordered);
      for (std::size_t k = 0; k < c; ++k) {
        mean[k] += scores[k] ? scores[k]->norm_prob : 0.0;
      }
    }
    for (auto& m : mean) m /= static_cast<double>(train_ids.size());
    for (const auto& id : train_ids) {
      auto scores = example_scores(corpus, id, ordered);
      for (std::size_t k = 0; k < c; ++k) {
        double v = (scores[k] ? scores[k]->norm_prob : 0.0) - mean[k];
        m2[k] += v * v;
      }
    }
    spec.z_mean = mean;
    spec.z_std.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
      spec.z_std[k] = std::sqrt(m2[k] / static_cast<double>(train_ids.size()));
    }
  }

  std::vector<std::vector<double>> features;
  features.reserve(train_ids.size());
  std::vector<std::vector<int>> labels(c);
  for (const auto& id : train_ids) {
    features.push_back(build_features(example_scores(corpus, id, ordered), spec));
    const GoldRecord& gold = corpus.gold.at(id);
    for (std::size_t k = 0; k < c; ++k) {
      const PredictionRecord* rec = corpus.find(id, ordered[k]);
      bool correct = rec && oracle.is_correct(rec->answer, gold.gold_answers);
      labels[k].push_back(correct ? 1 : 0);
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (std::count(labels[k].begin(), labels[k].end(), 1) == 0) {
      throw FuseError("class " + ordered[k].label() + " has zero positive training examples");
    }
  }

  std::size_t dim = spec.dimension(c);
  MetaClassifier clf;
  clf.feature_spec = spec;
  clf.classes = ordered;
  clf.train_meta.seed = hyper.seed;
  clf.train_meta.fold_id = heldout_fold;
  int total_iterations = 0;
  double last_loss = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::vector<double> w(dim + 1, 0.0);
    double prev = ovr_loss(features, labels[k], w, hyper.l2);
    int it = 0;
    for (; it < hyper.max_iterations; ++it) {
      std::vector<double> grad = ovr_gradient(features, labels[k], w, hyper.l2);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= hyper.learning_rate * grad[j];
      double loss = ovr_loss(features, labels[k], w, hyper.l2);
      if (std::abs(prev - loss) < hyper.tolerance) {
        prev = loss;
        ++it;
        break;
      }
      prev = loss;
    }
    total_iterations = std::max(total_iterations, it);
    last_loss += prev;
    clf.weights.push_back(std::move(w));
  }
  clf.train_meta.iterations = total_iterations;
  clf.train_meta.final_loss = last_loss / static_cast<double>(c);
  return clf;
}

std::vector<EnsembleChoice> meta_select(const MetaClassifier& classifier, const Corpus& corpus,
                                        const std::vector<std::string>& example_ids) {
  std::vector<std::string> ids = example_ids;
  std::sort(ids.begin(), ids.end());
  std::vector<EnsembleChoice> choices;
  for (const auto& id : ids) {
    auto scores = example_scores(corpus, id, classifier.classes);
    std::vector<double> feats = build_features(scores, classifier.feature_spec);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t k = 0; k < classifier.classes.size(); ++k) {
      double s = classifier.class_score(k, feats);
      if (s > best_score) {  // strict: ties keep class order
        best = k;
        best_score = s;
      }
    }
    EnsembleChoice choice;
    choice.example_id = id;
    choice.method = Method::meta_classifier;
    choice.detail["score"] = format_double(best_score);
    const PredictionRecord* rec = corpus.find(id, classifier.classes[best]);
    if (!rec) {
      choice.detail["missing_fallback"] = "true";
      for (std::size_t k = 0; k < classifier.classes.size() && !rec; ++k) {
        rec = corpus.find(id, classifier.classes[k]);
        if (rec) best = k;
      }
    }
    if (rec) {
      choice.chosen = classifier.classes[best];
      choice.answer = rec->answer;
    } else {
      choice.chosen = classifier.classes.front();
      choice.detail["missing"] = "true";
    }
    choices.push_back(std::move(choice));
  }
  return choices;
}

CrossValResult cross_validate_meta(const Corpus& corpus, const std::vector<ModelKey>& classes,
                                   int k, FeatureSpec spec, const LogRegHyper& hyper,
                                   const EquivalenceOracle& oracle, std::uint64_t fold_seed) {
  auto folds = split_folds(corpus, k, fold_seed);
  CrossValResult out;
  std::vector<EnsembleChoice> pooled;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    MetaClassifier clf =
        train_ovr_logreg(corpus, classes, folds, static_cast<int>(f), spec, hyper, oracle);
    auto choices = meta_select(clf, corpus, folds[f]);
    pooled.insert(pooled.end(), choices.begin(), choices.end());
    out.fold_classifiers.push_back(std::move(clf));
  }
  std::sort(pooled.begin(), pooled.end(),
            [](const EnsembleChoice& a, const EnsembleChoice& b) {
              return a.example_id < b.example_id;
            });
  out.result = score_choices(corpus, std::move(pooled), oracle);
  return out;
}

}  // namespace enseval
