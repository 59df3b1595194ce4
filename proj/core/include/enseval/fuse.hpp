#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enseval/corpus.hpp"
#include "enseval/match.hpp"

namespace enseval {

class FuseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SequenceScore {
  double raw_logprob = 0.0;  // l, <= 0
  int token_count = 1;       // N
  double raw_prob = 1.0;     // exp(l)
  double norm_prob = 1.0;    // exp(l/N), length-normalized
};

// Computed in log space so long sequences cannot underflow raw_prob first.
SequenceScore normalize_sequence_prob(double raw_logprob, int token_count);

enum class Method {
  oracle,
  majority,
  max_prob,
  weighted_vote,
  meta_classifier,
  cascade,
  two_step,
  choose_best,
};

std::string_view to_string(Method method);
std::optional<Method> method_from_string(std::string_view s);

struct EnsembleChoice {
  std::string example_id;
  ModelKey chosen;
  std::string answer;
  Method method = Method::oracle;
  std::map<std::string, std::string> detail;
};

std::string choice_to_jsonl_line(const EnsembleChoice& choice);

struct SelectionResult {
  std::vector<EnsembleChoice> choices;
  double accuracy = 0.0;
  std::size_t n = 0;
};

// Upper bound: per example, the highest-priority correct subset model; when
// none is correct, a seeded uniform draw over present subset members.
// Accuracy counts examples with at least one correct subset prediction.
SelectionResult oracle_select(const Corpus& corpus, const std::vector<ModelKey>& subset,
                              const EquivalenceOracle& oracle, std::uint64_t seed);

// Largest answer cluster wins; ties resolve to the earliest-founded cluster,
// whose founder is the highest-priority model under the input order.
SelectionResult majority_vote(const Corpus& corpus, const std::vector<ModelKey>& subset,
                              const EquivalenceOracle& oracle);

std::vector<EnsembleChoice> max_prob_select(const Corpus& corpus,
                                            const std::vector<ModelKey>& subset,
                                            bool use_normalized);

std::vector<EnsembleChoice> weighted_vote(const Corpus& corpus,
                                          const std::vector<ModelKey>& subset,
                                          const EquivalenceOracle& oracle, bool use_normalized);

// Accuracy of already-made choices against gold.
SelectionResult score_choices(const Corpus& corpus, std::vector<EnsembleChoice> choices,
                              const EquivalenceOracle& oracle);

// Feature layout, in order: per-class norm_prob; z-scored copy; sqrt copy;
// power copy; pairwise products p_i*p_j (i<j); per-class missing mask.
// Disabled blocks are omitted. Missing predictions contribute 0 and mask 1.
struct FeatureSpec {
  bool zscore = false;
  bool sqrt = false;
  std::optional<double> power;
  bool pairwise_products = false;
  bool missing_mask = true;
  std::vector<double> z_mean;  // fitted on training folds, one per class
  std::vector<double> z_std;

  std::size_t dimension(std::size_t num_classes) const;
};

std::vector<double> build_features(const std::vector<std::optional<SequenceScore>>& scores,
                                   const FeatureSpec& spec);

struct LogRegHyper {
  double learning_rate = 0.1;
  double l2 = 1e-4;
  int max_iterations = 5000;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  int fold_id = -1;  // held-out fold; -1 when trained on everything
  int iterations = 0;
  double final_loss = 0.0;
};

struct MetaClassifier {
  FeatureSpec feature_spec;
  std::vector<ModelKey> classes;             // priority order
  std::vector<std::vector<double>> weights;  // per class, bias last
  TrainMeta train_meta;

  double class_score(std::size_t class_index, const std::vector<double>& features) const;
};

// L2-regularized mean log loss; the bias term is never regularized.
double ovr_loss(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                const std::vector<double>& weights, double l2);
std::vector<double> ovr_gradient(const std::vector<std::vector<double>>& features,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& weights, double l2);

// One-vs-rest logistic regression by full-batch gradient descent from zero
// weights. A training label for class c is 1 iff model c's answer is correct;
// several classes may be positive on one example. Training uses every fold
// except heldout_fold (-1 trains on all examples).
MetaClassifier train_ovr_logreg(const Corpus& corpus, const std::vector<ModelKey>& classes,
                                const std::vector<std::vector<std::string>>& folds,
                                int heldout_fold, FeatureSpec spec, const LogRegHyper& hyper,
                                const EquivalenceOracle& oracle);

// Argmax of per-class sigmoid scores; ties resolve to class order. When the
// winning class has no prediction for the example, the first class that does
// is substituted and flagged in detail.
std::vector<EnsembleChoice> meta_select(const MetaClassifier& classifier, const Corpus& corpus,
                                        const std::vector<std::string>& example_ids);

struct CrossValResult {
  std::vector<MetaClassifier> fold_classifiers;
  SelectionResult result;  // held-out choices pooled over folds
};

CrossValResult cross_validate_meta(const Corpus& corpus, const std::vector<ModelKey>& classes,
                                   int k, FeatureSpec spec, const LogRegHyper& hyper,
                                   const EquivalenceOracle& oracle, std::uint64_t fold_seed);

}  // namespace enseval
