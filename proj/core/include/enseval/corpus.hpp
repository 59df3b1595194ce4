#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace enseval {

enum class Augmentation { vanilla, promptcap, lens };

std::string_view to_string(Augmentation aug);
std::optional<Augmentation> augmentation_from_string(std::string_view s);

struct ModelKey {
  std::string model_id;
  Augmentation augmentation = Augmentation::vanilla;

  // "palm/lens"
  std::string label() const;

  auto operator<=>(const ModelKey&) const = default;
};

std::optional<ModelKey> parse_model_key(std::string_view label);

// Ranks model keys for selection order: augmentation tier first, base model
// within the tier. Keys absent from a list rank after all listed ones.
struct ModelPriority {
  std::vector<std::string> model_order{"palm", "gpt-3", "pali"};
  std::vector<Augmentation> augmentation_order{Augmentation::lens, Augmentation::promptcap,
                                               Augmentation::vanilla};

  std::size_t augmentation_rank(Augmentation aug) const;
  std::size_t model_rank(const std::string& model_id) const;
  // strict total order
  bool less(const ModelKey& a, const ModelKey& b) const;
  std::vector<ModelKey> sorted(std::vector<ModelKey> keys) const;
};

struct GoldRecord {
  std::string example_id;
  std::string question;
  std::string image_ref;
  std::vector<std::string> gold_answers;
  // unknown input fields, name -> compact JSON, carried through round trips
  std::map<std::string, std::string> extra;
  int line = 0;  // source line, diagnostics only

  friend bool operator==(const GoldRecord& a, const GoldRecord& b) {
    return a.example_id == b.example_id && a.question == b.question &&
           a.image_ref == b.image_ref && a.gold_answers == b.gold_answers && a.extra == b.extra;
  }
};

struct PredictionRecord {
  std::string example_id;
  std::string model_id;
  Augmentation augmentation = Augmentation::vanilla;
  std::string answer;       // may be empty: counts as never correct
  double seq_logprob = 0.0;  // natural log of sequence likelihood, <= 0
  int token_count = 1;      // >= 1
  std::optional<std::string> lens_entity;  // absent: retrieval returned nothing
  std::optional<std::string> context;      // lens only
  std::optional<std::string> caption;      // promptcap only
  std::map<std::string, std::string> extra;
  int line = 0;

  ModelKey key() const { return {model_id, augmentation}; }

  friend bool operator==(const PredictionRecord& a, const PredictionRecord& b) {
    return a.example_id == b.example_id && a.model_id == b.model_id &&
           a.augmentation == b.augmentation && a.answer == b.answer &&
           a.seq_logprob == b.seq_logprob && a.token_count == b.token_count &&
           a.lens_entity == b.lens_entity && a.context == b.context && a.caption == b.caption &&
           a.extra == b.extra;
  }
};

struct Corpus {
  std::map<std::string, GoldRecord> gold;
  std::map<std::string, std::map<ModelKey, PredictionRecord>> predictions;
  std::vector<ModelKey> model_keys;  // priority order
  ModelPriority priority;

  const PredictionRecord* find(const std::string& example_id, const ModelKey& key) const;
  std::vector<std::string> example_ids() const;  // sorted
  std::size_t prediction_count() const;
  // present (example, model_key) pairs / (gold size * model_keys size); 1.0 when empty
  double completeness() const;
  // recomputes model_keys from the predictions actually present
  void refresh_model_keys();

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.gold == b.gold && a.predictions == b.predictions && a.model_keys == b.model_keys;
  }
};

class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& msg) : std::runtime_error(msg) {}
  CorpusError(const std::string& msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_ = 0;
};

struct ParseIssue {
  int line = 0;
  std::string message;
};

struct GoldLoad {
  std::map<std::string, GoldRecord> gold;
  std::vector<std::string> warnings;
};

GoldLoad load_gold(const std::filesystem::path& path);
GoldLoad load_gold_from_string(std::string_view text);

struct PredictionLoad {
  Corpus corpus;
  std::vector<ParseIssue> rejects;  // orphan predictions with no gold example
  std::vector<std::string> warnings;
};

PredictionLoad load_predictions(const std::filesystem::path& path,
                                std::map<std::string, GoldRecord> gold,
                                ModelPriority priority = {});
PredictionLoad load_predictions_from_string(std::string_view text,
                                            std::map<std::string, GoldRecord> gold,
                                            ModelPriority priority = {});

std::string gold_to_jsonl_line(const GoldRecord& rec);
std::string prediction_to_jsonl_line(const PredictionRecord& rec);
void save_gold(const Corpus& corpus, const std::filesystem::path& path);
void save_predictions(const Corpus& corpus, const std::filesystem::path& path);

// Disjoint example_id folds covering the corpus; sizes differ by at most one,
// the first (n mod k) folds take the extra element. Deterministic per seed.
std::vector<std::vector<std::string>> split_folds(const Corpus& corpus, int k,
                                                  std::uint64_t seed);

}  // namespace enseval
