#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "enseval/corpus.hpp"
#include "enseval/fuse.hpp"
#include "enseval/match.hpp"

namespace enseval {

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ResponseKind { free_text, yes_no, likert_5, choice };

std::string_view to_string(ResponseKind kind);
std::optional<ResponseKind> response_kind_from_string(std::string_view s);

enum class LikertWording { confident, agree };

struct LikertPhrasing {
  LikertWording wording = LikertWording::confident;
  bool neutral_mid = false;  // middle option phrased as plain "neutral"
};

struct PromptTemplate {
  std::string template_id;
  std::string body;  // "{}" placeholders, filled in slot_names order
  std::vector<std::string> slot_names;
  ResponseKind expected_response = ResponseKind::free_text;
  std::optional<LikertPhrasing> likert;  // required when expected_response = likert_5

  std::size_t placeholder_count() const;
};

class PromptRegistry {
 public:
  static PromptRegistry load(const std::filesystem::path& path);
  static PromptRegistry from_toml(std::string_view text);

  void add(PromptTemplate tmpl);  // throws on duplicate id or slot mismatch
  const PromptTemplate& get(std::string_view template_id) const;
  const PromptTemplate* find(std::string_view template_id) const;
  std::vector<std::string> ids() const;  // registry order
  std::size_t size() const { return templates_.size(); }

 private:
  std::vector<PromptTemplate> templates_;
};

// Substitutes the k-th "{}" with slots.at(slot_names[k]).
std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& slots);

// Stable mock/cache key: template id plus a hash over normalized slot values,
// so cosmetic whitespace changes in fixtures do not orphan script entries.
std::string canonical_key(std::string_view template_id,
                          const std::map<std::string, std::string>& slots);

struct Query {
  std::string template_id;
  std::map<std::string, std::string> slots;
  std::string prompt;
};

struct HttpEndpoint {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string path = "/evaluate";
  int timeout_sec = 30;
  std::string auth_header;  // header name; empty disables auth
  std::string auth_token;
};

class EvaluatorError : public std::runtime_error {
 public:
  EvaluatorError(const std::string& msg, bool retriable)
      : std::runtime_error(msg), retriable_(retriable) {}
  bool retriable() const { return retriable_; }

 private:
  bool retriable_;
};

class MockMissError : public std::runtime_error {
 public:
  explicit MockMissError(const std::string& key)
      : std::runtime_error("mock script has no entry for key " + key), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class ClientKind { scripted_mock, http_llm };

// Transport to the external evaluator. Copies share state and are safe for
// concurrent use; in-flight HTTP calls are bounded by the parallelism limit.
class EvaluatorClient {
 public:
  // Script entries: {"key": canonical key, "response": str}; fallback rules
  // {"pattern": regex over the rendered prompt, "response": str} apply in
  // file order. An unmatched query raises MockMissError.
  static EvaluatorClient scripted_mock(const std::filesystem::path& script);
  static EvaluatorClient http_llm(HttpEndpoint endpoint, int parallelism = 4,
                                  std::optional<std::filesystem::path> cache_dir = std::nullopt);

  std::string query(const Query& q);
  // evaluations performed: every mock lookup, every HTTP round-trip
  // (disk-cache hits excluded)
  std::size_t calls() const;
  int parallelism() const;
  ClientKind kind() const;

 private:
  struct State;
  explicit EvaluatorClient(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

enum class Binary { yes, no, na };

// Leading-token rule after normalization: "Yes." -> yes, "no, ..." -> no.
Binary parse_binary(std::string_view raw);

// Exact-vocabulary, longest-phrase-first prefix match after normalization;
// unmatched responses stay unmapped (nullopt) rather than being repaired.
std::optional<int> parse_likert(std::string_view raw, const LikertPhrasing& phrasing);

std::vector<std::string> likert_vocabulary(const LikertPhrasing& phrasing);  // scale 5 down to 1

struct ParsedResponse {
  enum class Kind { yes, no, na, likert, text };
  Kind kind = Kind::na;
  int likert = 0;    // valid when kind = likert
  std::string text;  // valid when kind = text
};

struct JudgmentRecord {
  std::string judgment_id;
  std::string example_id;
  std::string template_id;
  std::map<std::string, std::string> slots;
  std::string raw_response;
  ParsedResponse parsed;
};

std::string judgment_to_jsonl_line(const JudgmentRecord& rec);
void write_judgments(const std::vector<JudgmentRecord>& records,
                     const std::filesystem::path& path);

struct BucketStat {
  std::string label;  // "5".."1" / "yes" / "no" / "NA"
  std::size_t count = 0;
  std::optional<double> accuracy;  // absent when the bucket is empty
};

struct BucketStats {
  std::string prompt_variant_id;
  std::vector<BucketStat> buckets;  // fixed order, NA last
  std::size_t n = 0;                // examples processed; equals sum of counts
};

struct SweepResult {
  std::vector<BucketStats> variants;
  std::vector<JudgmentRecord> judgments;
  std::vector<std::string> failures;  // transport failures, sweep continued
};

// Queries one model's answers through every prompt variant and buckets the
// parsed responses with per-bucket accuracy against gold.
SweepResult reflection_sweep(const Corpus& corpus, const ModelKey& model_key,
                             const std::vector<PromptTemplate>& variants,
                             EvaluatorClient& client, const EquivalenceOracle& oracle);

enum class ChooseStrategy { plain, intermediate_steps, with_context };

std::string_view to_string(ChooseStrategy strategy);
std::optional<ChooseStrategy> choose_strategy_from_string(std::string_view s);

struct ChooseResult {
  EnsembleChoice choice;
  std::vector<JudgmentRecord> judgments;
};

// Renders the strategy's prompt chain over the comma-joined candidate list,
// then matches the evaluator's reply back to a candidate: exact normalized
// equality first, soft equivalence second, highest-priority fallback last
// (flagged). Candidates must include at least one non-empty answer; evidence
// is required by the with_context strategy.
ChooseResult select_best_answer(const GoldRecord& example,
                                const std::vector<std::pair<ModelKey, std::string>>& candidates,
                                ChooseStrategy strategy, EvaluatorClient& client,
                                const PromptRegistry& registry, const EquivalenceOracle& oracle,
                                const std::optional<std::string>& evidence = std::nullopt);

// Registry ids the built-in pipelines depend on.
namespace prompt_ids {
inline constexpr std::string_view lens_entity_type = "lens_entity_type";
inline constexpr std::string_view lens_entity_check = "lens_entity_check";
inline constexpr std::string_view lens_informative_answer = "lens_informative_answer";
inline constexpr std::string_view lens_answer_equivalence = "lens_answer_equivalence";
inline constexpr std::string_view required_info_extract = "required_info_extract";
inline constexpr std::string_view required_info_check = "required_info_check";
inline constexpr std::string_view choose_plain = "choose_plain";
inline constexpr std::string_view choose_similar = "choose_similar";
inline constexpr std::string_view choose_entity_step1 = "choose_entity_step1";
inline constexpr std::string_view choose_entity_step2 = "choose_entity_step2";
inline constexpr std::string_view choose_context_step1 = "choose_context_step1";
inline constexpr std::string_view choose_context_step2 = "choose_context_step2";
}  // namespace prompt_ids

}  // namespace enseval
