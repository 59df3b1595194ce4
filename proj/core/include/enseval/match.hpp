#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "enseval/corpus.hpp"

namespace enseval {

// Lower-cases (ASCII, Latin-1, Latin Extended-A, Greek, Cyrillic), strips
// punctuation (ASCII, Latin-1, general punctuation blocks, basic CJK marks),
// collapses Unicode whitespace runs to single spaces, trims. Total and
// idempotent; bytes that are not valid UTF-8 pass through unchanged.
std::string normalize_answer(std::string_view raw);

enum class OracleKind { exact, synonym_table, semantic_client };

std::string_view to_string(OracleKind kind);

struct MatchVerdict {
  bool equivalent = false;
  double score = 0.0;  // in [0,1]; exact and synonym kinds emit only 0 or 1
  OracleKind oracle_kind = OracleKind::exact;
};

struct SemanticEndpoint {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string path = "/match";
  int timeout_sec = 10;

  std::string describe() const;
};

class SemanticClientError : public std::runtime_error {
 public:
  SemanticClientError(const std::string& detail, const SemanticEndpoint& endpoint,
                      const std::string& a, const std::string& b);
};

// Pluggable answer-equivalence strategy. Copies share state; all kinds are
// safe for concurrent use. The semantic kind memoizes per normalized pair and
// bounds in-flight calls by the given parallelism.
class EquivalenceOracle {
 public:
  static EquivalenceOracle exact();
  static EquivalenceOracle synonym_table(const std::vector<std::vector<std::string>>& groups);
  static EquivalenceOracle synonym_table_from_file(const std::filesystem::path& path);
  static EquivalenceOracle semantic_client(SemanticEndpoint endpoint, double threshold = 0.5,
                                           int parallelism = 4);

  OracleKind kind() const;
  double threshold() const;

  // Equal normalized non-empty strings short-circuit to true for every kind;
  // an empty normalized side is never equivalent to anything.
  MatchVerdict verdict(std::string_view a, std::string_view b) const;
  bool equivalent(std::string_view a, std::string_view b) const;
  bool is_correct(std::string_view pred, const std::vector<std::string>& gold_answers) const;

  // network round-trips performed (memo hits excluded); 0 for offline kinds
  std::size_t calls() const;

 private:
  struct State;
  explicit EquivalenceOracle(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

struct AnswerCluster {
  std::string representative;  // founder's raw answer
  ModelKey founder;
  std::vector<ModelKey> members;  // includes founder, input order
};

struct ClusterResult {
  std::vector<AnswerCluster> clusters;
  std::vector<ModelKey> skipped_empty;
};

// Greedy single pass in input order: each answer joins the first cluster whose
// representative it matches, else founds a new one. Deterministic given order.
ClusterResult cluster_answers(const std::vector<std::pair<ModelKey, std::string>>& answers,
                              const EquivalenceOracle& oracle);

}  // namespace enseval
