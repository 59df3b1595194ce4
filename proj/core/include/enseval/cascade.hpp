#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "enseval/corpus.hpp"
#include "enseval/fuse.hpp"
#include "enseval/judge.hpp"
#include "enseval/match.hpp"

namespace enseval {

class CascadeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StageCheck { lens_reasoning, required_info, always_accept };

std::string_view to_string(StageCheck check);
std::optional<StageCheck> stage_check_from_string(std::string_view s);

struct CascadeStage {
  ModelKey model_key;
  StageCheck check = StageCheck::always_accept;
};

enum class Fallback { last_stage_answer, empty };

std::string_view to_string(Fallback fallback);
std::optional<Fallback> fallback_from_string(std::string_view s);

struct CascadeConfig {
  std::vector<CascadeStage> stages;
  bool include_vanilla = false;
  Fallback final_fallback = Fallback::last_stage_answer;
  // judge every stage even after an accept, for unbiased precision/recall
  bool exhaustive_judgments = false;

  void validate() const;  // non-empty, distinct models, check fits augmentation
};

// Stage order: lens tier then promptcap tier (then vanilla when included),
// each tier palm, gpt-3, pali. Lens stages run the retrieval-reasoning check,
// the rest the required-information check.
CascadeConfig default_cascade_config(bool include_vanilla);

// TOML: include_vanilla, final_fallback, exhaustive_judgments, and optional
// [[stage]] tables {model = "palm/lens", check = "lens_reasoning"} that
// replace the default stage list.
CascadeConfig load_cascade_config(const std::filesystem::path& path);

enum class RejectReason {
  no_entity,
  entity_mismatch,
  no_answer_in_context,
  answer_mismatch,
  info_type_mismatch,
};

std::string_view to_string(RejectReason reason);

struct StageVerdict {
  bool accepted = false;
  std::optional<RejectReason> reason;
  std::vector<JudgmentRecord> judgments;
};

// Short-circuits on the first failed check: entity present -> entity type
// matches the question -> context contains an answer -> that answer matches
// the prediction. A missing entity costs zero evaluator calls.
StageVerdict judge_lens_reasoning(const GoldRecord& example, const PredictionRecord& prediction,
                                  EvaluatorClient& client, const PromptRegistry& registry);

// Two prompts: extract the information type the question asks for, then ask
// whether the answer satisfies it.
StageVerdict judge_required_info(const GoldRecord& example, const PredictionRecord& prediction,
                                 EvaluatorClient& client, const PromptRegistry& registry);

enum class StageStatus { accepted, rejected, skipped_missing, error };

std::string_view to_string(StageStatus status);

struct StageOutcome {
  ModelKey model_key;
  StageCheck check = StageCheck::always_accept;
  StageStatus status = StageStatus::skipped_missing;
  std::optional<RejectReason> reason;
  std::vector<std::string> judgment_ids;
  std::string note;  // failure detail for status = error
};

struct CascadeTrace {
  std::string example_id;
  std::vector<StageOutcome> stages;  // stages actually reached, in order
  std::optional<ModelKey> selected;
  std::string answer;
  bool fallback_used = false;
};

struct CascadeResult {
  std::vector<CascadeTrace> traces;
  std::vector<JudgmentRecord> judgments;
  std::vector<EnsembleChoice> choices;
  double accuracy = 0.0;
  std::size_t n = 0;
};

// Evaluates stages in order per example and selects the first accepted
// stage's answer; when every stage rejects, the configured fallback applies.
// Judgment ids are "{example_id}/{stage_index}/{template_id}". Examples run
// concurrently up to the given parallelism; output order is independent of
// scheduling.
CascadeResult run_cascade(const Corpus& corpus, const CascadeConfig& config,
                          EvaluatorClient& client, const PromptRegistry& registry,
                          const EquivalenceOracle& oracle, int parallelism = 1);

// Entity-presence shortcut: lens answer when retrieval found an entity,
// otherwise the promptcap answer. Never touches the evaluator.
SelectionResult run_two_step_cascade(const Corpus& corpus, const ModelKey& lens_model,
                                     const ModelKey& promptcap_model,
                                     const EquivalenceOracle& oracle);

struct EvaluatorPR {
  Augmentation family = Augmentation::vanilla;
  std::optional<double> precision;  // absent when nothing was accepted
  std::optional<double> recall;     // absent when nothing was correct
  std::size_t accepted_correct = 0;
  std::size_t accepted_total = 0;
  std::size_t correct_total = 0;
};

// Aggregates judged stages by augmentation family. Precision and recall are
// unbiased only when traces come from an exhaustive_judgments run.
std::vector<EvaluatorPR> evaluator_precision_recall(const std::vector<CascadeTrace>& traces,
                                                    const Corpus& corpus,
                                                    const EquivalenceOracle& oracle);

std::string trace_to_jsonl_line(const CascadeTrace& trace);
void write_traces(const std::vector<CascadeTrace>& traces, const std::filesystem::path& path);

}  // namespace enseval
