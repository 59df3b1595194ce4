#include "enseval/cascade.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "enseval/toml.hpp"
#include "enseval/util.hpp"

namespace enseval {

std::string_view to_string(StageCheck check) {
  switch (check) {
    case StageCheck::lens_reasoning: return "lens_reasoning";
    case StageCheck::required_info: return "required_info";
    case StageCheck::always_accept: return "always_accept";
  }
  return "always_accept";
}

std::optional<StageCheck> stage_check_from_string(std::string_view s) {
  for (StageCheck c :
       {StageCheck::lens_reasoning, StageCheck::required_info, StageCheck::always_accept}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::string_view to_string(Fallback fallback) {
  switch (fallback) {
    case Fallback::last_stage_answer: return "last_stage_answer";
    case Fallback::empty: return "empty";
  }
  return "last_stage_answer";
}

std::optional<Fallback> fallback_from_string(std::string_view s) {
  for (Fallback f : {Fallback::last_stage_answer, Fallback::empty}) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::no_entity: return "no_entity";
    case RejectReason::entity_mismatch: return "entity_mismatch";
    case RejectReason::no_answer_in_context: return "no_answer_in_context";
    case RejectReason::answer_mismatch: return "answer_mismatch";
    case RejectReason::info_type_mismatch: return "info_type_mismatch";
  }
  return "no_entity";
}

std::string_view to_string(StageStatus status) {
  switch (status) {
    case StageStatus::accepted: return "accepted";
    case StageStatus::rejected: return "rejected";
    case StageStatus::skipped_missing: return "skipped_missing";
    case StageStatus::error: return "error";
  }
  return "error";
}

void CascadeConfig::validate() const {
  if (stages.empty()) throw CascadeError("cascade needs at least one stage");
  std::set<ModelKey> seen;
  for (const auto& stage : stages) {
    if (!seen.insert(stage.model_key).second) {
      throw CascadeError("duplicate cascade stage for " + stage.model_key.label());
    }
    if (stage.check == StageCheck::lens_reasoning &&
        stage.model_key.augmentation != Augmentation::lens) {
      throw CascadeError("lens_reasoning check requires a lens model, got " +
                         stage.model_key.label());
    }
    if (stage.check == StageCheck::required_info &&
        stage.model_key.augmentation == Augmentation::lens) {
      throw CascadeError("required_info check is for promptcap or vanilla models, got " +
                         stage.model_key.label());
    }
  }
}

CascadeConfig default_cascade_config(bool include_vanilla) {
  CascadeConfig config;
  config.include_vanilla = include_vanilla;
  const std::vector<std::string> models{"palm", "gpt-3", "pali"};
  for (const auto& m : models) {
    config.stages.push_back({{m, Augmentation::lens}, StageCheck::lens_reasoning});
  }
  for (const auto& m : models) {
    config.stages.push_back({{m, Augmentation::promptcap}, StageCheck::required_info});
  }
  if (include_vanilla) {
    for (const auto& m : models) {
      config.stages.push_back({{m, Augmentation::vanilla}, StageCheck::required_info});
    }
  }
  return config;
}

CascadeConfig load_cascade_config(const std::filesystem::path& path) {
  toml::Table root = toml::parse_file(path);
  bool include_vanilla = toml::get_bool(root, "include_vanilla").value_or(false);
  CascadeConfig config;
  auto stage_tables = toml::get_table_array(root, "stage");
  if (stage_tables.empty()) {
    config = default_cascade_config(include_vanilla);
  } else {
    config.include_vanilla = include_vanilla;
    for (const toml::Table* entry : stage_tables) {
      auto model = toml::get_string(*entry, "model");
      if (!model) throw CascadeError("cascade stage without a model");
      auto key = parse_model_key(*model);
      if (!key) throw CascadeError("bad cascade stage model '" + *model + "'");
      auto check_str = toml::get_string(*entry, "check");
      if (!check_str) throw CascadeError("cascade stage without a check");
      auto check = stage_check_from_string(*check_str);
      if (!check) throw CascadeError("unknown cascade check '" + *check_str + "'");
      config.stages.push_back({*key, *check});
    }
  }
  if (auto fb = toml::get_string(root, "final_fallback")) {
    auto parsed = fallback_from_string(*fb);
    if (!parsed) throw CascadeError("unknown final_fallback '" + *fb + "'");
    config.final_fallback = *parsed;
  }
  config.exhaustive_judgments = toml::get_bool(root, "exhaustive_judgments").value_or(false);
  config.validate();
  return config;
}

namespace {

JudgmentRecord stage_judgment(const std::string& example_id, const PromptTemplate& tmpl,
                              const std::map<std::string, std::string>& slots,
                              EvaluatorClient& client, std::string* raw_out) {
  Query q;
  q.template_id = tmpl.template_id;
  q.slots = slots;
  q.prompt = render_prompt(tmpl, slots);
  std::string raw = client.query(q);
  JudgmentRecord rec;
  rec.judgment_id = example_id + "/" + tmpl.template_id;
  rec.example_id = example_id;
  rec.template_id = tmpl.template_id;
  rec.slots = slots;
  rec.raw_response = raw;
  switch (tmpl.expected_response) {
    case ResponseKind::yes_no:
      switch (parse_binary(raw)) {
        case Binary::yes: rec.parsed.kind = ParsedResponse::Kind::yes; break;
        case Binary::no: rec.parsed.kind = ParsedResponse::Kind::no; break;
        case Binary::na: rec.parsed.kind = ParsedResponse::Kind::na; break;
      }
      break;
    default:
      rec.parsed.kind = ParsedResponse::Kind::text;
      rec.parsed.text = trim(raw);
      break;
  }
  if (raw_out) *raw_out = raw;
  return rec;
}

}  // namespace

StageVerdict judge_lens_reasoning(const GoldRecord& example, const PredictionRecord& prediction,
                                  EvaluatorClient& client, const PromptRegistry& registry) {
  if (prediction.augmentation != Augmentation::lens) {
    throw CascadeError("lens reasoning check needs a lens prediction, got " +
                       prediction.key().label());
  }
  StageVerdict verdict;
  if (!prediction.lens_entity) {
    verdict.reason = RejectReason::no_entity;
    return verdict;
  }

  std::string entity_type;
  verdict.judgments.push_back(stage_judgment(example.example_id,
                                             registry.get(prompt_ids::lens_entity_type),
                                             {{"question", example.question}}, client,
                                             &entity_type));
  entity_type = trim(entity_type);

  std::string check_raw;
  verdict.judgments.push_back(stage_judgment(
      example.example_id, registry.get(prompt_ids::lens_entity_check),
      {{"entity", *prediction.lens_entity}, {"entity_type", entity_type}}, client, &check_raw));
  if (parse_binary(check_raw) != Binary::yes) {
    verdict.reason = RejectReason::entity_mismatch;
    return verdict;
  }

  std::string informative;
  verdict.judgments.push_back(stage_judgment(
      example.example_id, registry.get(prompt_ids::lens_informative_answer),
      {{"question", example.question}, {"evidence", prediction.context.value_or("")}}, client,
      &informative));
  informative = trim(informative);
  std::string norm = normalize_answer(informative);
  if (norm == "no answer" || norm == "no answers") {
    verdict.reason = RejectReason::no_answer_in_context;
    return verdict;
  }

  std::string equiv_raw;
  verdict.judgments.push_back(stage_judgment(example.example_id,
                                             registry.get(prompt_ids::lens_answer_equivalence),
                                             {{"question", example.question},
                                              {"response", prediction.answer},
                                              {"informative_answer", informative}},
                                             client, &equiv_raw));
  if (parse_binary(equiv_raw) != Binary::yes) {
    verdict.reason = RejectReason::answer_mismatch;
    return verdict;
  }
  verdict.accepted = true;
  return verdict;
}

StageVerdict judge_required_info(const GoldRecord& example, const PredictionRecord& prediction,
                                 EvaluatorClient& client, const PromptRegistry& registry) {
  if (prediction.augmentation == Augmentation::lens) {
    throw CascadeError("required info check is for promptcap or vanilla predictions, got " +
                       prediction.key().label());
  }
  StageVerdict verdict;
  std::string required;
  verdict.judgments.push_back(stage_judgment(example.example_id,
                                             registry.get(prompt_ids::required_info_extract),
                                             {{"question", example.question}}, client,
                                             &required));
  required = trim(required);

  std::string check_raw;
  verdict.judgments.push_back(stage_judgment(example.example_id,
                                             registry.get(prompt_ids::required_info_check),
                                             {{"question", example.question},
                                              {"required_information", required},
                                              {"answer", prediction.answer}},
                                             client, &check_raw));
  if (parse_binary(check_raw) != Binary::yes) {
    verdict.reason = RejectReason::info_type_mismatch;
    return verdict;
  }
  verdict.accepted = true;
  return verdict;
}

namespace {

struct ExampleRun {
  CascadeTrace trace;
  std::vector<JudgmentRecord> judgments;
};

ExampleRun run_one_example(const Corpus& corpus, const std::string& example_id,
                           const CascadeConfig& config, EvaluatorClient& client,
                           const PromptRegistry& registry) {
  ExampleRun run;
  run.trace.example_id = example_id;
  const GoldRecord& gold = corpus.gold.at(example_id);
  const PredictionRecord* last_evaluated = nullptr;
  bool selected = false;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    if (selected && !config.exhaustive_judgments) break;
    const CascadeStage& stage = config.stages[s];
    StageOutcome outcome;
    outcome.model_key = stage.model_key;
    outcome.check = stage.check;
    const PredictionRecord* pred = corpus.find(example_id, stage.model_key);
    if (!pred) {
      outcome.status = StageStatus::skipped_missing;
      run.trace.stages.push_back(std::move(outcome));
      continue;
    }
    StageVerdict verdict;
    try {
      switch (stage.check) {
        case StageCheck::lens_reasoning:
          verdict = judge_lens_reasoning(gold, *pred, client, registry);
          break;
        case StageCheck::required_info:
          verdict = judge_required_info(gold, *pred, client, registry);
          break;
        case StageCheck::always_accept:
          verdict.accepted = true;
          break;
      }
    } catch (const EvaluatorError& e) {
      outcome.status = StageStatus::error;
      outcome.note = e.what();
      run.trace.stages.push_back(std::move(outcome));
      continue;
    }
    if (!selected) last_evaluated = pred;
    for (auto& rec : verdict.judgments) {
      rec.judgment_id = example_id + "/" + std::to_string(s) + "/" + rec.template_id;
      outcome.judgment_ids.push_back(rec.judgment_id);
      run.judgments.push_back(std::move(rec));
    }
    outcome.status = verdict.accepted ? StageStatus::accepted : StageStatus::rejected;
    outcome.reason = verdict.reason;
    run.trace.stages.push_back(std::move(outcome));
    if (verdict.accepted && !selected) {
      selected = true;
      run.trace.selected = stage.model_key;
      run.trace.answer = pred->answer;
    }
  }
  if (!selected) {
    run.trace.fallback_used = true;
    if (config.final_fallback == Fallback::last_stage_answer && last_evaluated) {
      run.trace.selected = last_evaluated->key();
      run.trace.answer = last_evaluated->answer;
    }
  }
  return run;
}

}  // namespace

CascadeResult run_cascade(const Corpus& corpus, const CascadeConfig& config,
                          EvaluatorClient& client, const PromptRegistry& registry,
                          const EquivalenceOracle& oracle, int parallelism) {
  config.validate();
  std::vector<std::string> ids = corpus.example_ids();
  std::vector<ExampleRun> runs(ids.size());

  if (parallelism <= 1 || ids.size() < 2) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      runs[i] = run_one_example(corpus, ids[i], config, client, registry);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= ids.size()) return;
        try {
          runs[i] = run_one_example(corpus, ids[i], config, client, registry);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism),
                                                ids.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  CascadeResult result;
  for (auto& run : runs) {
    EnsembleChoice choice;
    choice.example_id = run.trace.example_id;
    choice.method = Method::cascade;
    if (run.trace.selected) {
      choice.chosen = *run.trace.selected;
      choice.answer = run.trace.answer;
    } else if (!config.stages.empty()) {
      choice.chosen = config.stages.front().model_key;
      choice.detail["missing"] = "true";
    }
    if (run.trace.fallback_used) choice.detail["fallback_used"] = "true";
    result.choices.push_back(std::move(choice));
    result.judgments.insert(result.judgments.end(),
                            std::make_move_iterator(run.judgments.begin()),
                            std::make_move_iterator(run.judgments.end()));
    result.traces.push_back(std::move(run.trace));
  }
  SelectionResult scored = score_choices(corpus, std::move(result.choices), oracle);
  result.choices = std::move(scored.choices);
  result.accuracy = scored.accuracy;
  result.n = scored.n;
  return result;
}

SelectionResult run_two_step_cascade(const Corpus& corpus, const ModelKey& lens_model,
                                     const ModelKey& promptcap_model,
                                     const EquivalenceOracle& oracle) {
  if (lens_model.augmentation != Augmentation::lens) {
    throw CascadeError("two-step cascade needs a lens model first, got " + lens_model.label());
  }
  std::vector<EnsembleChoice> choices;
  for (const auto& id : corpus.example_ids()) {
    const PredictionRecord* lens = corpus.find(id, lens_model);
    const PredictionRecord* pcap = corpus.find(id, promptcap_model);
    EnsembleChoice choice;
    choice.example_id = id;
    choice.method = Method::two_step;
    const PredictionRecord* picked = nullptr;
    if (lens && lens->lens_entity) {
      picked = lens;
      choice.detail["route"] = "lens";
    } else if (pcap) {
      picked = pcap;
      choice.detail["route"] = "promptcap";
    } else if (lens) {
      picked = lens;
      choice.detail["route"] = "lens";
      choice.detail["missing_fallback"] = "true";
    }
    if (picked) {
      choice.chosen = picked->key();
      choice.answer = picked->answer;
    } else {
      choice.chosen = lens_model;
      choice.detail["missing"] = "true";
    }
    choices.push_back(std::move(choice));
  }
  return score_choices(corpus, std::move(choices), oracle);
}

std::vector<EvaluatorPR> evaluator_precision_recall(const std::vector<CascadeTrace>& traces,
                                                    const Corpus& corpus,
                                                    const EquivalenceOracle& oracle) {
  std::map<Augmentation, EvaluatorPR> by_family;
  for (const auto& trace : traces) {
    auto gold_it = corpus.gold.find(trace.example_id);
    if (gold_it == corpus.gold.end()) continue;
    for (const auto& stage : trace.stages) {
      if (stage.status != StageStatus::accepted && stage.status != StageStatus::rejected) {
        continue;
      }
      const PredictionRecord* pred = corpus.find(trace.example_id, stage.model_key);
      if (!pred) continue;
      EvaluatorPR& pr = by_family[stage.model_key.augmentation];
      pr.family = stage.model_key.augmentation;
      bool correct = oracle.is_correct(pred->answer, gold_it->second.gold_answers);
      bool accepted = stage.status == StageStatus::accepted;
      if (accepted) ++pr.accepted_total;
      if (correct) ++pr.correct_total;
      if (accepted && correct) ++pr.accepted_correct;
    }
  }
  std::vector<EvaluatorPR> out;
  for (Augmentation aug : {Augmentation::lens, Augmentation::promptcap, Augmentation::vanilla}) {
    auto it = by_family.find(aug);
    if (it == by_family.end()) continue;
    EvaluatorPR pr = it->second;
    if (pr.accepted_total > 0) {
      pr.precision =
          static_cast<double>(pr.accepted_correct) / static_cast<double>(pr.accepted_total);
    }
    if (pr.correct_total > 0) {
      pr.recall =
          static_cast<double>(pr.accepted_correct) / static_cast<double>(pr.correct_total);
    }
    out.push_back(pr);
  }
  return out;
}

std::string trace_to_jsonl_line(const CascadeTrace& trace) {
  nlohmann::ordered_json j;
  j["example_id"] = trace.example_id;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& stage : trace.stages) {
    nlohmann::ordered_json s;
    s["model"] = stage.model_key.label();
    s["check"] = std::string(to_string(stage.check));
    s["status"] = std::string(to_string(stage.status));
    if (stage.reason) {
      s["reason"] = std::string(to_string(*stage.reason));
    } else {
      s["reason"] = nullptr;
    }
    s["judgment_ids"] = stage.judgment_ids;
    if (!stage.note.empty()) s["note"] = stage.note;
    stages.push_back(std::move(s));
  }
  j["stages"] = stages;
  if (trace.selected) {
    j["selected"] = trace.selected->label();
  } else {
    j["selected"] = nullptr;
  }
  j["answer"] = trace.answer;
  j["fallback_used"] = trace.fallback_used;
  return j.dump();
}

void write_traces(const std::vector<CascadeTrace>& traces, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CascadeError("cannot write traces: " + path.string());
  for (const auto& trace : traces) out << trace_to_jsonl_line(trace) << '\n';
}

}  // namespace enseval
