#include "enseval/judge.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "enseval/toml.hpp"
#include "enseval/util.hpp"

namespace enseval {

using nlohmann::json;

std::string_view to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::free_text: return "free_text";
    case ResponseKind::yes_no: return "yes_no";
    case ResponseKind::likert_5: return "likert_5";
    case ResponseKind::choice: return "choice";
  }
  return "free_text";
}

std::optional<ResponseKind> response_kind_from_string(std::string_view s) {
  for (ResponseKind k : {ResponseKind::free_text, ResponseKind::yes_no, ResponseKind::likert_5,
                         ResponseKind::choice}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::size_t PromptTemplate::placeholder_count() const {
  std::size_t count = 0;
  for (std::size_t pos = 0; (pos = body.find("{}", pos)) != std::string::npos; pos += 2) {
    ++count;
  }
  return count;
}

PromptRegistry PromptRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw JudgeError("cannot open prompt registry: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_toml(ss.str());
}

PromptRegistry PromptRegistry::from_toml(std::string_view text) {
  toml::Table root = toml::parse(text);
  PromptRegistry registry;
  for (const toml::Table* entry : toml::get_table_array(root, "prompt")) {
    PromptTemplate tmpl;
    auto id = toml::get_string(*entry, "id");
    if (!id) throw JudgeError("prompt entry without an id");
    tmpl.template_id = *id;
    auto body = toml::get_string(*entry, "body");
    if (!body) throw JudgeError("prompt '" + tmpl.template_id + "' has no body");
    tmpl.body = *body;
    tmpl.slot_names = toml::get_string_array(*entry, "slots");
    auto kind_str = toml::get_string(*entry, "expected_response");
    if (!kind_str) {
      throw JudgeError("prompt '" + tmpl.template_id + "' has no expected_response");
    }
    auto kind = response_kind_from_string(*kind_str);
    if (!kind) {
      throw JudgeError("prompt '" + tmpl.template_id + "' has unknown expected_response '" +
                       *kind_str + "'");
    }
    tmpl.expected_response = *kind;
    if (auto wording = toml::get_string(*entry, "likert_wording")) {
      LikertPhrasing phrasing;
      if (*wording == "confident") {
        phrasing.wording = LikertWording::confident;
      } else if (*wording == "agree") {
        phrasing.wording = LikertWording::agree;
      } else {
        throw JudgeError("prompt '" + tmpl.template_id + "' has unknown likert_wording '" +
                         *wording + "'");
      }
      phrasing.neutral_mid = toml::get_bool(*entry, "likert_neutral_mid").value_or(false);
      tmpl.likert = phrasing;
    }
    if (tmpl.expected_response == ResponseKind::likert_5 && !tmpl.likert) {
      throw JudgeError("likert prompt '" + tmpl.template_id + "' lacks likert_wording");
    }
    registry.add(std::move(tmpl));
  }
  return registry;
}

void PromptRegistry::add(PromptTemplate tmpl) {
  if (find(tmpl.template_id)) {
    throw JudgeError("duplicate prompt template id '" + tmpl.template_id + "'");
  }
  if (tmpl.placeholder_count() != tmpl.slot_names.size()) {
    throw JudgeError("prompt '" + tmpl.template_id + "' has " +
                     std::to_string(tmpl.placeholder_count()) + " placeholders but " +
                     std::to_string(tmpl.slot_names.size()) + " slots");
  }
  templates_.push_back(std::move(tmpl));
}

const PromptTemplate& PromptRegistry::get(std::string_view template_id) const {
  if (const PromptTemplate* t = find(template_id)) return *t;
  throw JudgeError("unknown prompt template '" + std::string(template_id) + "'");
}

const PromptTemplate* PromptRegistry::find(std::string_view template_id) const {
  for (const auto& t : templates_) {
    if (t.template_id == template_id) return &t;
  }
  return nullptr;
}

std::vector<std::string> PromptRegistry::ids() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& t : templates_) out.push_back(t.template_id);
  return out;
}

std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(tmpl.body.size());
  std::size_t pos = 0;
  std::size_t slot = 0;
  for (;;) {
    std::size_t hole = tmpl.body.find("{}", pos);
    if (hole == std::string::npos) {
      out.append(tmpl.body, pos, std::string::npos);
      break;
    }
    out.append(tmpl.body, pos, hole - pos);
    const std::string& name = tmpl.slot_names.at(slot++);
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw JudgeError("prompt '" + tmpl.template_id + "' is missing slot '" + name + "'");
    }
    out += it->second;
    pos = hole + 2;
  }
  return out;
}

std::string canonical_key(std::string_view template_id,
                          const std::map<std::string, std::string>& slots) {
  std::string payload(template_id);
  payload += '\x1f';
  for (const auto& [name, value] : slots) {  // std::map iterates sorted
    payload += name;
    payload += '\x1e';
    payload += normalize_answer(value);
    payload += '\x1d';
  }
  return std::string(template_id) + ":" + hex64(fnv1a64(payload));
}

struct EvaluatorClient::State {
  ClientKind kind = ClientKind::scripted_mock;
  int parallelism = 1;

  // mock
  std::map<std::string, std::string> script;
  std::vector<std::pair<std::regex, std::string>> rules;

  // http
  HttpEndpoint endpoint;
  std::optional<std::filesystem::path> cache_dir;
  std::unique_ptr<Semaphore> gate;

  std::atomic<std::size_t> calls{0};
  std::mutex cache_mu;
};

EvaluatorClient EvaluatorClient::scripted_mock(const std::filesystem::path& script) {
  auto state = std::make_shared<State>();
  state->kind = ClientKind::scripted_mock;
  std::ifstream in(script, std::ios::binary);
  if (!in) throw JudgeError("cannot open mock script: " + script.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty()) continue;
    json j;
    try {
      j = json::parse(t);
    } catch (const json::exception& e) {
      throw JudgeError("mock script line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("response") || !j["response"].is_string()) {
      throw JudgeError("mock script line " + std::to_string(lineno) + ": missing 'response'");
    }
    std::string response = j["response"].get<std::string>();
    if (j.contains("key")) {
      state->script[j["key"].get<std::string>()] = response;
    } else if (j.contains("pattern")) {
      state->rules.emplace_back(std::regex(j["pattern"].get<std::string>()), response);
    } else {
      throw JudgeError("mock script line " + std::to_string(lineno) +
                       ": needs 'key' or 'pattern'");
    }
  }
  return EvaluatorClient(std::move(state));
}

EvaluatorClient EvaluatorClient::http_llm(HttpEndpoint endpoint, int parallelism,
                                          std::optional<std::filesystem::path> cache_dir) {
  auto state = std::make_shared<State>();
  state->kind = ClientKind::http_llm;
  state->endpoint = std::move(endpoint);
  state->parallelism = parallelism < 1 ? 1 : parallelism;
  state->cache_dir = std::move(cache_dir);
  state->gate = std::make_unique<Semaphore>(state->parallelism);
  if (state->cache_dir) std::filesystem::create_directories(*state->cache_dir);
  return EvaluatorClient(std::move(state));
}

std::string EvaluatorClient::query(const Query& q) {
  std::string key = canonical_key(q.template_id, q.slots);
  if (state_->kind == ClientKind::scripted_mock) {
    auto it = state_->script.find(key);
    if (it != state_->script.end()) {
      state_->calls.fetch_add(1, std::memory_order_relaxed);
      return it->second;
    }
    for (const auto& [pattern, response] : state_->rules) {
      if (std::regex_search(q.prompt, pattern)) {
        state_->calls.fetch_add(1, std::memory_order_relaxed);
        return response;
      }
    }
    throw MockMissError(key);
  }

  std::filesystem::path cache_file;
  if (state_->cache_dir) {
    cache_file = *state_->cache_dir / (hex64(fnv1a64(key)) + ".json");
    std::lock_guard lock(state_->cache_mu);
    std::ifstream in(cache_file, std::ios::binary);
    if (in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      try {
        json j = json::parse(ss.str());
        if (j.value("key", "") == key && j.contains("response")) {
          return j["response"].get<std::string>();
        }
      } catch (const json::exception&) {
        // unreadable cache entry: fall through and re-query
      }
    }
  }

  SemaphoreGuard guard(*state_->gate);
  httplib::Client client(state_->endpoint.host, state_->endpoint.port);
  client.set_connection_timeout(state_->endpoint.timeout_sec, 0);
  client.set_read_timeout(state_->endpoint.timeout_sec, 0);
  httplib::Headers headers;
  if (!state_->endpoint.auth_header.empty()) {
    headers.emplace(state_->endpoint.auth_header, state_->endpoint.auth_token);
  }
  json req{{"prompt", q.prompt}};
  auto res = client.Post(state_->endpoint.path, headers, req.dump(), "application/json");
  if (!res) {
    throw EvaluatorError("evaluator transport error at " + state_->endpoint.host + ":" +
                             std::to_string(state_->endpoint.port) + ": " +
                             httplib::to_string(res.error()),
                         /*retriable=*/true);
  }
  if (res->status != 200) {
    throw EvaluatorError("evaluator returned HTTP " + std::to_string(res->status),
                         /*retriable=*/res->status >= 500);
  }
  std::string text;
  try {
    json body = json::parse(res->body);
    if (!body.contains("text") || !body["text"].is_string()) {
      throw EvaluatorError("evaluator response lacks string 'text'", false);
    }
    text = body["text"].get<std::string>();
  } catch (const json::exception& e) {
    throw EvaluatorError(std::string("malformed evaluator response: ") + e.what(), false);
  }
  state_->calls.fetch_add(1, std::memory_order_relaxed);
  if (state_->cache_dir) {
    json entry{{"key", key}, {"response", text}};
    std::lock_guard lock(state_->cache_mu);
    std::ofstream out(cache_file, std::ios::binary | std::ios::trunc);
    out << entry.dump();
  }
  return text;
}

std::size_t EvaluatorClient::calls() const {
  return state_->calls.load(std::memory_order_relaxed);
}

int EvaluatorClient::parallelism() const { return state_->parallelism; }

ClientKind EvaluatorClient::kind() const { return state_->kind; }

Binary parse_binary(std::string_view raw) {
  std::string norm = normalize_answer(raw);
  std::string_view token(norm);
  if (auto space = token.find(' '); space != std::string_view::npos) {
    token = token.substr(0, space);
  }
  if (token == "yes") return Binary::yes;
  if (token == "no") return Binary::no;
  return Binary::na;
}

std::vector<std::string> likert_vocabulary(const LikertPhrasing& phrasing) {
  std::vector<std::string> vocab;
  if (phrasing.wording == LikertWording::confident) {
    vocab = {"very confident", "confident", "neither confident nor unconfident", "unconfident",
             "very unconfident"};
  } else {
    vocab = {"strongly agree", "agree", "neither agree nor disagree", "disagree",
             "strongly disagree"};
  }
  if (phrasing.neutral_mid) vocab[2] = "neutral";
  return vocab;
}

std::optional<int> parse_likert(std::string_view raw, const LikertPhrasing& phrasing) {
  std::string norm = normalize_answer(raw);
  std::vector<std::string> vocab = likert_vocabulary(phrasing);
  std::vector<std::size_t> order{0, 1, 2, 3, 4};
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return vocab[a].size() > vocab[b].size();  // longest phrase first
  });
  for (std::size_t idx : order) {
    const std::string& phrase = vocab[idx];
    if (norm == phrase || starts_with(norm, phrase + " ")) {
      return 5 - static_cast<int>(idx);
    }
  }
  return std::nullopt;
}

namespace {

json parsed_to_json(const ParsedResponse& parsed) {
  switch (parsed.kind) {
    case ParsedResponse::Kind::yes: return "yes";
    case ParsedResponse::Kind::no: return "no";
    case ParsedResponse::Kind::na: return "na";
    case ParsedResponse::Kind::likert: return parsed.likert;
    case ParsedResponse::Kind::text: return parsed.text;
  }
  return "na";
}

ParsedResponse parse_for(const PromptTemplate& tmpl, const std::string& raw) {
  ParsedResponse parsed;
  switch (tmpl.expected_response) {
    case ResponseKind::yes_no:
      switch (parse_binary(raw)) {
        case Binary::yes: parsed.kind = ParsedResponse::Kind::yes; break;
        case Binary::no: parsed.kind = ParsedResponse::Kind::no; break;
        case Binary::na: parsed.kind = ParsedResponse::Kind::na; break;
      }
      break;
    case ResponseKind::likert_5: {
      auto value = parse_likert(raw, tmpl.likert.value());
      if (value) {
        parsed.kind = ParsedResponse::Kind::likert;
        parsed.likert = *value;
      } else {
        parsed.kind = ParsedResponse::Kind::na;
      }
      break;
    }
    case ResponseKind::free_text:
    case ResponseKind::choice:
      parsed.kind = ParsedResponse::Kind::text;
      parsed.text = trim(raw);
      break;
  }
  return parsed;
}

}  // namespace

std::string judgment_to_jsonl_line(const JudgmentRecord& rec) {
  nlohmann::ordered_json j;
  j["judgment_id"] = rec.judgment_id;
  j["example_id"] = rec.example_id;
  j["template_id"] = rec.template_id;
  nlohmann::ordered_json slots = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rec.slots) slots[k] = v;
  j["slots"] = slots;
  j["raw_response"] = rec.raw_response;
  j["parsed"] = parsed_to_json(rec.parsed);
  return j.dump();
}

void write_judgments(const std::vector<JudgmentRecord>& records,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw JudgeError("cannot write judgments: " + path.string());
  for (const auto& rec : records) out << judgment_to_jsonl_line(rec) << '\n';
}

namespace {

std::vector<std::string> bucket_labels(ResponseKind kind) {
  if (kind == ResponseKind::yes_no) return {"yes", "no", "NA"};
  return {"5", "4", "3", "2", "1", "NA"};
}

std::string bucket_of(const ParsedResponse& parsed) {
  switch (parsed.kind) {
    case ParsedResponse::Kind::yes: return "yes";
    case ParsedResponse::Kind::no: return "no";
    case ParsedResponse::Kind::likert: return std::to_string(parsed.likert);
    default: return "NA";
  }
}

}  // namespace

SweepResult reflection_sweep(const Corpus& corpus, const ModelKey& model_key,
                             const std::vector<PromptTemplate>& variants,
                             EvaluatorClient& client, const EquivalenceOracle& oracle) {
  if (variants.empty()) throw JudgeError("reflection_sweep needs at least one prompt variant");
  for (const auto& v : variants) {
    if (v.expected_response != variants.front().expected_response) {
      throw JudgeError("all sweep variants must share one response kind");
    }
    if (v.expected_response != ResponseKind::yes_no &&
        v.expected_response != ResponseKind::likert_5) {
      throw JudgeError("sweep variant '" + v.template_id + "' must be yes_no or likert_5");
    }
  }

  SweepResult result;
  std::vector<std::string> labels = bucket_labels(variants.front().expected_response);
  for (const auto& tmpl : variants) {
    BucketStats stats;
    stats.prompt_variant_id = tmpl.template_id;
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // label -> count, correct
    for (const auto& id : corpus.example_ids()) {
      const PredictionRecord* pred = corpus.find(id, model_key);
      if (!pred) continue;
      const GoldRecord& gold = corpus.gold.at(id);
      Query q;
      q.template_id = tmpl.template_id;
      q.slots = {{"question", gold.question}, {"answer", pred->answer}};
      q.prompt = render_prompt(tmpl, q.slots);
      std::string raw;
      try {
        raw = client.query(q);
      } catch (const EvaluatorError& e) {
        result.failures.push_back(id + "/" + tmpl.template_id + ": " + e.what());
        continue;
      }
      JudgmentRecord rec;
      rec.judgment_id = id + "/" + tmpl.template_id;
      rec.example_id = id;
      rec.template_id = tmpl.template_id;
      rec.slots = q.slots;
      rec.raw_response = raw;
      rec.parsed = parse_for(tmpl, raw);
      std::string label = bucket_of(rec.parsed);
      auto& [count, correct] = tally[label];
      ++count;
      if (oracle.is_correct(pred->answer, gold.gold_answers)) ++correct;
      ++stats.n;
      result.judgments.push_back(std::move(rec));
    }
    for (const auto& label : labels) {
      BucketStat bucket;
      bucket.label = label;
      auto it = tally.find(label);
      if (it != tally.end() && it->second.first > 0) {
        bucket.count = it->second.first;
        bucket.accuracy = static_cast<double>(it->second.second) /
                          static_cast<double>(it->second.first);
      }
      stats.buckets.push_back(std::move(bucket));
    }
    result.variants.push_back(std::move(stats));
  }
  return result;
}

std::string_view to_string(ChooseStrategy strategy) {
  switch (strategy) {
    case ChooseStrategy::plain: return "plain";
    case ChooseStrategy::intermediate_steps: return "intermediate_steps";
    case ChooseStrategy::with_context: return "with_context";
  }
  return "plain";
}

std::optional<ChooseStrategy> choose_strategy_from_string(std::string_view s) {
  for (ChooseStrategy st : {ChooseStrategy::plain, ChooseStrategy::intermediate_steps,
                            ChooseStrategy::with_context}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

namespace {

JudgmentRecord make_choice_judgment(const std::string& example_id, const PromptTemplate& tmpl,
                                    const std::map<std::string, std::string>& slots,
                                    const std::string& raw) {
  JudgmentRecord rec;
  rec.judgment_id = example_id + "/" + tmpl.template_id;
  rec.example_id = example_id;
  rec.template_id = tmpl.template_id;
  rec.slots = slots;
  rec.raw_response = raw;
  rec.parsed = parse_for(tmpl, raw);
  return rec;
}

std::string run_choice_prompt(const GoldRecord& example, const PromptTemplate& tmpl,
                              const std::map<std::string, std::string>& slots,
                              EvaluatorClient& client, std::vector<JudgmentRecord>& judgments) {
  Query q;
  q.template_id = tmpl.template_id;
  q.slots = slots;
  q.prompt = render_prompt(tmpl, slots);
  std::string raw = client.query(q);
  judgments.push_back(make_choice_judgment(example.example_id, tmpl, slots, raw));
  return raw;
}

}  // namespace

ChooseResult select_best_answer(const GoldRecord& example,
                                const std::vector<std::pair<ModelKey, std::string>>& candidates,
                                ChooseStrategy strategy, EvaluatorClient& client,
                                const PromptRegistry& registry, const EquivalenceOracle& oracle,
                                const std::optional<std::string>& evidence) {
  std::vector<std::pair<ModelKey, std::string>> usable;
  for (const auto& c : candidates) {
    if (!normalize_answer(c.second).empty()) usable.push_back(c);
  }
  if (usable.empty()) throw JudgeError("select_best_answer needs a non-empty candidate");

  std::string joined;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    if (i) joined += ", ";
    joined += usable[i].second;
  }

  ChooseResult result;
  std::string response;
  switch (strategy) {
    case ChooseStrategy::plain: {
      const PromptTemplate& tmpl = registry.get(prompt_ids::choose_plain);
      response = run_choice_prompt(example, tmpl,
                                   {{"question", example.question}, {"all_answers", joined}},
                                   client, result.judgments);
      break;
    }
    case ChooseStrategy::intermediate_steps: {
      const PromptTemplate& step1 = registry.get(prompt_ids::choose_entity_step1);
      std::string entity_type = trim(run_choice_prompt(
          example, step1, {{"question", example.question}}, client, result.judgments));
      const PromptTemplate& step2 = registry.get(prompt_ids::choose_entity_step2);
      response = run_choice_prompt(example, step2,
                                   {{"question", example.question},
                                    {"answers", joined},
                                    {"entity_type", entity_type}},
                                   client, result.judgments);
      break;
    }
    case ChooseStrategy::with_context: {
      if (!evidence) throw JudgeError("with_context strategy requires evidence text");
      const PromptTemplate& step1 = registry.get(prompt_ids::choose_context_step1);
      std::string informative = trim(run_choice_prompt(
          example, step1, {{"question", example.question}, {"evidence", *evidence}}, client,
          result.judgments));
      const PromptTemplate& step2 = registry.get(prompt_ids::choose_context_step2);
      response = run_choice_prompt(example, step2,
                                   {{"question", example.question},
                                    {"responses", joined},
                                    {"informative_answer", informative}},
                                   client, result.judgments);
      break;
    }
  }

  EnsembleChoice& choice = result.choice;
  choice.example_id = example.example_id;
  choice.method = Method::choose_best;
  choice.detail["strategy"] = std::string(to_string(strategy));
  choice.detail["response"] = trim(response);

  const std::pair<ModelKey, std::string>* matched = nullptr;
  std::string norm_response = normalize_answer(response);
  for (const auto& c : usable) {
    if (normalize_answer(c.second) == norm_response) {
      matched = &c;
      break;
    }
  }
  if (!matched) {
    for (const auto& c : usable) {
      if (oracle.verdict(response, c.second).equivalent) {
        matched = &c;
        choice.detail["soft_matched"] = "true";
        break;
      }
    }
  }
  if (!matched) {
    matched = &usable.front();
    choice.detail["unmatched_response"] = "true";
  }
  choice.chosen = matched->first;
  choice.answer = matched->second;
  return result;
}

}  // namespace enseval
