#include "enseval/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "enseval/util.hpp"

namespace enseval {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Augmentation aug) {
  switch (aug) {
    case Augmentation::vanilla: return "vanilla";
    case Augmentation::promptcap: return "promptcap";
    case Augmentation::lens: return "lens";
  }
  return "vanilla";
}

std::optional<Augmentation> augmentation_from_string(std::string_view s) {
  if (s == "vanilla") return Augmentation::vanilla;
  if (s == "promptcap") return Augmentation::promptcap;
  if (s == "lens") return Augmentation::lens;
  return std::nullopt;
}

std::string ModelKey::label() const {
  return model_id + "/" + std::string(to_string(augmentation));
}

std::optional<ModelKey> parse_model_key(std::string_view label) {
  auto slash = label.rfind('/');
  if (slash == std::string_view::npos || slash == 0) return std::nullopt;
  auto aug = augmentation_from_string(label.substr(slash + 1));
  if (!aug) return std::nullopt;
  return ModelKey{std::string(label.substr(0, slash)), *aug};
}

std::size_t ModelPriority::augmentation_rank(Augmentation aug) const {
  for (std::size_t i = 0; i < augmentation_order.size(); ++i) {
    if (augmentation_order[i] == aug) return i;
  }
  return augmentation_order.size();
}

std::size_t ModelPriority::model_rank(const std::string& model_id) const {
  for (std::size_t i = 0; i < model_order.size(); ++i) {
    if (model_order[i] == model_id) return i;
  }
  return model_order.size();
}

bool ModelPriority::less(const ModelKey& a, const ModelKey& b) const {
  auto ar = augmentation_rank(a.augmentation);
  auto br = augmentation_rank(b.augmentation);
  if (ar != br) return ar < br;
  if (a.augmentation != b.augmentation) return a.augmentation < b.augmentation;
  auto am = model_rank(a.model_id);
  auto bm = model_rank(b.model_id);
  if (am != bm) return am < bm;
  return a.model_id < b.model_id;
}

std::vector<ModelKey> ModelPriority::sorted(std::vector<ModelKey> keys) const {
  std::sort(keys.begin(), keys.end(),
            [this](const ModelKey& a, const ModelKey& b) { return less(a, b); });
  return keys;
}

const PredictionRecord* Corpus::find(const std::string& example_id, const ModelKey& key) const {
  auto it = predictions.find(example_id);
  if (it == predictions.end()) return nullptr;
  auto jt = it->second.find(key);
  if (jt == it->second.end()) return nullptr;
  return &jt->second;
}

std::vector<std::string> Corpus::example_ids() const {
  std::vector<std::string> ids;
  ids.reserve(gold.size());
  for (const auto& [id, rec] : gold) ids.push_back(id);
  return ids;  // std::map iterates sorted
}

std::size_t Corpus::prediction_count() const {
  std::size_t n = 0;
  for (const auto& [id, by_key] : predictions) n += by_key.size();
  return n;
}

double Corpus::completeness() const {
  std::size_t denom = gold.size() * model_keys.size();
  if (denom == 0) return 1.0;
  std::size_t present = 0;
  for (const auto& [id, rec] : gold) {
    auto it = predictions.find(id);
    if (it == predictions.end()) continue;
    for (const auto& key : model_keys) {
      if (it->second.count(key)) ++present;
    }
  }
  return static_cast<double>(present) / static_cast<double>(denom);
}

void Corpus::refresh_model_keys() {
  std::set<ModelKey> seen;
  for (const auto& [id, by_key] : predictions) {
    for (const auto& [key, rec] : by_key) seen.insert(key);
  }
  model_keys = priority.sorted(std::vector<ModelKey>(seen.begin(), seen.end()));
}

namespace {

json parse_line(const std::string& line, int lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw CorpusError(std::string("malformed JSON: ") + e.what(), lineno);
  }
}

std::string require_string(const json& j, const char* field, int lineno) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw CorpusError(std::string("missing or non-string field '") + field + "'", lineno);
  }
  return j[field].get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* field, int lineno) {
  if (!j.contains(field) || j[field].is_null()) return std::nullopt;
  if (!j[field].is_string()) {
    throw CorpusError(std::string("field '") + field + "' must be a string or null", lineno);
  }
  return j[field].get<std::string>();
}

void collect_extra(const json& j, const std::set<std::string>& known,
                   std::map<std::string, std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) out[key] = value.dump();
  }
}

GoldRecord parse_gold(const json& j, int lineno) {
  GoldRecord rec;
  rec.line = lineno;
  rec.example_id = require_string(j, "example_id", lineno);
  rec.question = require_string(j, "question", lineno);
  rec.image_ref = require_string(j, "image_ref", lineno);
  if (!j.contains("gold_answers") || !j["gold_answers"].is_array()) {
    throw CorpusError("missing or non-array field 'gold_answers'", lineno);
  }
  for (const auto& a : j["gold_answers"]) {
    if (!a.is_string()) throw CorpusError("gold_answers entries must be strings", lineno);
    rec.gold_answers.push_back(a.get<std::string>());
  }
  if (rec.gold_answers.empty()) {
    throw CorpusError("gold_answers must be non-empty for '" + rec.example_id + "'", lineno);
  }
  for (const auto& a : rec.gold_answers) {
    if (trim(a).empty()) {
      throw CorpusError("gold answer blank after trim for '" + rec.example_id + "'", lineno);
    }
  }
  collect_extra(j, {"example_id", "question", "image_ref", "gold_answers"}, rec.extra);
  return rec;
}

PredictionRecord parse_prediction(const json& j, int lineno) {
  PredictionRecord rec;
  rec.line = lineno;
  rec.example_id = require_string(j, "example_id", lineno);
  rec.model_id = require_string(j, "model_id", lineno);
  auto aug = augmentation_from_string(require_string(j, "augmentation", lineno));
  if (!aug) throw CorpusError("unknown augmentation value", lineno);
  rec.augmentation = *aug;
  rec.answer = require_string(j, "answer", lineno);
  if (!j.contains("seq_logprob") || !j["seq_logprob"].is_number()) {
    throw CorpusError("missing or non-numeric field 'seq_logprob'", lineno);
  }
  rec.seq_logprob = j["seq_logprob"].get<double>();
  if (!j.contains("token_count") || !j["token_count"].is_number_integer()) {
    throw CorpusError("missing or non-integer field 'token_count'", lineno);
  }
  rec.token_count = j["token_count"].get<int>();
  rec.lens_entity = optional_string(j, "lens_entity", lineno);
  rec.context = optional_string(j, "context", lineno);
  rec.caption = optional_string(j, "caption", lineno);

  if (rec.seq_logprob > 0.0) {
    throw CorpusError("seq_logprob must be <= 0, got " + format_double(rec.seq_logprob), lineno);
  }
  if (rec.token_count < 1) {
    throw CorpusError("token_count must be >= 1, got " + std::to_string(rec.token_count), lineno);
  }
  if (rec.augmentation != Augmentation::lens) {
    if (rec.context) {
      throw CorpusError("context is only legal on lens predictions", lineno);
    }
    if (rec.lens_entity) {
      throw CorpusError("lens_entity is only legal on lens predictions", lineno);
    }
  }
  if (rec.augmentation != Augmentation::promptcap && rec.caption) {
    throw CorpusError("caption is only legal on promptcap predictions", lineno);
  }
  collect_extra(j,
                {"example_id", "model_id", "augmentation", "answer", "seq_logprob", "token_count",
                 "lens_entity", "context", "caption"},
                rec.extra);
  return rec;
}

template <typename Fn>
void for_each_jsonl_line(std::string_view text, Fn&& fn) {
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw =
        nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    ++lineno;
    std::string line(trim(raw));
    if (!line.empty()) fn(line, lineno);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_extras(ordered_json& j, const std::map<std::string, std::string>& extra) {
  for (const auto& [key, value] : extra) j[key] = json::parse(value);
}

}  // namespace

GoldLoad load_gold_from_string(std::string_view text) {
  GoldLoad out;
  for_each_jsonl_line(text, [&](const std::string& line, int lineno) {
    GoldRecord rec = parse_gold(parse_line(line, lineno), lineno);
    if (out.gold.count(rec.example_id)) {
      throw CorpusError("duplicate example_id '" + rec.example_id + "'", lineno);
    }
    out.gold.emplace(rec.example_id, std::move(rec));
  });
  if (out.gold.empty()) out.warnings.push_back("gold file contained no records");
  return out;
}

GoldLoad load_gold(const std::filesystem::path& path) {
  return load_gold_from_string(read_file(path));
}

PredictionLoad load_predictions_from_string(std::string_view text,
                                            std::map<std::string, GoldRecord> gold,
                                            ModelPriority priority) {
  PredictionLoad out;
  out.corpus.gold = std::move(gold);
  out.corpus.priority = std::move(priority);
  for_each_jsonl_line(text, [&](const std::string& line, int lineno) {
    PredictionRecord rec = parse_prediction(parse_line(line, lineno), lineno);
    if (!out.corpus.gold.count(rec.example_id)) {
      out.rejects.push_back(
          {lineno, "prediction for unknown example_id '" + rec.example_id + "'"});
      return;
    }
    auto& by_key = out.corpus.predictions[rec.example_id];
    ModelKey key = rec.key();
    if (by_key.count(key)) {
      throw CorpusError(
          "duplicate prediction for ('" + rec.example_id + "', " + key.label() + ")", lineno);
    }
    by_key.emplace(std::move(key), std::move(rec));
  });
  out.corpus.refresh_model_keys();
  if (out.corpus.prediction_count() == 0) {
    out.warnings.push_back("prediction file contained no usable records");
  }
  return out;
}

PredictionLoad load_predictions(const std::filesystem::path& path,
                                std::map<std::string, GoldRecord> gold, ModelPriority priority) {
  return load_predictions_from_string(read_file(path), std::move(gold), std::move(priority));
}

std::string gold_to_jsonl_line(const GoldRecord& rec) {
  ordered_json j;
  j["example_id"] = rec.example_id;
  j["question"] = rec.question;
  j["image_ref"] = rec.image_ref;
  j["gold_answers"] = rec.gold_answers;
  append_extras(j, rec.extra);
  return j.dump();
}

std::string prediction_to_jsonl_line(const PredictionRecord& rec) {
  ordered_json j;
  j["example_id"] = rec.example_id;
  j["model_id"] = rec.model_id;
  j["augmentation"] = std::string(to_string(rec.augmentation));
  j["answer"] = rec.answer;
  j["seq_logprob"] = rec.seq_logprob;
  j["token_count"] = rec.token_count;
  j["lens_entity"] = rec.lens_entity ? json(*rec.lens_entity) : json(nullptr);
  j["context"] = rec.context ? json(*rec.context) : json(nullptr);
  j["caption"] = rec.caption ? json(*rec.caption) : json(nullptr);
  append_extras(j, rec.extra);
  return j.dump();
}

void save_gold(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write file: " + path.string());
  for (const auto& [id, rec] : corpus.gold) out << gold_to_jsonl_line(rec) << '\n';
}

void save_predictions(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write file: " + path.string());
  for (const auto& [id, by_key] : corpus.predictions) {
    for (const auto& [key, rec] : by_key) out << prediction_to_jsonl_line(rec) << '\n';
  }
}

std::vector<std::vector<std::string>> split_folds(const Corpus& corpus, int k,
                                                  std::uint64_t seed) {
  if (k < 2) throw CorpusError("fold count must be at least 2, got " + std::to_string(k));
  std::vector<std::string> ids = corpus.example_ids();
  if (static_cast<std::size_t>(k) > ids.size()) {
    throw CorpusError("fold count " + std::to_string(k) + " exceeds example count " +
                      std::to_string(ids.size()));
  }
  Rng rng(seed);
  rng.shuffle(ids);
  std::size_t n = ids.size();
  std::size_t base = n / static_cast<std::size_t>(k);
  std::size_t rem = n % static_cast<std::size_t>(k);
  std::vector<std::vector<std::string>> folds;
  folds.reserve(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
    std::size_t take = base + (f < rem ? 1 : 0);
    std::vector<std::string> fold(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                                  ids.begin() + static_cast<std::ptrdiff_t>(pos + take));
    std::sort(fold.begin(), fold.end());
    folds.push_back(std::move(fold));
    pos += take;
  }
  return folds;
}

}  // namespace enseval
