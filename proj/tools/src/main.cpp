// enseval: offline ensemble evaluation over recorded prediction logs.
// Subcommands: validate (corpus checks), run (method -> report bundle),
// synth (generate a corpus from planted rates), report (re-table choice files).
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "enseval/calib.hpp"
#include "enseval/cascade.hpp"
#include "enseval/corpus.hpp"
#include "enseval/fuse.hpp"
#include "enseval/judge.hpp"
#include "enseval/match.hpp"
#include "enseval/report.hpp"
#include "enseval/synth.hpp"
#include "enseval/toml.hpp"
#include "enseval/util.hpp"

namespace fs = std::filesystem;
using namespace enseval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

// Raised during the validation phase (config, paths, corpus schema).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path candidate(p);
  if (candidate.is_absolute()) return candidate;
  return base / candidate;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_string(const toml::Table& config, const std::string& key) {
  auto v = toml::get_string(config, key);
  if (!v) throw ConfigError("config is missing '" + key + "'");
  return *v;
}

ModelKey require_model_key(const std::string& label, const std::string& what) {
  auto key = parse_model_key(label);
  if (!key) throw ConfigError("bad model label for " + what + ": '" + label + "'");
  return *key;
}

struct LoadedCorpus {
  Corpus corpus;
  fs::path gold_path;
  fs::path predictions_path;
  std::vector<std::string> warnings;
};

LoadedCorpus load_corpus(const toml::Table& config, const fs::path& base) {
  LoadedCorpus out;
  out.gold_path = resolve(base, require_string(config, "corpus.gold"));
  out.predictions_path = resolve(base, require_string(config, "corpus.predictions"));
  // fail on a missing predictions file before any parsing work
  if (!fs::exists(out.predictions_path))
    throw ConfigError("predictions file not found: " + out.predictions_path.string());
  if (!fs::exists(out.gold_path))
    throw ConfigError("gold file not found: " + out.gold_path.string());
  GoldLoad gold = load_gold(out.gold_path);
  out.warnings = gold.warnings;
  PredictionLoad preds = load_predictions(out.predictions_path, std::move(gold.gold));
  for (const auto& issue : preds.rejects)
    out.warnings.push_back("line " + std::to_string(issue.line) + ": " + issue.message);
  for (const auto& w : preds.warnings) out.warnings.push_back(w);
  out.corpus = std::move(preds.corpus);
  return out;
}

EquivalenceOracle build_oracle(const toml::Table& config, const fs::path& base) {
  std::string kind = toml::get_string(config, "oracle.kind").value_or("exact");
  if (kind == "exact") return EquivalenceOracle::exact();
  if (kind == "synonyms") {
    auto path = toml::get_string(config, "oracle.synonyms");
    if (!path) throw ConfigError("oracle.kind = \"synonyms\" needs oracle.synonyms");
    fs::path resolved = resolve(base, *path);
    if (!fs::exists(resolved))
      throw ConfigError("synonym table not found: " + resolved.string());
    return EquivalenceOracle::synonym_table_from_file(resolved);
  }
  if (kind == "semantic") {
    SemanticEndpoint ep;
    ep.host = toml::get_string(config, "oracle.host").value_or(ep.host);
    ep.port = static_cast<int>(toml::get_int(config, "oracle.port").value_or(0));
    ep.path = toml::get_string(config, "oracle.path").value_or(ep.path);
    ep.timeout_sec =
        static_cast<int>(toml::get_int(config, "oracle.timeout").value_or(ep.timeout_sec));
    if (ep.port <= 0) throw ConfigError("oracle.kind = \"semantic\" needs oracle.port");
    double threshold = toml::get_double(config, "oracle.threshold").value_or(0.5);
    int par = static_cast<int>(toml::get_int(config, "oracle.parallelism").value_or(4));
    return EquivalenceOracle::semantic_client(ep, threshold, par);
  }
  throw ConfigError("unknown oracle.kind '" + kind + "'");
}

std::vector<ModelKey> build_subset(const toml::Table& config, const Corpus& corpus) {
  std::vector<std::string> labels = toml::get_string_array(config, "run.models");
  if (labels.empty()) return corpus.model_keys;
  std::vector<ModelKey> subset;
  for (const auto& label : labels) {
    ModelKey key = require_model_key(label, "run.models");
    bool present = false;
    for (const auto& k : corpus.model_keys) present = present || k == key;
    if (!present) throw ConfigError("model '" + label + "' has no predictions in the corpus");
    subset.push_back(key);
  }
  return subset;
}

PromptRegistry load_registry(const toml::Table& config, const fs::path& base,
                             fs::path* path_out) {
  auto path = toml::get_string(config, "evaluator.prompts");
  if (!path) throw ConfigError("this method needs evaluator.prompts");
  fs::path resolved = resolve(base, *path);
  if (!fs::exists(resolved)) throw ConfigError("prompt file not found: " + resolved.string());
  if (path_out) *path_out = resolved;
  return PromptRegistry::load(resolved);
}

EvaluatorClient build_client(const toml::Table& config, const fs::path& base, int parallelism,
                             fs::path* script_out) {
  std::string kind = toml::get_string(config, "evaluator.kind").value_or("mock");
  if (kind == "mock") {
    auto script = toml::get_string(config, "evaluator.script");
    if (!script) throw ConfigError("evaluator.kind = \"mock\" needs evaluator.script");
    fs::path resolved = resolve(base, *script);
    if (!fs::exists(resolved))
      throw ConfigError("evaluator script not found: " + resolved.string());
    if (script_out) *script_out = resolved;
    return EvaluatorClient::scripted_mock(resolved);
  }
  if (kind == "http") {
    HttpEndpoint ep;
    ep.host = toml::get_string(config, "evaluator.host").value_or(ep.host);
    ep.port = static_cast<int>(toml::get_int(config, "evaluator.port").value_or(0));
    ep.path = toml::get_string(config, "evaluator.path").value_or(ep.path);
    ep.timeout_sec =
        static_cast<int>(toml::get_int(config, "evaluator.timeout").value_or(ep.timeout_sec));
    ep.auth_header = toml::get_string(config, "evaluator.auth_header").value_or("");
    // secrets come from the environment, never from the config file
    if (const char* endpoint = std::getenv("ENSEVAL_EVALUATOR_ENDPOINT")) {
      std::string s = endpoint;
      auto slash = s.find('/');
      std::string hostport = slash == std::string::npos ? s : s.substr(0, slash);
      if (slash != std::string::npos) ep.path = s.substr(slash);
      auto colon = hostport.rfind(':');
      if (colon == std::string::npos)
        throw ConfigError("ENSEVAL_EVALUATOR_ENDPOINT must look like host:port[/path]");
      ep.host = hostport.substr(0, colon);
      auto port = parse_int(hostport.substr(colon + 1));
      if (!port || *port <= 0)
        throw ConfigError("ENSEVAL_EVALUATOR_ENDPOINT has a bad port");
      ep.port = static_cast<int>(*port);
    }
    if (const char* token = std::getenv("ENSEVAL_EVALUATOR_AUTH_TOKEN")) {
      ep.auth_token = token;
      if (ep.auth_header.empty()) ep.auth_header = "Authorization";
    }
    if (ep.port <= 0) throw ConfigError("evaluator.kind = \"http\" needs evaluator.port");
    std::optional<fs::path> cache;
    if (auto dir = toml::get_string(config, "evaluator.cache")) cache = resolve(base, *dir);
    return EvaluatorClient::http_llm(ep, parallelism, cache);
  }
  throw ConfigError("unknown evaluator.kind '" + kind + "'");
}

void write_choices(const std::vector<EnsembleChoice>& choices, const fs::path& path) {
  std::string out;
  for (const auto& c : choices) {
    out += choice_to_jsonl_line(c);
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<EnsembleChoice> read_choices(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<EnsembleChoice> choices;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": bad JSON");
    EnsembleChoice c;
    c.example_id = j.value("example_id", "");
    c.answer = j.value("answer", "");
    auto method = method_from_string(j.value("method", ""));
    if (!method)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown method");
    c.method = *method;
    auto aug = augmentation_from_string(j.value("augmentation", ""));
    if (!aug)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown augmentation");
    c.chosen = ModelKey{j.value("model_id", ""), *aug};
    if (j.contains("detail") && j["detail"].is_object())
      for (const auto& [k, v] : j["detail"].items())
        c.detail[k] = v.is_string() ? v.get<std::string>() : v.dump();
    choices.push_back(std::move(c));
  }
  return choices;
}

// Table-style bundle output: one row per subset member plus the method row,
// deltas against the strongest single model.
AccuracyTable build_run_table(const Corpus& corpus, const std::vector<ModelKey>& subset,
                              const EquivalenceOracle& oracle, const std::string& method_label,
                              const SelectionResult& result, bool oracle_row) {
  std::vector<TableEntry> entries;
  for (const auto& key : subset) {
    TableEntry e;
    e.label = key.label();
    e.model = key;
    e.method = "single";
    entries.push_back(std::move(e));
  }
  TableEntry method_entry;
  method_entry.label = method_label;
  method_entry.choices = result.choices;
  method_entry.method = method_label;
  method_entry.oracle = oracle_row;
  entries.push_back(std::move(method_entry));

  AccuracyTable unscored = accuracy_table(entries, corpus, oracle);
  std::string baseline;
  double best = -1.0;
  for (const auto& row : unscored.rows) {
    if (row.method == "single" && row.accuracy > best) {
      best = row.accuracy;
      baseline = row.label;
    }
  }
  return accuracy_table(entries, corpus, oracle, baseline);
}

struct RunContext {
  fs::path config_path;
  fs::path base;
  toml::Table config;
  std::string config_text;
  std::uint64_t seed = 0;
  std::string method;
  fs::path out_dir;
  LoadedCorpus loaded;
  EquivalenceOracle oracle = EquivalenceOracle::exact();
  std::vector<ModelKey> subset;
  int parallelism = 1;
  Manifest manifest;
};

RunContext prepare_run(const std::string& config_arg, std::optional<std::uint64_t> seed_flag,
                       const std::string& out_flag, const std::string& method_flag) {
  RunContext ctx;
  ctx.config_path = fs::path(config_arg);
  if (!fs::exists(ctx.config_path))
    throw ConfigError("config file not found: " + ctx.config_path.string());
  ctx.base = ctx.config_path.parent_path();
  ctx.config_text = read_file(ctx.config_path);
  ctx.config = toml::parse(ctx.config_text);

  if (seed_flag) {
    ctx.seed = *seed_flag;
  } else if (auto s = toml::get_int(ctx.config, "run.seed")) {
    ctx.seed = static_cast<std::uint64_t>(*s);
  } else {
    throw ConfigError("a seed is required: pass --seed or set run.seed");
  }

  ctx.method = !method_flag.empty()
                   ? method_flag
                   : toml::get_string(ctx.config, "run.method").value_or("");
  if (ctx.method.empty()) throw ConfigError("a method is required: pass --method or run.method");

  std::string out = !out_flag.empty()
                        ? out_flag
                        : toml::get_string(ctx.config, "run.out").value_or("");
  if (out.empty()) throw ConfigError("an output directory is required: pass --out or run.out");
  ctx.out_dir = resolve(fs::current_path(), out);

  ctx.loaded = load_corpus(ctx.config, ctx.base);
  ctx.oracle = build_oracle(ctx.config, ctx.base);
  ctx.subset = build_subset(ctx.config, ctx.loaded.corpus);
  ctx.parallelism = static_cast<int>(toml::get_int(ctx.config, "run.parallelism").value_or(1));
  if (ctx.parallelism < 1) throw ConfigError("run.parallelism must be >= 1");

  ctx.manifest.config_hash = hex64(fnv1a64(ctx.config_text));
  ctx.manifest.seed = ctx.seed;
  ctx.manifest.inputs.emplace_back("config", ctx.config_path.generic_string());
  ctx.manifest.inputs.emplace_back("gold", ctx.loaded.gold_path.generic_string());
  ctx.manifest.inputs.emplace_back("predictions", ctx.loaded.predictions_path.generic_string());
  return ctx;
}

FeatureSpec meta_feature_spec(const toml::Table& config) {
  FeatureSpec spec;
  spec.zscore = toml::get_bool(config, "meta.zscore").value_or(false);
  spec.sqrt = toml::get_bool(config, "meta.sqrt").value_or(false);
  if (auto p = toml::get_double(config, "meta.power")) spec.power = *p;
  spec.pairwise_products = toml::get_bool(config, "meta.pairwise").value_or(false);
  spec.missing_mask = toml::get_bool(config, "meta.missing_mask").value_or(true);
  return spec;
}

LogRegHyper meta_hyper(const toml::Table& config, std::uint64_t seed) {
  LogRegHyper hyper;
  hyper.learning_rate = toml::get_double(config, "meta.lr").value_or(hyper.learning_rate);
  hyper.l2 = toml::get_double(config, "meta.l2").value_or(hyper.l2);
  hyper.max_iterations =
      static_cast<int>(toml::get_int(config, "meta.max_iterations").value_or(5000));
  hyper.tolerance = toml::get_double(config, "meta.tolerance").value_or(hyper.tolerance);
  hyper.seed = seed;
  return hyper;
}

void execute_run(RunContext& ctx) {
  const Corpus& corpus = ctx.loaded.corpus;
  fs::create_directories(ctx.out_dir);
  bool use_normalized = toml::get_bool(ctx.config, "run.use_normalized").value_or(true);

  std::optional<SelectionResult> result;
  std::string method_label = ctx.method;
  bool oracle_row = false;

  if (ctx.method == "oracle") {
    result = oracle_select(corpus, ctx.subset, ctx.oracle, ctx.seed);
    oracle_row = true;
  } else if (ctx.method == "majority") {
    result = majority_vote(corpus, ctx.subset, ctx.oracle);
  } else if (ctx.method == "max_prob") {
    result = score_choices(corpus, max_prob_select(corpus, ctx.subset, use_normalized),
                           ctx.oracle);
  } else if (ctx.method == "weighted_vote") {
    result = score_choices(corpus,
                           weighted_vote(corpus, ctx.subset, ctx.oracle, use_normalized),
                           ctx.oracle);
  } else if (ctx.method == "meta") {
    std::vector<ModelKey> classes = ctx.subset;
    std::vector<std::string> labels = toml::get_string_array(ctx.config, "meta.classes");
    if (!labels.empty()) {
      classes.clear();
      for (const auto& label : labels)
        classes.push_back(require_model_key(label, "meta.classes"));
    }
    int folds = static_cast<int>(toml::get_int(ctx.config, "meta.folds").value_or(5));
    CrossValResult cv = cross_validate_meta(corpus, classes, folds, meta_feature_spec(ctx.config),
                                            meta_hyper(ctx.config, ctx.seed), ctx.oracle,
                                            ctx.seed);
    result = cv.result;
  } else if (ctx.method == "two_step") {
    ModelKey lens = require_model_key(
        toml::get_string(ctx.config, "cascade.lens").value_or("palm/lens"), "cascade.lens");
    ModelKey pcap = require_model_key(
        toml::get_string(ctx.config, "cascade.promptcap").value_or("palm/promptcap"),
        "cascade.promptcap");
    result = run_two_step_cascade(corpus, lens, pcap, ctx.oracle);
  } else if (ctx.method == "cascade") {
    CascadeConfig cc;
    if (auto path = toml::get_string(ctx.config, "cascade.config")) {
      cc = load_cascade_config(resolve(ctx.base, *path));
    } else {
      cc = default_cascade_config(
          toml::get_bool(ctx.config, "cascade.include_vanilla").value_or(true));
    }
    if (auto ex = toml::get_bool(ctx.config, "cascade.exhaustive")) cc.exhaustive_judgments = *ex;
    fs::path prompts_path, script_path;
    PromptRegistry registry = load_registry(ctx.config, ctx.base, &prompts_path);
    EvaluatorClient client = build_client(ctx.config, ctx.base, ctx.parallelism, &script_path);
    ctx.manifest.inputs.emplace_back("prompts", prompts_path.generic_string());
    if (!script_path.empty())
      ctx.manifest.inputs.emplace_back("evaluator_script", script_path.generic_string());

    CascadeResult cascade =
        run_cascade(corpus, cc, client, registry, ctx.oracle, ctx.parallelism);
    write_traces(cascade.traces, ctx.out_dir / "traces.jsonl");
    write_judgments(cascade.judgments, ctx.out_dir / "judgments.jsonl");
    SelectionResult scored;
    scored.choices = cascade.choices;
    scored.accuracy = cascade.accuracy;
    scored.n = cascade.n;
    result = scored;
  } else if (ctx.method == "reflection") {
    ModelKey model = require_model_key(require_string(ctx.config, "reflection.model"),
                                       "reflection.model");
    fs::path prompts_path, script_path;
    PromptRegistry registry = load_registry(ctx.config, ctx.base, &prompts_path);
    EvaluatorClient client = build_client(ctx.config, ctx.base, ctx.parallelism, &script_path);
    ctx.manifest.inputs.emplace_back("prompts", prompts_path.generic_string());
    if (!script_path.empty())
      ctx.manifest.inputs.emplace_back("evaluator_script", script_path.generic_string());

    std::vector<std::string> ids = toml::get_string_array(ctx.config, "reflection.variants");
    if (ids.empty()) throw ConfigError("reflection.variants must list prompt ids");
    std::vector<PromptTemplate> variants;
    for (const auto& id : ids) variants.push_back(registry.get(id));

    SweepResult sweep = reflection_sweep(corpus, model, variants, client, ctx.oracle);
    write_judgments(sweep.judgments, ctx.out_dir / "judgments.jsonl");
    write_text_file(ctx.out_dir / "buckets.csv", buckets_to_csv(sweep.variants));
    emit_likert_svg(sweep.variants, ctx.out_dir / "distribution.svg");
    if (!sweep.failures.empty()) {
      std::string log;
      for (const auto& f : sweep.failures) log += f + "\n";
      write_text_file(ctx.out_dir / "failures.txt", log);
    }
    ctx.manifest.generated_at = utc_timestamp();
    write_text_file(ctx.out_dir / "manifest.json", manifest_json(ctx.manifest));
    std::cout << "wrote reflection sweep for " << model.label() << " over " << ids.size()
              << " variants to " << ctx.out_dir.string() << "\n";
    return;
  } else if (ctx.method == "calibration") {
    ModelKey model = require_model_key(require_string(ctx.config, "calibration.model"),
                                       "calibration.model");
    TemperatureGrid grid;
    grid.t_min = toml::get_double(ctx.config, "calibration.grid_min").value_or(grid.t_min);
    grid.t_max = toml::get_double(ctx.config, "calibration.grid_max").value_or(grid.t_max);
    grid.points =
        static_cast<int>(toml::get_int(ctx.config, "calibration.grid_points").value_or(201));
    if (auto spacing = toml::get_string(ctx.config, "calibration.grid_spacing")) {
      if (*spacing == "linear") grid.spacing = TemperatureGrid::Spacing::linear;
      else if (*spacing == "log") grid.spacing = TemperatureGrid::Spacing::log_spaced;
      else throw ConfigError("unknown calibration.grid_spacing '" + *spacing + "'");
    }
    if (auto obj = toml::get_string(ctx.config, "calibration.objective")) {
      if (*obj == "brier") grid.objective = TemperatureGrid::Objective::brier;
      else if (*obj == "ece") grid.objective = TemperatureGrid::Objective::ece;
      else throw ConfigError("unknown calibration.objective '" + *obj + "'");
    }
    int bins = static_cast<int>(toml::get_int(ctx.config, "calibration.bins").value_or(10));
    bool norm = toml::get_bool(ctx.config, "calibration.normalized").value_or(true);
    std::optional<HoldoutSpec> holdout;
    if (auto frac = toml::get_double(ctx.config, "calibration.holdout_fraction"))
      holdout = HoldoutSpec{*frac, ctx.seed};

    CalibrationReport report =
        calibration_report(corpus, model, ctx.oracle, grid, bins, norm, holdout);
    write_text_file(ctx.out_dir / "calibration.json", calibration_report_json(report));
    write_text_file(ctx.out_dir / "bins_raw.csv", bins_to_csv(report.bins));
    write_text_file(ctx.out_dir / "reliability_raw.svg",
                    reliability_svg(report.bins, model.label()));
    if (!report.bins_recal.empty()) {
      write_text_file(ctx.out_dir / "bins_recalibrated.csv", bins_to_csv(report.bins_recal));
      write_text_file(ctx.out_dir / "reliability_recalibrated.svg",
                      reliability_svg(report.bins_recal, model.label() + " (recalibrated)"));
    }
    ctx.manifest.generated_at = utc_timestamp();
    write_text_file(ctx.out_dir / "manifest.json", manifest_json(ctx.manifest));
    std::cout << "wrote calibration report for " << model.label() << " to "
              << ctx.out_dir.string() << "\n";
    return;
  } else if (ctx.method == "choose_best") {
    auto strategy = choose_strategy_from_string(
        toml::get_string(ctx.config, "choose_best.strategy").value_or("plain"));
    if (!strategy) throw ConfigError("unknown choose_best.strategy");
    fs::path prompts_path, script_path;
    PromptRegistry registry = load_registry(ctx.config, ctx.base, &prompts_path);
    EvaluatorClient client = build_client(ctx.config, ctx.base, ctx.parallelism, &script_path);
    ctx.manifest.inputs.emplace_back("prompts", prompts_path.generic_string());
    if (!script_path.empty())
      ctx.manifest.inputs.emplace_back("evaluator_script", script_path.generic_string());

    std::vector<EnsembleChoice> choices;
    std::vector<JudgmentRecord> judgments;
    for (const auto& example_id : corpus.example_ids()) {
      const GoldRecord& example = corpus.gold.at(example_id);
      std::vector<std::pair<ModelKey, std::string>> candidates;
      std::optional<std::string> evidence;
      auto it = corpus.predictions.find(example_id);
      if (it == corpus.predictions.end()) continue;
      for (const auto& key : ctx.subset) {
        auto pit = it->second.find(key);
        if (pit == it->second.end()) continue;
        candidates.emplace_back(key, pit->second.answer);
        if (!evidence && pit->second.context) evidence = pit->second.context;
      }
      if (candidates.empty()) continue;
      bool usable = false;
      for (const auto& [key, answer] : candidates)
        usable = usable || !normalize_answer(answer).empty();
      if (!usable) continue;
      ChooseResult chosen = select_best_answer(example, candidates, *strategy, client, registry,
                                               ctx.oracle, evidence);
      choices.push_back(std::move(chosen.choice));
      for (auto& j : chosen.judgments) judgments.push_back(std::move(j));
    }
    write_judgments(judgments, ctx.out_dir / "judgments.jsonl");
    result = score_choices(corpus, choices, ctx.oracle);
    method_label = std::string("choose_best:") + std::string(to_string(*strategy));
  } else {
    throw ConfigError("unknown method '" + ctx.method + "'");
  }

  write_choices(result->choices, ctx.out_dir / "choices.jsonl");
  AccuracyTable table =
      build_run_table(corpus, ctx.subset, ctx.oracle, method_label, *result, oracle_row);
  write_text_file(ctx.out_dir / "tables.csv", table_to_csv(table));
  write_text_file(ctx.out_dir / "tables.json", table_to_json(table));
  ctx.manifest.generated_at = utc_timestamp();
  write_text_file(ctx.out_dir / "manifest.json", manifest_json(ctx.manifest));

  std::cout << render_table(table);
  std::cout << "n = " << result->n << ", accuracy = " << format_percent(result->accuracy)
            << ", bundle: " << ctx.out_dir.string() << "\n";
}

int cmd_validate(const std::string& config_arg) {
  try {
    fs::path config_path(config_arg);
    if (!fs::exists(config_path))
      throw ConfigError("config file not found: " + config_path.string());
    toml::Table config = toml::parse(read_file(config_path));
    LoadedCorpus loaded = load_corpus(config, config_path.parent_path());
    for (const auto& w : loaded.warnings) std::cout << "warning: " << w << "\n";
    const Corpus& corpus = loaded.corpus;
    std::cout << "examples: " << corpus.gold.size() << "\n";
    std::cout << "models: " << corpus.model_keys.size() << " (";
    for (std::size_t i = 0; i < corpus.model_keys.size(); ++i) {
      if (i) std::cout << ", ";
      std::cout << corpus.model_keys[i].label();
    }
    std::cout << ")\n";
    std::cout << "predictions: " << corpus.prediction_count() << "\n";
    std::cout << "completeness: " << format_percent(corpus.completeness()) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "validate: " << e.what() << "\n";
    return kExitValidation;
  }
}

int cmd_run(const std::string& config_arg, std::optional<std::uint64_t> seed_flag,
            const std::string& out_flag, const std::string& method_flag) {
  RunContext ctx;
  try {
    ctx = prepare_run(config_arg, seed_flag, out_flag, method_flag);
    for (const auto& w : ctx.loaded.warnings) std::cout << "warning: " << w << "\n";
  } catch (const std::exception& e) {
    std::cerr << "run: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    execute_run(ctx);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "run [" << ctx.method << "]: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_synth(const std::string& config_arg, std::optional<std::uint64_t> seed_flag,
              const std::string& out_flag) {
  SynthSpec spec;
  std::uint64_t seed = 0;
  fs::path out_dir;
  try {
    fs::path config_path(config_arg);
    if (!fs::exists(config_path))
      throw ConfigError("config file not found: " + config_path.string());
    toml::Table config = toml::parse(read_file(config_path));
    spec = synth_spec_from_toml(config);
    if (seed_flag) seed = *seed_flag;
    else if (auto s = toml::get_int(config, "seed")) seed = static_cast<std::uint64_t>(*s);
    else throw ConfigError("a seed is required: pass --seed or set seed");
    std::string out = !out_flag.empty()
                          ? out_flag
                          : toml::get_string(config, "out").value_or("");
    if (out.empty()) throw ConfigError("an output directory is required: pass --out or out");
    out_dir = resolve(fs::current_path(), out);
  } catch (const std::exception& e) {
    std::cerr << "synth: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    Corpus corpus = generate_synth(spec, seed);
    fs::create_directories(out_dir);
    save_gold(corpus, out_dir / "gold.jsonl");
    save_predictions(corpus, out_dir / "predictions.jsonl");
    std::cout << "wrote " << corpus.gold.size() << " examples, "
              << corpus.prediction_count() << " predictions to " << out_dir.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "synth: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_report(const std::string& config_arg, const std::vector<std::string>& choice_files,
               const std::string& out_flag, const std::string& baseline) {
  fs::path out_dir;
  toml::Table config;
  fs::path config_path;
  LoadedCorpus loaded;
  EquivalenceOracle oracle = EquivalenceOracle::exact();
  std::vector<std::pair<std::string, std::vector<EnsembleChoice>>> inputs;
  std::string config_text;
  try {
    config_path = fs::path(config_arg);
    if (!fs::exists(config_path))
      throw ConfigError("config file not found: " + config_path.string());
    config_text = read_file(config_path);
    config = toml::parse(config_text);
    loaded = load_corpus(config, config_path.parent_path());
    oracle = build_oracle(config, config_path.parent_path());
    if (choice_files.empty()) throw ConfigError("pass at least one choices.jsonl file");
    for (const auto& file : choice_files) {
      fs::path p(file);
      if (!fs::exists(p)) throw ConfigError("choices file not found: " + p.string());
      inputs.emplace_back(p.stem().string(), read_choices(p));
    }
    std::string out = !out_flag.empty()
                          ? out_flag
                          : toml::get_string(config, "run.out").value_or("");
    if (out.empty()) throw ConfigError("an output directory is required: pass --out or run.out");
    out_dir = resolve(fs::current_path(), out);
  } catch (const std::exception& e) {
    std::cerr << "report: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    std::vector<TableEntry> entries;
    for (auto& [label, choices] : inputs) {
      TableEntry e;
      e.label = label;
      e.choices = std::move(choices);
      e.method = e.choices.empty() ? std::string("choices")
                                   : std::string(to_string(e.choices.front().method));
      entries.push_back(std::move(e));
    }
    AccuracyTable table = accuracy_table(entries, loaded.corpus, oracle, baseline);
    fs::create_directories(out_dir);
    write_text_file(out_dir / "tables.csv", table_to_csv(table));
    write_text_file(out_dir / "tables.json", table_to_json(table));
    Manifest manifest;
    manifest.config_hash = hex64(fnv1a64(config_text));
    manifest.inputs.emplace_back("config", config_path.generic_string());
    for (const auto& file : choice_files) manifest.inputs.emplace_back("choices", file);
    manifest.generated_at = utc_timestamp();
    write_text_file(out_dir / "manifest.json", manifest_json(manifest));
    std::cout << render_table(table);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "report: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ensemble evaluation over recorded prediction logs"};
  app.require_subcommand(1);

  std::string config_arg;
  std::string out_flag;
  std::string method_flag;
  std::string baseline_flag;
  std::vector<std::string> choice_files;
  std::optional<std::uint64_t> seed_flag;
  std::uint64_t seed_value = 0;

  auto* validate = app.add_subcommand("validate", "check a corpus and report completeness");
  validate->add_option("--config", config_arg, "run config (TOML)")->required();

  auto* run = app.add_subcommand("run", "execute a method and write a report bundle");
  run->add_option("--config", config_arg, "run config (TOML)")->required();
  auto* run_seed = run->add_option("--seed", seed_value, "seed for stochastic steps");
  run->add_option("--out", out_flag, "output directory (overrides run.out)");
  run->add_option("--method", method_flag, "method (overrides run.method)");

  auto* synth = app.add_subcommand("synth", "generate a corpus from planted rates");
  synth->add_option("--config", config_arg, "synthesis spec (TOML)")->required();
  auto* synth_seed = synth->add_option("--seed", seed_value, "generation seed");
  synth->add_option("--out", out_flag, "output directory");

  auto* report = app.add_subcommand("report", "tabulate existing choice files");
  report->add_option("--config", config_arg, "run config (TOML)")->required();
  report->add_option("--out", out_flag, "output directory");
  report->add_option("--baseline", baseline_flag, "baseline row label for deltas");
  report->add_option("choices", choice_files, "choices.jsonl files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  if (*run_seed || *synth_seed) seed_flag = seed_value;

  if (app.got_subcommand(validate)) return cmd_validate(config_arg);
  if (app.got_subcommand(run)) return cmd_run(config_arg, seed_flag, out_flag, method_flag);
  if (app.got_subcommand(synth)) return cmd_synth(config_arg, seed_flag, out_flag);
  if (app.got_subcommand(report))
    return cmd_report(config_arg, choice_files, out_flag, baseline_flag);
  return kExitValidation;
}
