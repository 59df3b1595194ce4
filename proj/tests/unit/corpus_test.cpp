#include <doctest.h>

#include <algorithm>
#include <set>

#include "enseval/corpus.hpp"
#include "support/helpers.hpp"

using namespace enseval;
using testsup::TempDir;
using testsup::mk_corpus;
using testsup::mk_gold;
using testsup::mk_pred;

namespace {

const char* kGoldTwo =
    R"({"example_id":"q1","question":"what bird is this?","image_ref":"img/1.jpg","gold_answers":["sparrow"]})"
    "\n"
    R"({"example_id":"q2","question":"which river?","image_ref":"img/2.jpg","gold_answers":["danube","the danube"]})"
    "\n";

std::string pred_line(const std::string& id, const std::string& model, const std::string& aug,
                      const std::string& answer, double lp = -1.0, int n = 1,
                      const std::string& extra_fields = "") {
  std::string s = "{\"example_id\":\"" + id + "\",\"model_id\":\"" + model +
                  "\",\"augmentation\":\"" + aug + "\",\"answer\":\"" + answer +
                  "\",\"seq_logprob\":" + std::to_string(lp) +
                  ",\"token_count\":" + std::to_string(n);
  if (!extra_fields.empty()) s += "," + extra_fields;
  return s + "}\n";
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("model key labels round-trip") {
  ModelKey k{"palm", Augmentation::lens};
  CHECK(k.label() == "palm/lens");
  CHECK(parse_model_key("palm/lens") == k);
  CHECK(parse_model_key("gpt-3/vanilla") == ModelKey{"gpt-3", Augmentation::vanilla});
  CHECK_FALSE(parse_model_key("palm").has_value());
  CHECK_FALSE(parse_model_key("palm/").has_value());
  CHECK_FALSE(parse_model_key("/lens").has_value());
  CHECK_FALSE(parse_model_key("palm/banana").has_value());
}

TEST_CASE("priority ranks augmentation tier before base model") {
  ModelPriority pri;
  ModelKey palm_lens{"palm", Augmentation::lens};
  ModelKey pali_lens{"pali", Augmentation::lens};
  ModelKey palm_van{"palm", Augmentation::vanilla};
  ModelKey gpt_pc{"gpt-3", Augmentation::promptcap};
  CHECK(pri.less(palm_lens, gpt_pc));   // lens tier first
  CHECK(pri.less(gpt_pc, palm_van));    // promptcap before vanilla
  CHECK(pri.less(palm_lens, pali_lens));  // palm before pali inside a tier
  ModelKey unknown{"zebra", Augmentation::lens};
  CHECK(pri.less(pali_lens, unknown));  // unlisted models sink
  auto sorted = pri.sorted({palm_van, gpt_pc, pali_lens, palm_lens});
  CHECK(sorted == std::vector<ModelKey>{palm_lens, pali_lens, gpt_pc, palm_van});
}

TEST_CASE("two well-formed gold lines load as a map of two") {
  GoldLoad load = load_gold_from_string(kGoldTwo);
  CHECK(load.gold.size() == 2);
  CHECK(load.gold.at("q1").question == "what bird is this?");
  CHECK(load.gold.at("q2").gold_answers ==
        std::vector<std::string>{"danube", "the danube"});
  CHECK(load.warnings.empty());
}

TEST_CASE("duplicate gold example_id fails, naming the id and line") {
  std::string text = std::string(kGoldTwo) +
                     R"({"example_id":"q1","question":"again?","image_ref":"x","gold_answers":["y"]})"
                     "\n";
  try {
    load_gold_from_string(text);
    FAIL("expected duplicate-id error");
  } catch (const CorpusError& e) {
    std::string msg = e.what();
    CHECK(msg.find("q1") != std::string::npos);
    CHECK(e.line() == 3);
  }
}

TEST_CASE("empty gold input yields empty map plus a warning") {
  GoldLoad load = load_gold_from_string("");
  CHECK(load.gold.empty());
  REQUIRE(load.warnings.size() == 1);
}

TEST_CASE("gold validation rejects blank answers and bad fields") {
  CHECK_THROWS_AS(load_gold_from_string(
                      R"({"example_id":"a","question":"q","image_ref":"i","gold_answers":[]})"),
                  CorpusError);
  CHECK_THROWS_AS(load_gold_from_string(
                      R"({"example_id":"a","question":"q","image_ref":"i","gold_answers":["  "]})"),
                  CorpusError);
  CHECK_THROWS_AS(load_gold_from_string(R"({"question":"q"})"), CorpusError);
  CHECK_THROWS_AS(load_gold_from_string("not json"), CorpusError);
}

TEST_CASE("unknown gold fields ride along in extra") {
  GoldLoad load = load_gold_from_string(
      R"({"example_id":"a","question":"q","image_ref":"i","gold_answers":["x"],"wiki_url":"https://w","k":3})");
  const GoldRecord& rec = load.gold.at("a");
  CHECK(rec.extra.at("wiki_url") == "\"https://w\"");
  CHECK(rec.extra.at("k") == "3");
}

TEST_CASE("complete predictions produce completeness 1.0") {
  std::string preds;
  for (const char* model : {"palm", "gpt-3", "pali"}) {
    for (const char* aug : {"lens", "promptcap", "vanilla"}) {
      preds += pred_line("q1", model, aug, "sparrow");
      preds += pred_line("q2", model, aug, "danube");
    }
  }
  PredictionLoad load = load_predictions_from_string(preds, load_gold_from_string(kGoldTwo).gold);
  CHECK(load.corpus.model_keys.size() == 9);
  CHECK(load.corpus.prediction_count() == 18);
  CHECK(load.corpus.completeness() == 1.0);
  CHECK(load.rejects.empty());
  // model_keys come out in priority order
  CHECK(load.corpus.model_keys.front() == ModelKey{"palm", Augmentation::lens});
  CHECK(load.corpus.model_keys.back() == ModelKey{"pali", Augmentation::vanilla});
}

TEST_CASE("orphan prediction is rejected but the corpus still loads") {
  std::string preds = pred_line("q1", "palm", "vanilla", "sparrow") +
                      pred_line("ghost", "palm", "vanilla", "nothing");
  PredictionLoad load = load_predictions_from_string(preds, load_gold_from_string(kGoldTwo).gold);
  CHECK(load.corpus.prediction_count() == 1);
  REQUIRE(load.rejects.size() == 1);
  CHECK(load.rejects[0].line == 2);
  CHECK(load.rejects[0].message.find("ghost") != std::string::npos);
}

TEST_CASE("positive seq_logprob is a validation error") {
  std::string preds = pred_line("q1", "palm", "vanilla", "sparrow", +0.5);
  CHECK_THROWS_AS(
      load_predictions_from_string(preds, load_gold_from_string(kGoldTwo).gold),
      CorpusError);
}

TEST_CASE("prediction field constraints") {
  auto gold = load_gold_from_string(kGoldTwo).gold;
  // token_count must be >= 1
  CHECK_THROWS_AS(
      load_predictions_from_string(pred_line("q1", "palm", "vanilla", "x", -1.0, 0), gold),
      CorpusError);
  // vanilla predictions cannot carry lens fields
  CHECK_THROWS_AS(load_predictions_from_string(
                      pred_line("q1", "palm", "vanilla", "x", -1.0, 1, "\"context\":\"c\""), gold),
                  CorpusError);
  CHECK_THROWS_AS(
      load_predictions_from_string(
          pred_line("q1", "palm", "vanilla", "x", -1.0, 1, "\"lens_entity\":\"e\""), gold),
      CorpusError);
  // caption only on promptcap
  CHECK_THROWS_AS(load_predictions_from_string(
                      pred_line("q1", "palm", "lens", "x", -1.0, 1, "\"caption\":\"c\""), gold),
                  CorpusError);
  // unknown augmentation
  CHECK_THROWS_AS(
      load_predictions_from_string(pred_line("q1", "palm", "mystery", "x"), gold), CorpusError);
  // duplicate (example, model, augmentation)
  CHECK_THROWS_AS(load_predictions_from_string(pred_line("q1", "palm", "vanilla", "x") +
                                                   pred_line("q1", "palm", "vanilla", "y"),
                                               gold),
                  CorpusError);
  // null optionals are fine
  PredictionLoad ok = load_predictions_from_string(
      pred_line("q1", "palm", "lens", "x", -1.0, 1, "\"lens_entity\":null,\"context\":\"c\""),
      gold);
  const PredictionRecord* rec = ok.corpus.find("q1", {"palm", Augmentation::lens});
  REQUIRE(rec != nullptr);
  CHECK_FALSE(rec->lens_entity.has_value());
  CHECK(rec->context == "c");
}

TEST_CASE("corpus lookups and sorted example ids") {
  Corpus corpus = mk_corpus(
      {mk_gold("b", "q?", {"x"}), mk_gold("a", "q?", {"y"})},
      {mk_pred("a", "palm", Augmentation::vanilla, "y"),
       mk_pred("b", "palm", Augmentation::vanilla, "z")});
  CHECK(corpus.example_ids() == std::vector<std::string>{"a", "b"});
  CHECK(corpus.find("a", {"palm", Augmentation::vanilla})->answer == "y");
  CHECK(corpus.find("a", {"palm", Augmentation::lens}) == nullptr);
  CHECK(corpus.find("ghost", {"palm", Augmentation::vanilla}) == nullptr);
  CHECK(corpus.completeness() == 1.0);
}

TEST_CASE("save and load round-trip through files") {
  Corpus corpus = mk_corpus(
      {mk_gold("q1", "what bird?", {"sparrow", "house sparrow"}),
       mk_gold("q2", "which \"river\"?", {"danube"})},
      {mk_pred("q1", "palm", Augmentation::vanilla, "sparrow", -0.3, 2),
       mk_pred("q1", "palm", Augmentation::lens, "finch", -1.2, 3),
       mk_pred("q2", "pali", Augmentation::promptcap, "danube", -0.9, 1)});
  auto* lens = const_cast<PredictionRecord*>(corpus.find("q1", {"palm", Augmentation::lens}));
  lens->lens_entity = "sparrow";
  lens->context = "the sparrow sits on a branch";
  auto* pc = const_cast<PredictionRecord*>(corpus.find("q2", {"pali", Augmentation::promptcap}));
  pc->caption = "a wide river at dusk";

  TempDir tmp;
  save_gold(corpus, tmp.file("gold.jsonl"));
  save_predictions(corpus, tmp.file("pred.jsonl"));
  GoldLoad gold = load_gold(tmp.file("gold.jsonl"));
  PredictionLoad load = load_predictions(tmp.file("pred.jsonl"), gold.gold);
  CHECK(load.corpus == corpus);
  CHECK(load.rejects.empty());
}

TEST_CASE("loading a missing file raises") {
  TempDir tmp;
  CHECK_THROWS_AS(load_gold(tmp.file("nope.jsonl")), CorpusError);
  CHECK_THROWS_AS(load_predictions(tmp.file("nope.jsonl"), {}), CorpusError);
}

TEST_CASE("folds: 10 examples, k=5, seed 7 gives five stable pairs") {
  std::vector<GoldRecord> golds;
  for (int i = 0; i < 10; ++i) golds.push_back(mk_gold("ex" + std::to_string(i), "q?", {"a"}));
  Corpus corpus = mk_corpus(std::move(golds), {});
  auto folds = split_folds(corpus, 5, 7);
  REQUIRE(folds.size() == 5);
  for (const auto& fold : folds) CHECK(fold.size() == 2);
  CHECK(split_folds(corpus, 5, 7) == folds);

  std::set<std::string> seen;
  for (const auto& fold : folds) seen.insert(fold.begin(), fold.end());
  CHECK(seen.size() == 10);  // disjoint cover
}

TEST_CASE("folds: 10 examples, k=3 gives sizes 4,3,3") {
  std::vector<GoldRecord> golds;
  for (int i = 0; i < 10; ++i) golds.push_back(mk_gold("ex" + std::to_string(i), "q?", {"a"}));
  Corpus corpus = mk_corpus(std::move(golds), {});
  auto folds = split_folds(corpus, 3, 1);
  REQUIRE(folds.size() == 3);
  CHECK(folds[0].size() == 4);
  CHECK(folds[1].size() == 3);
  CHECK(folds[2].size() == 3);
}

TEST_CASE("folds: k larger than n fails, and seeds change the split") {
  std::vector<GoldRecord> golds;
  for (int i = 0; i < 30; ++i) golds.push_back(mk_gold("ex" + std::to_string(i), "q?", {"a"}));
  Corpus corpus = mk_corpus(std::move(golds), {});
  CHECK_THROWS_AS(split_folds(corpus, 31, 0), CorpusError);
  CHECK_THROWS_AS(split_folds(corpus, 0, 0), CorpusError);
  CHECK(split_folds(corpus, 3, 1) != split_folds(corpus, 3, 2));
}

TEST_CASE("jsonl encoders keep unknown fields") {
  GoldLoad load = load_gold_from_string(
      R"({"example_id":"a","question":"q","image_ref":"i","gold_answers":["x"],"note":{"deep":1}})");
  std::string line = gold_to_jsonl_line(load.gold.at("a"));
  CHECK(line.find("\"note\":{\"deep\":1}") != std::string::npos);
  GoldLoad back = load_gold_from_string(line);
  CHECK(back.gold.at("a") == load.gold.at("a"));
}

}  // TEST_SUITE
