#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enseval/report.hpp"
#include "support/helpers.hpp"

using namespace enseval;
using nlohmann::json;
using testsup::count_substr;
using testsup::mk_corpus;
using testsup::mk_gold;
using testsup::mk_pred;
using testsup::TempDir;
using testsup::xml_defect;

namespace {

Corpus table_corpus() {
  std::vector<GoldRecord> golds;
  std::vector<PredictionRecord> preds;
  for (int i = 0; i < 4; ++i) {
    std::string id = "e" + std::to_string(i);
    golds.push_back(mk_gold(id, "q?", {"right"}));
    preds.push_back(mk_pred(id, "palm", Augmentation::vanilla, i < 3 ? "right" : "wrong"));
    preds.push_back(mk_pred(id, "gpt-3", Augmentation::vanilla, i < 2 ? "right" : "wrong"));
  }
  return mk_corpus(std::move(golds), std::move(preds));
}

std::vector<EnsembleChoice> fixed_choices(int correct_count) {
  std::vector<EnsembleChoice> choices;
  for (int i = 0; i < 4; ++i) {
    EnsembleChoice c;
    c.example_id = "e" + std::to_string(i);
    c.chosen = {"palm", Augmentation::vanilla};
    c.answer = i < correct_count ? "right" : "wrong";
    c.method = Method::majority;
    choices.push_back(std::move(c));
  }
  return choices;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("accuracy table scores single models and choice sets") {
  Corpus corpus = table_corpus();
  EquivalenceOracle oracle = EquivalenceOracle::exact();
  std::vector<TableEntry> entries;
  TableEntry palm;
  palm.label = "palm";
  palm.model = ModelKey{"palm", Augmentation::vanilla};
  entries.push_back(palm);
  TableEntry vote;
  vote.label = "vote";
  vote.method = "majority";
  vote.choices = fixed_choices(2);
  entries.push_back(vote);
  TableEntry best;
  best.label = "best";
  best.method = "oracle";
  best.oracle = true;
  best.choices = fixed_choices(4);
  entries.push_back(best);

  AccuracyTable table = accuracy_table(entries, corpus, oracle);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].accuracy == 0.75);  // 3 of 4
  CHECK(table.rows[0].n == 4);
  CHECK(table.rows[1].accuracy == 0.5);
  CHECK(table.rows[2].accuracy == 1.0);
  CHECK(table.rows[2].oracle);
  CHECK_FALSE(table.rows[0].delta.has_value());

  AccuracyTable with_base = accuracy_table(entries, corpus, oracle, "palm");
  CHECK(*with_base.rows[0].delta == 0.0);
  CHECK(*with_base.rows[1].delta == doctest::Approx(-0.25));
  CHECK(*with_base.rows[2].delta == doctest::Approx(0.25));
}

TEST_CASE("accuracy table rejects degenerate inputs") {
  Corpus corpus = table_corpus();
  EquivalenceOracle oracle = EquivalenceOracle::exact();
  CHECK_THROWS_AS(accuracy_table({}, corpus, oracle), ReportError);

  TableEntry a;
  a.label = "same";
  a.model = ModelKey{"palm", Augmentation::vanilla};
  CHECK_THROWS_AS(accuracy_table({a, a}, corpus, oracle), ReportError);

  TableEntry ghost;
  ghost.label = "ghost";
  ghost.model = ModelKey{"pali", Augmentation::lens};  // no predictions
  CHECK_THROWS_AS(accuracy_table({ghost}, corpus, oracle), ReportError);

  TableEntry hollow;
  hollow.label = "hollow";  // neither model nor choices
  CHECK_THROWS_AS(accuracy_table({hollow}, corpus, oracle), ReportError);

  CHECK_THROWS_AS(accuracy_table({a}, corpus, oracle, "nonexistent"), ReportError);
}

TEST_CASE("plain-text rendering is fixed-width with an oracle footnote") {
  AccuracyTable table;
  table.rows.push_back({"palm", 4, 0.75, "single", false, std::nullopt});
  table.rows.push_back({"vote", 4, 0.5, "majority", false, std::nullopt});
  table.rows.push_back({"best", 4, 1.0, "oracle", true, std::nullopt});

  std::string text = render_table(table);
  auto lines = split(text, '\n');
  REQUIRE(lines.size() >= 5);
  CHECK(lines[0] == "label  method        n         accuracy");
  CHECK(lines[1] == "palm   single        4         75.0    ");
  CHECK(lines[2] == "vote   majority      4         50.0    ");
  CHECK(lines[3] == "best*  oracle        4         100.0   ");
  CHECK(lines[4] == "* upper-bound row");

  AccuracyTable with_delta = table;
  with_delta.baseline_label = "palm";
  with_delta.rows[0].delta = 0.0;
  with_delta.rows[1].delta = -0.25;
  with_delta.rows[2].delta = 0.25;
  auto delta_lines = split(render_table(with_delta), '\n');
  CHECK(delta_lines[0] == "label  method        n         accuracy  delta");
  CHECK(delta_lines[1] == "palm   single        4         75.0      +0.0");
  CHECK(delta_lines[2] == "vote   majority      4         50.0      -25.0");
  CHECK(delta_lines[3] == "best*  oracle        4         100.0     +25.0");

  AccuracyTable humble;
  humble.rows.push_back({"much-longer-label", 10, 0.2, "single", false, std::nullopt});
  std::string humble_text = render_table(humble);
  CHECK(humble_text.find("much-longer-label  ") != std::string::npos);
  CHECK(humble_text.find("upper-bound") == std::string::npos);  // no oracle rows
}

TEST_CASE("table csv round-trips exactly, including awkward labels") {
  AccuracyTable table;
  table.baseline_label = "we, \"the\" base";
  table.rows.push_back({"we, \"the\" base", 7, 1.0 / 3.0, "single", false, 0.0});
  table.rows.push_back({"plain", 7, 0.7512345678901234, "meta", true, 0.41790123455678904});
  table.rows.push_back({"nodelta", 7, 0.1, "single", false, std::nullopt});
  table.rows[2].delta.reset();

  std::string csv = table_to_csv(table);
  AccuracyTable back = table_from_csv(csv);
  CHECK(back == table);

  CHECK_THROWS_AS(table_from_csv("wrong,header\n"), ReportError);
  CHECK_THROWS_AS(
      table_from_csv("label,n,accuracy,method,oracle,delta,baseline\na,b\n"), ReportError);
  CHECK_THROWS_AS(
      table_from_csv("label,n,accuracy,method,oracle,delta,baseline\na,-1,0.5,m,0,,\n"),
      ReportError);
  CHECK_THROWS_AS(
      table_from_csv("label,n,accuracy,method,oracle,delta,baseline\na,1,zebra,m,0,,\n"),
      ReportError);
}

TEST_CASE("table json carries all fields in a stable order") {
  AccuracyTable table;
  table.baseline_label = "palm";
  table.rows.push_back({"palm", 4, 0.75, "single", false, 0.0});
  table.rows.push_back({"best", 4, 1.0, "oracle", true, std::nullopt});
  std::string text = table_to_json(table);
  json j = json::parse(text);
  CHECK(j["baseline"] == "palm");
  CHECK(j["rows"][0]["accuracy"] == 0.75);
  CHECK(j["rows"][0]["delta"] == 0.0);
  CHECK(j["rows"][1]["oracle"] == true);
  CHECK(j["rows"][1]["delta"].is_null());
  CHECK(text.find("\"baseline\"") < text.find("\"rows\""));
  CHECK(text.back() == '\n');
}

TEST_CASE("reliability bins csv round-trips empty bins") {
  std::vector<ConfidencePair> pairs{{0.15, false}, {0.85, true}, {0.9, true}, {0.95, false}};
  auto bins = reliability_bins(pairs, 10);
  std::string csv = bins_to_csv(bins);
  auto back = bins_from_csv(csv);
  REQUIRE(back.size() == bins.size());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    CHECK(back[i].lo == bins[i].lo);
    CHECK(back[i].hi == bins[i].hi);
    CHECK(back[i].count == bins[i].count);
    CHECK(back[i].mean_confidence == bins[i].mean_confidence);
    CHECK(back[i].empirical_accuracy == bins[i].empirical_accuracy);
  }
  CHECK_THROWS_AS(bins_from_csv("nope\n"), ReportError);
}

TEST_CASE("bucket csv groups rows back into variants") {
  std::vector<BucketStats> stats(2);
  stats[0].prompt_variant_id = "binary_1";
  stats[0].n = 100;
  stats[0].buckets = {{"yes", 65, 0.7}, {"no", 30, 0.4}, {"NA", 5, std::nullopt}};
  stats[0].buckets[2].accuracy.reset();
  stats[1].prompt_variant_id = "binary_2";
  stats[1].n = 100;
  stats[1].buckets = {{"yes", 17, 0.9}, {"no", 83, 0.5}, {"NA", 0, std::nullopt}};
  stats[1].buckets[2].accuracy.reset();

  std::string csv = buckets_to_csv(stats);
  auto back = buckets_from_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].prompt_variant_id == "binary_1");
  CHECK(back[0].n == 100);
  REQUIRE(back[0].buckets.size() == 3);
  CHECK(back[0].buckets[0].count == 65);
  CHECK(*back[0].buckets[1].accuracy == 0.4);
  CHECK_FALSE(back[0].buckets[2].accuracy.has_value());
  CHECK(back[1].buckets[0].count == 17);
}

TEST_CASE("calibration report json") {
  CalibrationReport report;
  report.model_key = {"palm", Augmentation::lens};
  report.n = 20;
  report.ece_value = 0.45;
  report.brier = 0.3;
  report.bins = reliability_bins({{0.9, true}, {0.9, false}}, 10);
  report.temperature = 0.07;
  report.ece_recal = 0.02;
  report.brier_recal = 0.25;
  report.bins_recal = report.bins;
  report.used_normalized = true;
  report.bin_count = 10;

  json j = json::parse(calibration_report_json(report));
  CHECK(j["model"] == "palm/lens");
  CHECK(j["n"] == 20);
  CHECK(j["normalized"] == true);
  CHECK(j["ece"] == 0.45);
  CHECK(j["temperature"] == 0.07);
  CHECK(j["bins"].size() == 10);
  CHECK(j["bins"][0]["confidence"].is_null());
  CHECK(j["bins"][9]["count"] == 2);

  CalibrationReport raw_only;
  raw_only.model_key = {"palm", Augmentation::vanilla};
  raw_only.bins = report.bins;
  json j2 = json::parse(calibration_report_json(raw_only));
  CHECK(j2["temperature"].is_null());
  CHECK(j2["ece_recalibrated"].is_null());
}

TEST_CASE("reliability diagram: one bar per occupied bin plus the diagonal") {
  std::vector<ConfidencePair> pairs;
  for (int b = 0; b < 10; ++b) {
    if (b == 3 || b == 6) continue;  // leave two bins empty
    double conf = b / 10.0 + 0.05;
    pairs.push_back({conf, b >= 5});
    pairs.push_back({conf, true});
  }
  auto bins = reliability_bins(pairs, 10);
  std::string svg = reliability_svg(bins, "palm/lens");
  CHECK(xml_defect(svg) == "");
  CHECK(count_substr(svg, "class=\"bar\"") == 8);
  CHECK(count_substr(svg, "class=\"conf\"") == 8);
  CHECK(count_substr(svg, "class=\"diagonal\"") == 1);
  CHECK(svg.find("palm/lens") != std::string::npos);

  // byte determinism
  CHECK(reliability_svg(bins, "palm/lens") == svg);

  // full occupancy means ten bars
  std::vector<ConfidencePair> full;
  for (int b = 0; b < 10; ++b) full.push_back({b / 10.0 + 0.04, b % 2 == 0});
  std::string dense = reliability_svg(reliability_bins(full, 10), "t");
  CHECK(count_substr(dense, "class=\"bar\"") == 10);

  // titles are escaped, output stays well-formed
  std::string escaped = reliability_svg(bins, "<scores & more>");
  CHECK(xml_defect(escaped) == "");
  CHECK(escaped.find("&lt;scores &amp; more&gt;") != std::string::npos);
  CHECK_THROWS_AS(reliability_svg({}, "t"), ReportError);
}

TEST_CASE("likert chart: proportional segments with integer-percent labels") {
  std::vector<BucketStats> stats(2);
  stats[0].prompt_variant_id = "variant_a";
  stats[0].n = 100;
  stats[0].buckets = {{"yes", 50, 0.6}, {"no", 30, 1.0 / 3.0}, {"NA", 20, 0.0}};
  stats[1].prompt_variant_id = "variant_b";
  stats[1].n = 100;
  stats[1].buckets = {{"yes", 100, 0.735}, {"no", 0, std::nullopt}, {"NA", 0, std::nullopt}};

  std::string svg = likert_svg(stats);
  CHECK(xml_defect(svg) == "");
  // 3 non-empty segments for variant_a, 1 for variant_b
  CHECK(count_substr(svg, "class=\"segment\"") == 4);
  // widths: 640 * count / n
  CHECK(svg.find("width=\"320.00\"") != std::string::npos);
  CHECK(svg.find("width=\"192.00\"") != std::string::npos);
  CHECK(svg.find("width=\"128.00\"") != std::string::npos);
  CHECK(svg.find("width=\"640.00\"") != std::string::npos);
  // labels carry integer percents
  CHECK(svg.find("yes 60") != std::string::npos);
  CHECK(svg.find("no 33") != std::string::npos);
  CHECK(svg.find("NA 0") != std::string::npos);
  CHECK(svg.find("yes 74") != std::string::npos);  // 73.5 rounds half-up
  // variants appear in input order
  CHECK(svg.find("variant_a") < svg.find("variant_b"));
  // NA bucket uses the grey fill
  CHECK(svg.find("#bdbdbd") != std::string::npos);
  CHECK(likert_svg(stats) == svg);
  CHECK_THROWS_AS(likert_svg({}), ReportError);
}

TEST_CASE("svg files land on disk") {
  TempDir dir;
  CalibrationReport report;
  report.model_key = {"palm", Augmentation::vanilla};
  report.bins = reliability_bins({{0.5, true}}, 10);
  emit_reliability_svg(report, dir.file("rel.svg"));
  std::string rel = testsup::read_file(dir.file("rel.svg"));
  CHECK(xml_defect(rel) == "");

  std::vector<BucketStats> stats(1);
  stats[0].prompt_variant_id = "v";
  stats[0].n = 1;
  stats[0].buckets = {{"yes", 1, 1.0}};
  emit_likert_svg(stats, dir.file("lik.svg"));
  CHECK(xml_defect(testsup::read_file(dir.file("lik.svg"))) == "");

  CalibrationReport binless;
  binless.model_key = {"palm", Augmentation::vanilla};
  CHECK_THROWS_AS(emit_reliability_svg(binless, dir.file("x.svg")), ReportError);
}

TEST_CASE("manifest json and timestamps") {
  Manifest manifest;
  manifest.config_hash = "deadbeef";
  manifest.seed = 42;
  manifest.inputs = {{"gold", "/data/gold.jsonl"}, {"predictions", "/data/preds.jsonl"}};
  manifest.generated_at = "2026-01-02T03:04:05Z";
  std::string text = manifest_json(manifest);
  json j = json::parse(text);
  CHECK(j["tool_version"] == kVersion);
  CHECK(j["config_hash"] == "deadbeef");
  CHECK(j["seed"] == 42);
  CHECK(j["inputs"]["gold"] == "/data/gold.jsonl");
  CHECK(j["generated_at"] == "2026-01-02T03:04:05Z");
  CHECK(text.find("tool_version") < text.find("config_hash"));
  CHECK(text.find("config_hash") < text.find("generated_at"));

  std::string now = utc_timestamp();
  REQUIRE(now.size() == 20);
  CHECK(now[4] == '-');
  CHECK(now[10] == 'T');
  CHECK(now[19] == 'Z');
}

TEST_CASE("text files write atomically enough to read back") {
  TempDir dir;
  write_text_file(dir.file("out.txt"), "alpha\nbeta\n");
  CHECK(testsup::read_file(dir.file("out.txt")) == "alpha\nbeta\n");
  CHECK_THROWS_AS(write_text_file(dir.path() / "missing" / "out.txt", "x"), ReportError);
}

}  // TEST_SUITE
