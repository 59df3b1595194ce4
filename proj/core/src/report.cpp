#include "enseval/report.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "enseval/util.hpp"

namespace enseval {

namespace {

using ordered_json = nlohmann::ordered_json;

// --- minimal CSV layer ------------------------------------------------------

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// Splits one logical CSV record; the caller guarantees quotes do not span
// physical lines (none of our emitters produce embedded newlines).
std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::vector<std::string> csv_lines(const std::string& csv) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : csv) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

double require_double(const std::string& field, const std::string& what) {
  auto v = parse_double(field);
  if (!v) throw ReportError("bad " + what + " value: '" + field + "'");
  return *v;
}

std::size_t require_count(const std::string& field, const std::string& what) {
  auto v = parse_int(field);
  if (!v || *v < 0) throw ReportError("bad " + what + " value: '" + field + "'");
  return static_cast<std::size_t>(*v);
}

void require_header(const std::vector<std::string>& lines, const std::string& header,
                    const std::string& what) {
  if (lines.empty() || lines.front() != header)
    throw ReportError(what + " csv: expected header '" + header + "'");
}

// --- SVG helpers ------------------------------------------------------------

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Fixed two-decimal coordinates keep the output byte-stable.
std::string coord(double v) { return format_fixed(v, 2); }

constexpr const char* kSegmentFill[6] = {"#1a9850", "#91cf60", "#d9ef8b",
                                         "#fee08b", "#fc8d59", "#bdbdbd"};

}  // namespace

bool operator==(const AccuracyRow& a, const AccuracyRow& b) {
  return a.label == b.label && a.n == b.n && a.accuracy == b.accuracy && a.method == b.method &&
         a.oracle == b.oracle && a.delta == b.delta;
}

bool operator==(const AccuracyTable& a, const AccuracyTable& b) {
  return a.rows == b.rows && a.baseline_label == b.baseline_label;
}

AccuracyTable accuracy_table(const std::vector<TableEntry>& entries, const Corpus& corpus,
                             const EquivalenceOracle& oracle,
                             const std::string& baseline_label) {
  if (entries.empty()) throw ReportError("accuracy table needs at least one entry");
  AccuracyTable table;
  table.baseline_label = baseline_label;
  std::set<std::string> seen;
  for (const auto& entry : entries) {
    if (!seen.insert(entry.label).second)
      throw ReportError("duplicate table label '" + entry.label + "'");
    AccuracyRow row;
    row.label = entry.label;
    row.method = entry.method;
    row.oracle = entry.oracle;
    if (entry.model) {
      std::size_t hits = 0;
      std::size_t n = 0;
      for (const auto& [example_id, gold] : corpus.gold) {
        const PredictionRecord* pred = corpus.find(example_id, *entry.model);
        if (!pred) continue;
        ++n;
        if (oracle.is_correct(pred->answer, gold.gold_answers)) ++hits;
      }
      if (n == 0)
        throw ReportError("no predictions for model '" + entry.model->label() + "'");
      row.n = n;
      row.accuracy = static_cast<double>(hits) / static_cast<double>(n);
    } else {
      if (entry.choices.empty())
        throw ReportError("entry '" + entry.label + "' has neither model nor choices");
      SelectionResult scored = score_choices(corpus, entry.choices, oracle);
      row.n = scored.n;
      row.accuracy = scored.accuracy;
    }
    table.rows.push_back(std::move(row));
  }
  if (!baseline_label.empty()) {
    const AccuracyRow* base = nullptr;
    for (const auto& row : table.rows)
      if (row.label == baseline_label) base = &row;
    if (!base) throw ReportError("baseline row '" + baseline_label + "' not in table");
    double base_acc = base->accuracy;
    for (auto& row : table.rows) row.delta = row.accuracy - base_acc;
  }
  return table;
}

std::string render_table(const AccuracyTable& table) {
  std::size_t label_w = 5;
  for (const auto& row : table.rows) label_w = std::max(label_w, row.label.size());
  std::ostringstream out;
  out << std::left;
  auto pad = [&](const std::string& s, std::size_t w) {
    std::string p = s;
    while (p.size() < w) p += ' ';
    return p;
  };
  out << pad("label", label_w) << "  " << pad("method", 12) << "  " << pad("n", 8) << "  "
      << pad("accuracy", 8);
  if (!table.baseline_label.empty()) out << "  delta";
  out << '\n';
  for (const auto& row : table.rows) {
    out << pad(row.label + (row.oracle ? "*" : ""), label_w) << "  " << pad(row.method, 12)
        << "  " << pad(std::to_string(row.n), 8) << "  "
        << pad(format_percent(row.accuracy), 8);
    if (row.delta) {
      double d = *row.delta;
      out << "  " << (d >= 0 ? "+" : "") << format_percent(d);
    }
    out << '\n';
  }
  if (std::any_of(table.rows.begin(), table.rows.end(),
                  [](const AccuracyRow& r) { return r.oracle; }))
    out << "* upper-bound row\n";
  return out.str();
}

std::string table_to_csv(const AccuracyTable& table) {
  std::string out = "label,n,accuracy,method,oracle,delta,baseline\n";
  for (const auto& row : table.rows) {
    out += csv_escape(row.label);
    out += ',' + std::to_string(row.n);
    out += ',' + format_double(row.accuracy);
    out += ',' + csv_escape(row.method);
    out += row.oracle ? ",1" : ",0";
    out += ',';
    if (row.delta) out += format_double(*row.delta);
    out += ',' + csv_escape(table.baseline_label);
    out += '\n';
  }
  return out;
}

AccuracyTable table_from_csv(const std::string& csv) {
  auto lines = csv_lines(csv);
  require_header(lines, "label,n,accuracy,method,oracle,delta,baseline", "table");
  AccuracyTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv_split(lines[i]);
    if (f.size() != 7) throw ReportError("table csv: wrong field count on row " + std::to_string(i));
    AccuracyRow row;
    row.label = f[0];
    row.n = require_count(f[1], "n");
    row.accuracy = require_double(f[2], "accuracy");
    row.method = f[3];
    row.oracle = f[4] == "1";
    if (!f[5].empty()) row.delta = require_double(f[5], "delta");
    table.baseline_label = f[6];
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string table_to_json(const AccuracyTable& table) {
  ordered_json j;
  j["baseline"] = table.baseline_label;
  j["rows"] = ordered_json::array();
  for (const auto& row : table.rows) {
    ordered_json r;
    r["label"] = row.label;
    r["n"] = row.n;
    r["accuracy"] = row.accuracy;
    r["method"] = row.method;
    r["oracle"] = row.oracle;
    if (row.delta) r["delta"] = *row.delta;
    else r["delta"] = nullptr;
    j["rows"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

std::string bins_to_csv(const std::vector<ReliabilityBin>& bins) {
  std::string out = "lo,hi,count,confidence,accuracy\n";
  for (const auto& bin : bins) {
    out += format_double(bin.lo);
    out += ',' + format_double(bin.hi);
    out += ',' + std::to_string(bin.count);
    out += ',';
    if (bin.mean_confidence) out += format_double(*bin.mean_confidence);
    out += ',';
    if (bin.empirical_accuracy) out += format_double(*bin.empirical_accuracy);
    out += '\n';
  }
  return out;
}

std::vector<ReliabilityBin> bins_from_csv(const std::string& csv) {
  auto lines = csv_lines(csv);
  require_header(lines, "lo,hi,count,confidence,accuracy", "bins");
  std::vector<ReliabilityBin> bins;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv_split(lines[i]);
    if (f.size() != 5) throw ReportError("bins csv: wrong field count on row " + std::to_string(i));
    ReliabilityBin bin;
    bin.lo = require_double(f[0], "lo");
    bin.hi = require_double(f[1], "hi");
    bin.count = require_count(f[2], "count");
    if (!f[3].empty()) bin.mean_confidence = require_double(f[3], "confidence");
    if (!f[4].empty()) bin.empirical_accuracy = require_double(f[4], "accuracy");
    bins.push_back(bin);
  }
  return bins;
}

std::string buckets_to_csv(const std::vector<BucketStats>& stats) {
  std::string out = "variant,n,label,count,accuracy\n";
  for (const auto& variant : stats) {
    for (const auto& bucket : variant.buckets) {
      out += csv_escape(variant.prompt_variant_id);
      out += ',' + std::to_string(variant.n);
      out += ',' + csv_escape(bucket.label);
      out += ',' + std::to_string(bucket.count);
      out += ',';
      if (bucket.accuracy) out += format_double(*bucket.accuracy);
      out += '\n';
    }
  }
  return out;
}

std::vector<BucketStats> buckets_from_csv(const std::string& csv) {
  auto lines = csv_lines(csv);
  require_header(lines, "variant,n,label,count,accuracy", "buckets");
  std::vector<BucketStats> stats;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv_split(lines[i]);
    if (f.size() != 5)
      throw ReportError("buckets csv: wrong field count on row " + std::to_string(i));
    if (stats.empty() || stats.back().prompt_variant_id != f[0]) {
      BucketStats variant;
      variant.prompt_variant_id = f[0];
      variant.n = require_count(f[1], "n");
      stats.push_back(std::move(variant));
    }
    BucketStat bucket;
    bucket.label = f[2];
    bucket.count = require_count(f[3], "count");
    if (!f[4].empty()) bucket.accuracy = require_double(f[4], "accuracy");
    stats.back().buckets.push_back(std::move(bucket));
  }
  return stats;
}

namespace {

ordered_json bins_json(const std::vector<ReliabilityBin>& bins) {
  ordered_json arr = ordered_json::array();
  for (const auto& bin : bins) {
    ordered_json b;
    b["lo"] = bin.lo;
    b["hi"] = bin.hi;
    b["count"] = bin.count;
    if (bin.mean_confidence) b["confidence"] = *bin.mean_confidence;
    else b["confidence"] = nullptr;
    if (bin.empirical_accuracy) b["accuracy"] = *bin.empirical_accuracy;
    else b["accuracy"] = nullptr;
    arr.push_back(std::move(b));
  }
  return arr;
}

}  // namespace

std::string calibration_report_json(const CalibrationReport& report) {
  ordered_json j;
  j["model"] = report.model_key.label();
  j["n"] = report.n;
  j["normalized"] = report.used_normalized;
  j["bin_count"] = report.bin_count;
  j["ece"] = report.ece_value;
  j["brier"] = report.brier;
  j["bins"] = bins_json(report.bins);
  if (report.temperature) j["temperature"] = *report.temperature;
  else j["temperature"] = nullptr;
  if (report.ece_recal) j["ece_recalibrated"] = *report.ece_recal;
  else j["ece_recalibrated"] = nullptr;
  if (report.brier_recal) j["brier_recalibrated"] = *report.brier_recal;
  else j["brier_recalibrated"] = nullptr;
  j["bins_recalibrated"] = bins_json(report.bins_recal);
  return j.dump(2) + "\n";
}

std::string reliability_svg(const std::vector<ReliabilityBin>& bins, const std::string& title) {
  if (bins.empty()) throw ReportError("reliability diagram needs at least one bin");
  const double width = 480, height = 480, margin = 56;
  const double plot = width - 2 * margin;
  auto px = [&](double unit) { return margin + unit * plot; };
  auto py = [&](double unit) { return height - margin - unit * plot; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + coord(width) + "\" height=\"" +
         coord(height) + "\" viewBox=\"0 0 " + coord(width) + " " + coord(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + coord(width) + "\" height=\"" + coord(height) +
         "\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + coord(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         xml_escape(title) + "</text>\n";
  // axes
  svg += "<line x1=\"" + coord(px(0)) + "\" y1=\"" + coord(py(0)) + "\" x2=\"" + coord(px(1)) +
         "\" y2=\"" + coord(py(0)) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + coord(px(0)) + "\" y1=\"" + coord(py(0)) + "\" x2=\"" + coord(px(0)) +
         "\" y2=\"" + coord(py(1)) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  // bars: empty bins draw nothing, leaving a gap
  for (const auto& bin : bins) {
    if (bin.count == 0 || !bin.empirical_accuracy) continue;
    double acc = *bin.empirical_accuracy;
    double x0 = px(bin.lo), x1 = px(bin.hi);
    double y = py(acc);
    svg += "<rect class=\"bar\" x=\"" + coord(x0 + 1) + "\" y=\"" + coord(y) + "\" width=\"" +
           coord(x1 - x0 - 2) + "\" height=\"" + coord(py(0) - y) +
           "\" fill=\"#4878a8\" stroke=\"#2c4f75\" stroke-width=\"1\"/>\n";
    if (bin.mean_confidence) {
      double cy = py(*bin.mean_confidence);
      svg += "<line class=\"conf\" x1=\"" + coord(x0 + 1) + "\" y1=\"" + coord(cy) + "\" x2=\"" +
             coord(x1 - 1) + "\" y2=\"" + coord(cy) +
             "\" stroke=\"#c44e52\" stroke-width=\"2\"/>\n";
    }
  }
  // identity diagonal
  svg += "<line class=\"diagonal\" x1=\"" + coord(px(0)) + "\" y1=\"" + coord(py(0)) +
         "\" x2=\"" + coord(px(1)) + "\" y2=\"" + coord(py(1)) +
         "\" stroke=\"#666666\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";
  // axis labels
  for (int i = 0; i <= 10; i += 2) {
    double unit = i / 10.0;
    svg += "<text x=\"" + coord(px(unit)) + "\" y=\"" + coord(py(0) + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
           format_fixed(unit, 1) + "</text>\n";
    svg += "<text x=\"" + coord(px(0) - 8) + "\" y=\"" + coord(py(unit) + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
           format_fixed(unit, 1) + "</text>\n";
  }
  svg += "<text x=\"" + coord(width / 2) + "\" y=\"" + coord(height - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">confidence</text>\n";
  svg += "<text x=\"16\" y=\"" + coord(height / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
         coord(height / 2) + ")\">accuracy</text>\n";
  svg += "</svg>\n";
  return svg;
}

void emit_reliability_svg(const CalibrationReport& report, const std::filesystem::path& path) {
  if (report.bins.empty()) throw ReportError("calibration report has no bins");
  write_text_file(path, reliability_svg(report.bins, report.model_key.label()));
}

std::string likert_svg(const std::vector<BucketStats>& stats) {
  if (stats.empty()) throw ReportError("likert chart needs at least one variant");
  const double bar_w = 640, bar_h = 36, row_gap = 18, left = 180, top = 20;
  double height = top + stats.size() * (bar_h + row_gap) + 10;
  double width = left + bar_w + 40;

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + coord(width) + "\" height=\"" +
         coord(height) + "\" viewBox=\"0 0 " + coord(width) + " " + coord(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + coord(width) + "\" height=\"" + coord(height) +
         "\" fill=\"#ffffff\"/>\n";
  double y = top;
  for (const auto& variant : stats) {
    svg += "<text x=\"" + coord(left - 10) + "\" y=\"" + coord(y + bar_h / 2 + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
           xml_escape(variant.prompt_variant_id) + "</text>\n";
    double x = left;
    for (std::size_t s = 0; s < variant.buckets.size(); ++s) {
      const auto& bucket = variant.buckets[s];
      if (variant.n == 0 || bucket.count == 0) continue;
      double w = bar_w * static_cast<double>(bucket.count) / static_cast<double>(variant.n);
      const char* fill = kSegmentFill[std::min<std::size_t>(s, 5)];
      if (bucket.label == "NA") fill = kSegmentFill[5];
      svg += "<rect class=\"segment\" x=\"" + coord(x) + "\" y=\"" + coord(y) + "\" width=\"" +
             coord(w) + "\" height=\"" + coord(bar_h) + "\" fill=\"" + fill +
             "\" stroke=\"#ffffff\" stroke-width=\"1\"/>\n";
      std::string text = bucket.label;
      if (bucket.accuracy)
        text += " " + format_percent(*bucket.accuracy, 0);
      svg += "<text x=\"" + coord(x + w / 2) + "\" y=\"" + coord(y + bar_h / 2 + 4) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
             xml_escape(text) + "</text>\n";
      x += w;
    }
    y += bar_h + row_gap;
  }
  svg += "</svg>\n";
  return svg;
}

void emit_likert_svg(const std::vector<BucketStats>& stats, const std::filesystem::path& path) {
  write_text_file(path, likert_svg(stats));
}

std::string manifest_json(const Manifest& manifest) {
  ordered_json j;
  j["tool_version"] = manifest.tool_version;
  j["config_hash"] = manifest.config_hash;
  j["seed"] = manifest.seed;
  ordered_json inputs = ordered_json::object();
  for (const auto& [name, value] : manifest.inputs) inputs[name] = value;
  j["inputs"] = std::move(inputs);
  j["generated_at"] = manifest.generated_at;
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw ReportError("write failed for " + path.string());
}

}  // namespace enseval
