#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "enseval/calib.hpp"
#include "enseval/corpus.hpp"
#include "enseval/fuse.hpp"
#include "enseval/judge.hpp"
#include "enseval/match.hpp"
#include "enseval/util.hpp"

namespace enseval {

class ReportError : public std::runtime_error {
 public:
  explicit ReportError(const std::string& msg) : std::runtime_error(msg) {}
};

// One line of an accuracy table. `method` is a free-form tag ("single",
// "oracle", "majority", ...); `oracle` marks upper-bound rows. `delta` is
// filled against the designated baseline row, absent when no baseline is set.
struct AccuracyRow {
  std::string label;
  std::size_t n = 0;
  double accuracy = 0.0;
  std::string method;
  bool oracle = false;
  std::optional<double> delta;
};

bool operator==(const AccuracyRow& a, const AccuracyRow& b);

struct AccuracyTable {
  std::vector<AccuracyRow> rows;
  std::string baseline_label;  // empty when no baseline designated
};

bool operator==(const AccuracyTable& a, const AccuracyTable& b);

// Input for one table row: either a single model scored directly against
// gold, or a pre-computed choice set (ensemble output).
struct TableEntry {
  std::string label;
  std::optional<ModelKey> model;        // single-model row
  std::vector<EnsembleChoice> choices;  // method row (ignored when model set)
  std::string method = "single";
  bool oracle = false;
};

// Scores every entry against the corpus and computes deltas against the row
// named by baseline_label (empty: no deltas). Throws on empty input or
// duplicate labels.
AccuracyTable accuracy_table(const std::vector<TableEntry>& entries, const Corpus& corpus,
                             const EquivalenceOracle& oracle,
                             const std::string& baseline_label = "");

// Fixed-width text rendering; percentages shown with one decimal, half-up.
std::string render_table(const AccuracyTable& table);

// CSV / JSON exports. Numbers use shortest round-trip formatting so
// parse(emit(x)) == x exactly.
std::string table_to_csv(const AccuracyTable& table);
AccuracyTable table_from_csv(const std::string& csv);
std::string table_to_json(const AccuracyTable& table);

std::string bins_to_csv(const std::vector<ReliabilityBin>& bins);
std::vector<ReliabilityBin> bins_from_csv(const std::string& csv);

std::string buckets_to_csv(const std::vector<BucketStats>& stats);
std::vector<BucketStats> buckets_from_csv(const std::string& csv);

std::string calibration_report_json(const CalibrationReport& report);

// Reliability diagram: one bar per non-empty bin (empty bins leave gaps), a
// confidence tick per bar, and the identity diagonal. Byte-deterministic.
std::string reliability_svg(const std::vector<ReliabilityBin>& bins, const std::string& title);
void emit_reliability_svg(const CalibrationReport& report, const std::filesystem::path& path);

// Horizontal stacked bars, one per variant in input order; segment widths are
// proportional to bucket counts, labels show integer-percent accuracy, NA
// segment last. Byte-deterministic.
std::string likert_svg(const std::vector<BucketStats>& stats);
void emit_likert_svg(const std::vector<BucketStats>& stats, const std::filesystem::path& path);

// Provenance sidecar for a report bundle. generated_at is the only
// run-dependent field.
struct Manifest {
  std::string tool_version{kVersion};
  std::string config_hash;  // hex of the config file content hash
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // (name, path)
  std::string generated_at;                                 // UTC, ISO 8601
};

std::string manifest_json(const Manifest& manifest);
std::string utc_timestamp();

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace enseval
