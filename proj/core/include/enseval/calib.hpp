#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enseval/corpus.hpp"
#include "enseval/match.hpp"

namespace enseval {

class CalibError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfidencePair {
  double confidence = 0.0;  // in [0,1]
  bool correct = false;
};

struct LogprobPair {
  double logprob = 0.0;  // <= 0
  bool correct = false;
};

// Mean of (confidence - indicator(correct))^2.
double brier_score(const std::vector<ConfidencePair>& pairs);

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_confidence;     // absent when the bin is empty
  std::optional<double> empirical_accuracy;  // absent when the bin is empty
};

// Equal-width bins over [0,1]; confidence exactly 1.0 lands in the top bin.
std::vector<ReliabilityBin> reliability_bins(const std::vector<ConfidencePair>& pairs,
                                             int bin_count);

// Sum over bins of (count/n) * |accuracy - mean confidence|; empty bins add 0.
double ece(const std::vector<ConfidencePair>& pairs, int bin_count);

// exp(l / t). Monotone decreasing in t for l < 0; identity at t = 1.
double apply_temperature(double raw_logprob, double t);

struct TemperatureGrid {
  enum class Spacing { log_spaced, linear };
  enum class Objective { ece, brier };

  double t_min = 0.01;
  double t_max = 100.0;
  int points = 201;
  Spacing spacing = Spacing::log_spaced;
  Objective objective = Objective::ece;

  // Ascending grid values. The point nearest 1.0 is snapped to exactly 1.0
  // when the grid brackets it, so the identity temperature is always tested.
  std::vector<double> values() const;
};

struct TemperatureFit {
  double t_star = 1.0;
  double objective_value = 0.0;
  std::size_t grid_index = 0;
};

// Evaluates the grid objective on exp(l/t); minimum wins, ties to smallest t.
TemperatureFit fit_temperature(const std::vector<LogprobPair>& pairs,
                               const TemperatureGrid& grid, int bin_count);

struct HoldoutSpec {
  double fraction = 0.5;  // share of examples used to fit the temperature
  std::uint64_t seed = 0;
};

struct CalibrationReport {
  ModelKey model_key;
  std::size_t n = 0;
  double ece_value = 0.0;
  double brier = 0.0;
  std::vector<ReliabilityBin> bins;
  std::optional<double> temperature;
  std::optional<double> ece_recal;
  std::optional<double> brier_recal;
  std::vector<ReliabilityBin> bins_recal;
  bool used_normalized = false;
  int bin_count = 10;
};

// Scores one model's predictions against gold, fits a temperature on the
// grid, and reports pre/post metrics. Confidence uses exp(l) or exp(l/N) per
// use_normalized. Default fits in-sample; holdout fits on a seeded split and
// evaluates the recalibrated metrics on the rest.
CalibrationReport calibration_report(const Corpus& corpus, const ModelKey& model_key,
                                     const EquivalenceOracle& oracle, const TemperatureGrid& grid,
                                     int bin_count, bool use_normalized,
                                     std::optional<HoldoutSpec> holdout = std::nullopt);

}  // namespace enseval
