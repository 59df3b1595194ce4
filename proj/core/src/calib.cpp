#include "enseval/calib.hpp"

#include <algorithm>
#include <cmath>

#include "enseval/util.hpp"

namespace enseval {

double brier_score(const std::vector<ConfidencePair>& pairs) {
  if (pairs.empty()) throw CalibError("brier_score needs at least one pair");
  double sum = 0.0;
  for (const auto& p : pairs) {
    double d = p.confidence - (p.correct ? 1.0 : 0.0);
    sum += d * d;
  }
  return sum / static_cast<double>(pairs.size());
}

std::vector<ReliabilityBin> reliability_bins(const std::vector<ConfidencePair>& pairs,
                                             int bin_count) {
  if (bin_count < 1) throw CalibError("bin_count must be >= 1");
  std::size_t b = static_cast<std::size_t>(bin_count);
  std::vector<ReliabilityBin> bins(b);
  std::vector<double> conf_sum(b, 0.0);
  std::vector<std::size_t> hit(b, 0);
  double width = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    bins[i].lo = static_cast<double>(i) * width;
    bins[i].hi = i + 1 == b ? 1.0 : static_cast<double>(i + 1) * width;
  }
  for (const auto& p : pairs) {
    auto idx = static_cast<std::size_t>(p.confidence * static_cast<double>(b));
    if (idx >= b) idx = b - 1;  // confidence 1.0 belongs to the top bin
    ++bins[idx].count;
    conf_sum[idx] += p.confidence;
    if (p.correct) ++hit[idx];
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (bins[i].count == 0) continue;
    bins[i].mean_confidence = conf_sum[i] / static_cast<double>(bins[i].count);
    bins[i].empirical_accuracy =
        static_cast<double>(hit[i]) / static_cast<double>(bins[i].count);
  }
  return bins;
}

double ece(const std::vector<ConfidencePair>& pairs, int bin_count) {
  if (pairs.empty()) throw CalibError("ece needs at least one pair");
  auto bins = reliability_bins(pairs, bin_count);
  double total = 0.0;
  double n = static_cast<double>(pairs.size());
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    total += (static_cast<double>(bin.count) / n) *
             std::abs(*bin.empirical_accuracy - *bin.mean_confidence);
  }
  return total;
}

double apply_temperature(double raw_logprob, double t) {
  if (t <= 0.0) throw CalibError("temperature must be positive, got " + format_double(t));
  return std::exp(raw_logprob / t);
}

std::vector<double> TemperatureGrid::values() const {
  if (t_min <= 0.0) throw CalibError("grid t_min must be positive");
  if (t_max < t_min) throw CalibError("grid t_max must be >= t_min");
  if (points < 2) throw CalibError("grid needs at least 2 points");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(points));
  if (spacing == Spacing::log_spaced) {
    double lo = std::log(t_min);
    double step = (std::log(t_max) - lo) / static_cast<double>(points - 1);
    for (int i = 0; i < points; ++i) out.push_back(std::exp(lo + step * i));
  } else {
    double step = (t_max - t_min) / static_cast<double>(points - 1);
    for (int i = 0; i < points; ++i) out.push_back(t_min + step * i);
  }
  out.front() = t_min;
  out.back() = t_max;
  if (t_min <= 1.0 && 1.0 <= t_max) {
    std::size_t nearest = 0;
    double best = std::abs(out[0] - 1.0);
    for (std::size_t i = 1; i < out.size(); ++i) {
      double d = std::abs(out[i] - 1.0);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    out[nearest] = 1.0;
  }
  return out;
}

TemperatureFit fit_temperature(const std::vector<LogprobPair>& pairs,
                               const TemperatureGrid& grid, int bin_count) {
  if (pairs.empty()) throw CalibError("fit_temperature needs at least one pair");
  std::vector<double> ts = grid.values();
  TemperatureFit fit;
  bool first = true;
  std::vector<ConfidencePair> scaled(pairs.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      scaled[j].confidence = apply_temperature(pairs[j].logprob, ts[i]);
      scaled[j].correct = pairs[j].correct;
    }
    double value = grid.objective == TemperatureGrid::Objective::ece
                       ? ece(scaled, bin_count)
                       : brier_score(scaled);
    if (first || value < fit.objective_value) {  // strict: ties keep smaller t
      fit.t_star = ts[i];
      fit.objective_value = value;
      fit.grid_index = i;
      first = false;
    }
  }
  return fit;
}

namespace {

std::vector<ConfidencePair> at_temperature(const std::vector<LogprobPair>& pairs, double t) {
  std::vector<ConfidencePair> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].confidence = apply_temperature(pairs[i].logprob, t);
    out[i].correct = pairs[i].correct;
  }
  return out;
}

}  // namespace

CalibrationReport calibration_report(const Corpus& corpus, const ModelKey& model_key,
                                     const EquivalenceOracle& oracle, const TemperatureGrid& grid,
                                     int bin_count, bool use_normalized,
                                     std::optional<HoldoutSpec> holdout) {
  std::vector<LogprobPair> pairs;
  for (const auto& id : corpus.example_ids()) {
    const PredictionRecord* rec = corpus.find(id, model_key);
    if (!rec) continue;
    LogprobPair p;
    p.logprob = use_normalized ? rec->seq_logprob / static_cast<double>(rec->token_count)
                               : rec->seq_logprob;
    p.correct = oracle.is_correct(rec->answer, corpus.gold.at(id).gold_answers);
    pairs.push_back(p);
  }
  if (pairs.empty()) {
    throw CalibError("no predictions for model " + model_key.label());
  }

  CalibrationReport report;
  report.model_key = model_key;
  report.n = pairs.size();
  report.used_normalized = use_normalized;
  report.bin_count = bin_count;

  auto raw = at_temperature(pairs, 1.0);
  report.ece_value = ece(raw, bin_count);
  report.brier = brier_score(raw);
  report.bins = reliability_bins(raw, bin_count);

  const std::vector<LogprobPair>* fit_set = &pairs;
  const std::vector<LogprobPair>* eval_set = &pairs;
  std::vector<LogprobPair> fit_part, eval_part;
  if (holdout) {
    if (holdout->fraction <= 0.0 || holdout->fraction >= 1.0) {
      throw CalibError("holdout fraction must lie strictly between 0 and 1");
    }
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(holdout->seed);
    rng.shuffle(order);
    auto cut = static_cast<std::size_t>(
        std::floor(holdout->fraction * static_cast<double>(pairs.size())));
    if (cut == 0 || cut == pairs.size()) {
      throw CalibError("holdout split left one side empty");
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < cut ? fit_part : eval_part).push_back(pairs[order[i]]);
    }
    fit_set = &fit_part;
    eval_set = &eval_part;
  }

  TemperatureFit fit = fit_temperature(*fit_set, grid, bin_count);
  report.temperature = fit.t_star;
  auto recal = at_temperature(*eval_set, fit.t_star);
  report.ece_recal = ece(recal, bin_count);
  report.brier_recal = brier_score(recal);
  report.bins_recal = reliability_bins(recal, bin_count);
  return report;
}

}  // namespace enseval
