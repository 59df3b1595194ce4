// Microbenchmarks for the hot paths: calibration metrics over large pair
// sets, answer normalization and clustering, and one meta-classifier
// gradient epoch.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "enseval/calib.hpp"
#include "enseval/fuse.hpp"
#include "enseval/match.hpp"

using namespace enseval;

namespace {

std::vector<ConfidencePair> make_pairs(std::size_t n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<ConfidencePair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double conf = unif(rng);
    pairs.push_back({conf, unif(rng) < conf});
  }
  return pairs;
}

std::vector<LogprobPair> make_logprob_pairs(std::size_t n) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  std::vector<LogprobPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double q = unif(rng);
    pairs.push_back({2.5 * std::log(q), unif(rng) < q});
  }
  return pairs;
}

void bm_ece(benchmark::State& state) {
  auto pairs = make_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ece(pairs, 10));
}
BENCHMARK(bm_ece)->Arg(1000)->Arg(100000);

void bm_brier(benchmark::State& state) {
  auto pairs = make_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(brier_score(pairs));
}
BENCHMARK(bm_brier)->Arg(1000)->Arg(100000);

void bm_fit_temperature(benchmark::State& state) {
  auto pairs = make_logprob_pairs(static_cast<std::size_t>(state.range(0)));
  TemperatureGrid grid;
  for (auto _ : state) benchmark::DoNotOptimize(fit_temperature(pairs, grid, 10).t_star);
}
BENCHMARK(bm_fit_temperature)->Arg(1000)->Arg(10000);

void bm_normalize_answer(benchmark::State& state) {
  const std::string raw = "  The Grand, UNION-Canal!!  (opened 1801)  ";
  for (auto _ : state) benchmark::DoNotOptimize(normalize_answer(raw));
}
BENCHMARK(bm_normalize_answer);

void bm_cluster_answers(benchmark::State& state) {
  EquivalenceOracle oracle = EquivalenceOracle::exact();
  std::vector<std::pair<ModelKey, std::string>> answers;
  const char* models[3] = {"palm", "gpt-3", "pali"};
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    answers.emplace_back(ModelKey{models[i % 3], Augmentation::vanilla},
                         "answer " + std::to_string(i % 4));
  }
  for (auto _ : state) benchmark::DoNotOptimize(cluster_answers(answers, oracle).clusters.size());
}
BENCHMARK(bm_cluster_answers)->Arg(9)->Arg(64);

void bm_meta_gradient_epoch(benchmark::State& state) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 18;
  std::vector<std::vector<double>> features(n, std::vector<double>(dim));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : features[i]) v = unif(rng);
    labels[i] = unif(rng) > 0.0 ? 1 : 0;
  }
  std::vector<double> weights(dim + 1, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(ovr_gradient(features, labels, weights, 1e-4));
}
BENCHMARK(bm_meta_gradient_epoch)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
