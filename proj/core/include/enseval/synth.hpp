#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enseval/corpus.hpp"
#include "enseval/toml.hpp"

namespace enseval {

class SynthError : public std::runtime_error {
 public:
  explicit SynthError(const std::string& msg) : std::runtime_error(msg) {}
};

// How per-example correctness draws relate across models.
enum class Correlation { independent, clustered };

// How sequence log-probabilities relate to the per-example success chance q:
// calibrated plants exp(l/N) = q; temperature plants exp(l/N) = q^t0, so a
// grid fit recovers t0.
enum class ConfidenceLaw { calibrated, temperature };

std::string_view to_string(Correlation c);
std::optional<Correlation> correlation_from_string(std::string_view s);
std::string_view to_string(ConfidenceLaw law);
std::optional<ConfidenceLaw> confidence_law_from_string(std::string_view s);

struct SynthModelSpec {
  std::string model_id;
  Augmentation augmentation = Augmentation::vanilla;
  double rate = 0.5;  // marginal correctness rate
  // Optional conditional rates on retrieved-entity presence; fall back to
  // `rate` when unset.
  std::optional<double> rate_given_entity;
  std::optional<double> rate_given_no_entity;
};

struct SynthSpec {
  std::size_t n = 1000;
  std::vector<SynthModelSpec> models;
  Correlation correlation = Correlation::independent;
  ConfidenceLaw law = ConfidenceLaw::calibrated;
  double t0 = 1.0;
  int token_count_min = 1;
  int token_count_max = 6;
  double entity_rate = 0.8;       // fraction of examples with a retrieved entity
  double confidence_width = 0.25; // half-width of the per-example q spread

  void validate() const;  // throws SynthError
};

SynthSpec synth_spec_from_toml(const toml::Table& table);
SynthSpec load_synth_spec(const std::filesystem::path& path);

// Deterministic corpus generation. Per example the success chance q is drawn
// uniformly from rate +/- w with w = min(width, r - 0.01, 0.99 - r) clamped
// at 0, so the mean equals the planted rate and, under the calibrated law,
// exp(l/N) = q makes the corpus perfectly calibrated in expectation.
Corpus generate_synth(const SynthSpec& spec, std::uint64_t seed);

}  // namespace enseval
