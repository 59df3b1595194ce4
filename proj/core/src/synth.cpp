#include "enseval/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "enseval/util.hpp"

namespace enseval {

namespace {

// Distinct lowercase nouns; distinct after answer normalization too, so the
// exact-match oracle reproduces planted correctness bits.
constexpr std::array<const char*, 240> kWords = {
    "acorn",    "anchor",   "antler",   "apple",    "apron",    "arch",
    "arrow",    "badge",    "bakery",   "balloon",  "bamboo",   "banner",
    "barn",     "barrel",   "basket",   "beacon",   "beaver",   "bell",
    "bench",    "bicycle",  "birch",    "bison",    "blanket",  "boat",
    "bottle",   "boulder",  "bridge",   "brook",    "broom",    "bucket",
    "buoy",     "bus",      "cabin",    "cactus",   "camel",    "canal",
    "candle",   "canoe",    "canyon",   "carpet",   "carriage", "castle",
    "cedar",    "cellar",   "chapel",   "chimney",  "cliff",    "clover",
    "compass",  "condor",   "copper",   "coral",    "cottage",  "crane",
    "crater",   "creek",    "cricket",  "crow",     "crown",    "crystal",
    "curtain",  "dagger",   "daisy",    "deer",     "delta",    "dome",
    "donkey",   "dragon",   "drum",     "dune",     "eagle",    "easel",
    "elm",      "ember",    "engine",   "falcon",   "feather",  "fence",
    "fern",     "ferry",    "fiddle",   "fig",      "flag",     "flute",
    "fog",      "forge",    "fountain", "fox",      "frost",    "garnet",
    "gate",     "geyser",   "glacier",  "goat",     "goose",    "gorge",
    "granite",  "grape",    "grove",    "gull",     "hammer",   "harbor",
    "harp",     "hawk",     "hazel",    "hedge",    "heron",    "hill",
    "hive",     "hollow",   "hoof",     "horn",     "hut",      "iceberg",
    "inn",      "island",   "ivory",    "ivy",      "jade",     "jetty",
    "jug",      "juniper",  "kayak",    "kettle",   "kiln",     "kite",
    "ladder",   "lagoon",   "lantern",  "larch",    "lark",     "lava",
    "leaf",     "ledge",    "lemon",    "lighthouse", "lily",   "lime",
    "lobster",  "locket",   "loom",     "lotus",    "lynx",     "mango",
    "mantle",   "maple",    "marble",   "marsh",    "mast",     "meadow",
    "mill",     "mint",     "mirror",   "mole",     "moose",    "mosaic",
    "moss",     "moth",     "mule",     "mural",    "needle",   "nest",
    "oak",      "oar",      "oasis",    "obelisk",  "olive",    "onion",
    "opal",     "orchard",  "orchid",   "osprey",   "otter",    "owl",
    "paddle",   "pagoda",   "palm",     "parrot",   "peach",    "pear",
    "pebble",   "pelican",  "pepper",   "pier",     "pine",     "pitcher",
    "plateau",  "plaza",    "plow",     "plum",     "pond",     "poppy",
    "porch",    "prairie",  "prism",    "pulley",   "quail",    "quarry",
    "quill",    "rabbit",   "raft",     "rail",     "raven",    "reed",
    "reef",     "ribbon",   "ridge",    "river",    "robin",    "rose",
    "rudder",   "rug",      "saddle",   "sage",     "sail",     "salmon",
    "sand",     "satchel",  "seal",     "shed",     "shell",    "shore",
    "shovel",   "shrine",   "silo",     "slate",    "sled",     "spire",
    "spring",   "spruce",   "stable",   "stair",    "statue",   "steeple",
    "stone",    "stork",    "stream",   "swan",     "tent",     "thistle",
};

std::string pad6(std::size_t i) {
  std::string digits = std::to_string(i);
  std::string out = "ex";
  for (std::size_t k = digits.size(); k < 6; ++k) out += '0';
  return out + digits;
}

void check_rate(double rate, const std::string& what) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw SynthError(what + " must be in [0, 1], got " + format_double(rate));
}

}  // namespace

std::string_view to_string(Correlation c) {
  return c == Correlation::independent ? "independent" : "clustered";
}

std::optional<Correlation> correlation_from_string(std::string_view s) {
  if (s == "independent") return Correlation::independent;
  if (s == "clustered") return Correlation::clustered;
  return std::nullopt;
}

std::string_view to_string(ConfidenceLaw law) {
  return law == ConfidenceLaw::calibrated ? "calibrated" : "temperature";
}

std::optional<ConfidenceLaw> confidence_law_from_string(std::string_view s) {
  if (s == "calibrated") return ConfidenceLaw::calibrated;
  if (s == "temperature") return ConfidenceLaw::temperature;
  return std::nullopt;
}

void SynthSpec::validate() const {
  if (n == 0) throw SynthError("n must be positive");
  if (models.empty()) throw SynthError("at least one model is required");
  std::vector<ModelKey> seen;
  for (const auto& m : models) {
    if (m.model_id.empty()) throw SynthError("model id must be non-empty");
    ModelKey key{m.model_id, m.augmentation};
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw SynthError("duplicate model '" + key.label() + "'");
    seen.push_back(key);
    check_rate(m.rate, "rate of '" + key.label() + "'");
    if (m.rate_given_entity)
      check_rate(*m.rate_given_entity, "rate_given_entity of '" + key.label() + "'");
    if (m.rate_given_no_entity)
      check_rate(*m.rate_given_no_entity, "rate_given_no_entity of '" + key.label() + "'");
  }
  if (token_count_min < 1) throw SynthError("token_min must be >= 1");
  if (token_count_max < token_count_min) throw SynthError("token_max must be >= token_min");
  if (!(t0 > 0.0)) throw SynthError("t0 must be positive");
  check_rate(entity_rate, "entity_rate");
  if (!(confidence_width >= 0.0)) throw SynthError("confidence_width must be >= 0");
}

SynthSpec synth_spec_from_toml(const toml::Table& table) {
  SynthSpec spec;
  if (auto n = toml::get_int(table, "n")) {
    if (*n <= 0) throw SynthError("n must be positive");
    spec.n = static_cast<std::size_t>(*n);
  }
  if (auto s = toml::get_string(table, "correlation")) {
    auto c = correlation_from_string(*s);
    if (!c) throw SynthError("unknown correlation '" + *s + "'");
    spec.correlation = *c;
  }
  if (auto s = toml::get_string(table, "law")) {
    auto law = confidence_law_from_string(*s);
    if (!law) throw SynthError("unknown confidence law '" + *s + "'");
    spec.law = *law;
  }
  if (auto v = toml::get_double(table, "t0")) spec.t0 = *v;
  if (auto v = toml::get_double(table, "entity_rate")) spec.entity_rate = *v;
  if (auto v = toml::get_double(table, "confidence_width")) spec.confidence_width = *v;
  if (auto v = toml::get_int(table, "token_min")) spec.token_count_min = static_cast<int>(*v);
  if (auto v = toml::get_int(table, "token_max")) spec.token_count_max = static_cast<int>(*v);
  for (const toml::Table* entry : toml::get_table_array(table, "model")) {
    SynthModelSpec m;
    auto id = toml::get_string(*entry, "id");
    if (!id) throw SynthError("model entry needs an id");
    m.model_id = *id;
    if (auto s = toml::get_string(*entry, "augmentation")) {
      auto aug = augmentation_from_string(*s);
      if (!aug) throw SynthError("unknown augmentation '" + *s + "'");
      m.augmentation = *aug;
    }
    auto rate = toml::get_double(*entry, "rate");
    if (!rate) throw SynthError("model '" + m.model_id + "' needs a rate");
    m.rate = *rate;
    if (auto v = toml::get_double(*entry, "rate_given_entity")) m.rate_given_entity = *v;
    if (auto v = toml::get_double(*entry, "rate_given_no_entity")) m.rate_given_no_entity = *v;
    spec.models.push_back(std::move(m));
  }
  spec.validate();
  return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  return synth_spec_from_toml(toml::parse_file(path));
}

Corpus generate_synth(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Corpus corpus;
  Rng rng(seed);
  const double t_eff = spec.law == ConfidenceLaw::temperature ? spec.t0 : 1.0;

  for (std::size_t i = 0; i < spec.n; ++i) {
    std::string id = pad6(i);
    bool entity_present = rng.bernoulli(spec.entity_rate);
    const std::string gold = kWords[rng.index(kWords.size())];
    const std::string subject = kWords[rng.index(kWords.size())];
    const std::string entity_word = kWords[rng.index(kWords.size())];

    GoldRecord g;
    g.example_id = id;
    g.question = "which " + subject + " is shown beside the " + entity_word + "?";
    g.image_ref = "images/" + id + ".jpg";
    g.gold_answers = {gold};
    corpus.gold.emplace(id, std::move(g));

    // Both draws always happen so the stream stays aligned across modes.
    double shared_u = rng.uniform();
    for (const auto& m : spec.models) {
      double r = m.rate;
      if (entity_present && m.rate_given_entity) r = *m.rate_given_entity;
      if (!entity_present && m.rate_given_no_entity) r = *m.rate_given_no_entity;
      double w = std::min({spec.confidence_width, r - 0.01, 0.99 - r});
      if (w < 0.0) w = 0.0;
      double q = r + w * (2.0 * rng.uniform() - 1.0);
      q = std::clamp(q, 1e-4, 1.0 - 1e-4);
      double own_u = rng.uniform();
      bool correct = (spec.correlation == Correlation::clustered ? shared_u : own_u) < q;
      int token_count = rng.int_range(spec.token_count_min, spec.token_count_max);

      PredictionRecord p;
      p.example_id = id;
      p.model_id = m.model_id;
      p.augmentation = m.augmentation;
      p.token_count = token_count;
      p.seq_logprob = static_cast<double>(token_count) * t_eff * std::log(q);
      if (correct) {
        p.answer = gold;
        if (rng.bernoulli(0.5) && !p.answer.empty())
          p.answer[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(p.answer[0])));
      } else {
        std::size_t d = rng.index(kWords.size() - 1);
        std::size_t gold_idx =
            static_cast<std::size_t>(std::find_if(kWords.begin(), kWords.end(),
                                                  [&](const char* w2) { return gold == w2; }) -
                                     kWords.begin());
        if (d >= gold_idx) ++d;
        p.answer = kWords[d];
      }
      if (m.augmentation == Augmentation::lens) {
        p.context = "the " + subject + " beside the " + entity_word + " is the " + gold + ".";
        if (entity_present) p.lens_entity = entity_word;
      } else if (m.augmentation == Augmentation::promptcap) {
        p.caption = "a photo of a " + subject + " and a " + entity_word + ".";
      }
      corpus.predictions[id].emplace(p.key(), std::move(p));
    }
  }
  corpus.refresh_model_keys();
  return corpus;
}

}  // namespace enseval
