#include "enseval/match.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "enseval/util.hpp"

namespace enseval {

namespace {

// Decodes one UTF-8 scalar at s[i]; on malformed input returns the single
// byte value and advances by one so normalization stays total.
std::uint32_t decode_utf8(std::string_view s, std::size_t& i) {
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  auto cont = [&](std::size_t k) {
    return k < s.size() && (byte(k) & 0xC0) == 0x80;
  };
  if ((b0 & 0xE0) == 0xC0 && cont(i + 1)) {
    std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x1F) << 6) |
                       (byte(i + 1) & 0x3F);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2)) {
    std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x0F) << 12) |
                       (static_cast<std::uint32_t>(byte(i + 1) & 0x3F) << 6) |
                       (byte(i + 2) & 0x3F);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
    std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x07) << 18) |
                       (static_cast<std::uint32_t>(byte(i + 1) & 0x3F) << 12) |
                       (static_cast<std::uint32_t>(byte(i + 2) & 0x3F) << 6) |
                       (byte(i + 3) & 0x3F);
    i += 4;
    return cp;
  }
  ++i;
  return b0;
}

void encode_utf8(std::uint32_t cp, std::string& out) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::uint32_t to_lower_cp(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  // Latin-1 capitals, skipping the multiplication sign
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;
  // Latin Extended-A case pairs
  if ((cp >= 0x0100 && cp <= 0x0137) || (cp >= 0x014A && cp <= 0x0177)) {
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x0139 && cp <= 0x0148) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp == 0x0178) return 0x00FF;
  if (cp >= 0x0179 && cp <= 0x017E) return (cp % 2 == 1) ? cp + 1 : cp;
  // Greek capitals (0x03A2 is unassigned)
  if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) return cp + 0x20;
  // Cyrillic
  if (cp >= 0x0410 && cp <= 0x042F) return cp + 0x20;
  if (cp >= 0x0400 && cp <= 0x040F) return cp + 0x50;
  return cp;
}

bool is_space_cp(std::uint32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
    case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
    case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct_cp(std::uint32_t cp) {
  if (cp < 0x80) {
    return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') ||
           (cp >= '[' && cp <= '`') || (cp >= '{' && cp <= '~');
  }
  switch (cp) {
    case 0x00A1: case 0x00A7: case 0x00AB: case 0x00B6: case 0x00B7:
    case 0x00BB: case 0x00BF:
      return true;
    default:
      break;
  }
  if (cp >= 0x2010 && cp <= 0x2027) return true;  // dashes, quotes, bullets
  if (cp >= 0x2030 && cp <= 0x205E) return true;
  if (cp >= 0x3001 && cp <= 0x3003) return true;  // CJK comma, stop, ditto
  if (cp >= 0x3008 && cp <= 0x3011) return true;  // CJK brackets
  if (cp >= 0x3014 && cp <= 0x301F) return true;
  return false;
}

bool sorted_disjoint(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return false;
    if (a[i] < b[j]) ++i;
    else ++j;
  }
  return true;
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < raw.size()) {
    std::uint32_t cp = decode_utf8(raw, i);
    if (is_space_cp(cp)) {
      pending_space = true;
      continue;
    }
    if (is_punct_cp(cp)) continue;
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    encode_utf8(to_lower_cp(cp), out);
  }
  return out;
}

std::string_view to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::exact: return "exact";
    case OracleKind::synonym_table: return "synonym_table";
    case OracleKind::semantic_client: return "semantic_client";
  }
  return "exact";
}

std::string SemanticEndpoint::describe() const {
  return host + ":" + std::to_string(port) + path;
}

SemanticClientError::SemanticClientError(const std::string& detail,
                                         const SemanticEndpoint& endpoint, const std::string& a,
                                         const std::string& b)
    : std::runtime_error("semantic matcher at " + endpoint.describe() + " failed for (\"" + a +
                         "\", \"" + b + "\"): " + detail) {}

struct EquivalenceOracle::State {
  OracleKind kind = OracleKind::exact;
  // normalized string -> ascending group ids; a string may sit in several
  // groups, which is what makes synonym equivalence non-transitive
  std::map<std::string, std::vector<std::size_t>> group_of;
  SemanticEndpoint endpoint;
  double threshold = 0.5;
  std::unique_ptr<Semaphore> gate;

  mutable std::mutex mu;
  mutable std::map<std::pair<std::string, std::string>, double> memo;
  mutable std::size_t calls = 0;

  double remote_score(const std::string& a, const std::string& b) const {
    {
      std::lock_guard lock(mu);
      auto it = memo.find({a, b});
      if (it != memo.end()) return it->second;
    }
    SemaphoreGuard guard(*gate);
    httplib::Client client(endpoint.host, endpoint.port);
    client.set_connection_timeout(endpoint.timeout_sec, 0);
    client.set_read_timeout(endpoint.timeout_sec, 0);
    nlohmann::json req{{"a", a}, {"b", b}};
    auto res = client.Post(endpoint.path, req.dump(), "application/json");
    if (!res) {
      throw SemanticClientError("transport error: " + httplib::to_string(res.error()), endpoint,
                                a, b);
    }
    if (res->status != 200) {
      throw SemanticClientError("HTTP status " + std::to_string(res->status), endpoint, a, b);
    }
    double score;
    try {
      auto body = nlohmann::json::parse(res->body);
      if (!body.contains("score") || !body["score"].is_number()) {
        throw SemanticClientError("response lacks numeric 'score'", endpoint, a, b);
      }
      score = body["score"].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw SemanticClientError(std::string("malformed response: ") + e.what(), endpoint, a, b);
    }
    std::lock_guard lock(mu);
    memo[{a, b}] = score;
    ++calls;
    return score;
  }
};

EquivalenceOracle EquivalenceOracle::exact() {
  auto state = std::make_shared<State>();
  state->kind = OracleKind::exact;
  return EquivalenceOracle(std::move(state));
}

EquivalenceOracle EquivalenceOracle::synonym_table(
    const std::vector<std::vector<std::string>>& groups) {
  auto state = std::make_shared<State>();
  state->kind = OracleKind::synonym_table;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto& raw : groups[g]) {
      std::string norm = normalize_answer(raw);
      if (norm.empty()) continue;
      auto& ids = state->group_of[norm];
      if (ids.empty() || ids.back() != g) ids.push_back(g);
    }
  }
  return EquivalenceOracle(std::move(state));
}

EquivalenceOracle EquivalenceOracle::synonym_table_from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open synonym file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(ss.str());
  if (!j.is_array()) throw std::runtime_error("synonym file must hold a list of groups");
  std::vector<std::vector<std::string>> groups;
  for (const auto& g : j) {
    std::vector<std::string> group;
    for (const auto& s : g) group.push_back(s.get<std::string>());
    groups.push_back(std::move(group));
  }
  return synonym_table(groups);
}

EquivalenceOracle EquivalenceOracle::semantic_client(SemanticEndpoint endpoint, double threshold,
                                                     int parallelism) {
  auto state = std::make_shared<State>();
  state->kind = OracleKind::semantic_client;
  state->endpoint = std::move(endpoint);
  state->threshold = threshold;
  state->gate = std::make_unique<Semaphore>(parallelism < 1 ? 1 : parallelism);
  return EquivalenceOracle(std::move(state));
}

OracleKind EquivalenceOracle::kind() const { return state_->kind; }

double EquivalenceOracle::threshold() const { return state_->threshold; }

std::size_t EquivalenceOracle::calls() const {
  std::lock_guard lock(state_->mu);
  return state_->calls;
}

MatchVerdict EquivalenceOracle::verdict(std::string_view a, std::string_view b) const {
  MatchVerdict v;
  v.oracle_kind = state_->kind;
  std::string na = normalize_answer(a);
  std::string nb = normalize_answer(b);
  if (na.empty() || nb.empty()) return v;
  if (na == nb) {
    v.equivalent = true;
    v.score = 1.0;
    return v;
  }
  switch (state_->kind) {
    case OracleKind::exact:
      return v;
    case OracleKind::synonym_table: {
      auto ia = state_->group_of.find(na);
      auto ib = state_->group_of.find(nb);
      if (ia != state_->group_of.end() && ib != state_->group_of.end() &&
          !sorted_disjoint(ia->second, ib->second)) {
        v.equivalent = true;
        v.score = 1.0;
      }
      return v;
    }
    case OracleKind::semantic_client: {
      if (nb < na) std::swap(na, nb);  // memo key is order-insensitive
      v.score = state_->remote_score(na, nb);
      v.equivalent = v.score >= state_->threshold;
      return v;
    }
  }
  return v;
}

bool EquivalenceOracle::equivalent(std::string_view a, std::string_view b) const {
  return verdict(a, b).equivalent;
}

bool EquivalenceOracle::is_correct(std::string_view pred,
                                   const std::vector<std::string>& gold_answers) const {
  if (normalize_answer(pred).empty()) return false;
  for (const auto& gold : gold_answers) {
    if (verdict(pred, gold).equivalent) return true;
  }
  return false;
}

ClusterResult cluster_answers(const std::vector<std::pair<ModelKey, std::string>>& answers,
                              const EquivalenceOracle& oracle) {
  ClusterResult result;
  for (const auto& [key, answer] : answers) {
    if (normalize_answer(answer).empty()) {
      result.skipped_empty.push_back(key);
      continue;
    }
    bool joined = false;
    for (auto& cluster : result.clusters) {
      if (oracle.verdict(answer, cluster.representative).equivalent) {
        cluster.members.push_back(key);
        joined = true;
        break;
      }
    }
    if (!joined) {
      result.clusters.push_back({answer, key, {key}});
    }
  }
  return result;
}

}  // namespace enseval
