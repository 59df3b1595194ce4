#pragma once

// Shared fixtures for the unit and acceptance suites: tiny corpus builders,
// a scratch-directory guard, and a small XML well-formedness scanner used to
// validate emitted SVG files without pulling in an XML library.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "enseval/corpus.hpp"

namespace testsup {

// Unique scratch directory, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<std::uint64_t> counter{0};
    std::random_device rd;
    std::ostringstream name;
    name << "enseval_test_" << std::hex << rd() << "_" << counter.fetch_add(1);
    path_ = std::filesystem::temp_directory_path() / name.str();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::size_t count_substr(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

inline enseval::GoldRecord mk_gold(std::string id, std::string question,
                                   std::vector<std::string> answers) {
  enseval::GoldRecord g;
  g.example_id = std::move(id);
  g.question = std::move(question);
  g.image_ref = "images/" + g.example_id + ".jpg";
  g.gold_answers = std::move(answers);
  return g;
}

inline enseval::PredictionRecord mk_pred(std::string id, std::string model,
                                         enseval::Augmentation aug, std::string answer,
                                         double seq_logprob = -1.0, int token_count = 1) {
  enseval::PredictionRecord p;
  p.example_id = std::move(id);
  p.model_id = std::move(model);
  p.augmentation = aug;
  p.answer = std::move(answer);
  p.seq_logprob = seq_logprob;
  p.token_count = token_count;
  return p;
}

inline enseval::Corpus mk_corpus(std::vector<enseval::GoldRecord> golds,
                                 std::vector<enseval::PredictionRecord> preds) {
  enseval::Corpus corpus;
  for (auto& g : golds) {
    std::string id = g.example_id;
    corpus.gold.emplace(std::move(id), std::move(g));
  }
  for (auto& p : preds) {
    corpus.predictions[p.example_id].emplace(p.key(), std::move(p));
  }
  corpus.refresh_model_keys();
  return corpus;
}

// Minimal XML well-formedness scan: balanced, properly nested tags, quoted
// attribute values, no raw '<' in text, entities restricted to the five
// predefined ones. Returns an empty string when well-formed, else a message.
inline std::string xml_defect(std::string_view text) {
  std::size_t i = 0;
  std::vector<std::string> stack;
  std::size_t roots = 0;
  auto is_name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' ||
           c == '.';
  };
  auto entity_ok = [&](std::size_t at) {
    for (const char* e : {"&amp;", "&lt;", "&gt;", "&quot;", "&apos;"}) {
      std::string_view ent(e);
      if (text.substr(at, ent.size()) == ent) return true;
    }
    return false;
  };
  if (text.substr(0, 5) == "<?xml") {
    std::size_t end = text.find("?>");
    if (end == std::string_view::npos) return "unterminated XML declaration";
    i = end + 2;
  }
  while (i < text.size()) {
    char c = text[i];
    if (c == '<') {
      if (i + 1 < text.size() && text.compare(i, 4, "<!--") == 0) {
        std::size_t end = text.find("-->", i + 4);
        if (end == std::string_view::npos) return "unterminated comment";
        i = end + 3;
        continue;
      }
      bool closing = i + 1 < text.size() && text[i + 1] == '/';
      std::size_t p = i + (closing ? 2 : 1);
      std::size_t name_start = p;
      while (p < text.size() && is_name_char(text[p])) ++p;
      if (p == name_start) return "empty tag name at offset " + std::to_string(i);
      std::string name(text.substr(name_start, p - name_start));
      if (closing) {
        while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
        if (p >= text.size() || text[p] != '>') return "malformed closing tag " + name;
        if (stack.empty() || stack.back() != name) return "mismatched closing tag " + name;
        stack.pop_back();
        i = p + 1;
        continue;
      }
      bool self_closing = false;
      while (p < text.size() && text[p] != '>') {
        if (std::isspace(static_cast<unsigned char>(text[p]))) {
          ++p;
          continue;
        }
        if (text[p] == '/') {
          if (p + 1 >= text.size() || text[p + 1] != '>') return "stray '/' in tag " + name;
          self_closing = true;
          ++p;
          continue;
        }
        std::size_t attr_start = p;
        while (p < text.size() && is_name_char(text[p])) ++p;
        if (p == attr_start) return "bad attribute in tag " + name;
        if (p >= text.size() || text[p] != '=') return "attribute without value in tag " + name;
        ++p;
        if (p >= text.size() || (text[p] != '"' && text[p] != '\'')) {
          return "unquoted attribute value in tag " + name;
        }
        char quote = text[p];
        std::size_t close = text.find(quote, p + 1);
        if (close == std::string_view::npos) return "unterminated attribute in tag " + name;
        for (std::size_t k = p + 1; k < close; ++k) {
          if (text[k] == '<') return "raw '<' in attribute of tag " + name;
          if (text[k] == '&' && !entity_ok(k)) return "bad entity in attribute of tag " + name;
        }
        p = close + 1;
      }
      if (p >= text.size()) return "unterminated tag " + name;
      if (!self_closing) {
        if (stack.empty()) ++roots;
        stack.push_back(name);
      } else if (stack.empty()) {
        ++roots;
      }
      i = p + 1;
      continue;
    }
    if (c == '&') {
      if (!entity_ok(i)) return "bad entity at offset " + std::to_string(i);
      i = text.find(';', i) + 1;
      continue;
    }
    if (c == '>') return "raw '>' outside tag at offset " + std::to_string(i);
    if (!stack.empty() || std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    return "text outside root element at offset " + std::to_string(i);
  }
  if (!stack.empty()) return "unclosed tag " + stack.back();
  if (roots != 1) return "expected one root element, found " + std::to_string(roots);
  return "";
}

}  // namespace testsup
