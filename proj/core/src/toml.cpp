#include "enseval/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "enseval/util.hpp"

namespace enseval::toml {

namespace {

[[noreturn]] void type_error(const char* want, Value::Kind got) {
  throw std::runtime_error(std::string("toml value is not a ") + want +
                           " (kind=" + std::to_string(static_cast<int>(got)) + ")");
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 1;

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char get() {
    char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }
  bool consume(char c) {
    if (!eof() && peek() == c) {
      get();
      return true;
    }
    return false;
  }
  bool consume(std::string_view s) {
    if (text.substr(pos, s.size()) == s) {
      for (std::size_t i = 0; i < s.size(); ++i) get();
      return true;
    }
    return false;
  }
  void skip_ws_inline() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) get();
  }
  // whitespace, newlines and comments
  void skip_ws_and_comments() {
    for (;;) {
      skip_ws_inline();
      if (eof()) return;
      if (peek() == '#') {
        while (!eof() && peek() != '\n') get();
        continue;
      }
      if (peek() == '\n' || peek() == '\r') {
        get();
        continue;
      }
      return;
    }
  }
};

class Parser {
 public:
  explicit Parser(std::string_view text) : cur_{text} {}

  Table run() {
    Table root;
    Table* active = &root;
    for (;;) {
      cur_.skip_ws_and_comments();
      if (cur_.eof()) break;
      if (cur_.peek() == '[') {
        active = parse_header(root);
      } else {
        parse_key_value(*active);
      }
    }
    return root;
  }

 private:
  Cursor cur_;

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, cur_.line); }

  static Value* find_mut(Table& t, const std::string& key) {
    for (auto& [k, v] : t) {
      if (k == key) return &v;
    }
    return nullptr;
  }

  Table* parse_header(Table& root) {
    cur_.get();  // '['
    bool array_of_tables = cur_.consume('[');
    std::vector<std::string> path;
    for (;;) {
      cur_.skip_ws_inline();
      path.push_back(parse_key());
      cur_.skip_ws_inline();
      if (cur_.consume('.')) continue;
      break;
    }
    if (!cur_.consume(']')) fail("expected ']' in table header");
    if (array_of_tables && !cur_.consume(']')) fail("expected ']]' in array-of-tables header");
    end_of_line();

    Table* t = &root;
    for (std::size_t i = 0; i < path.size(); ++i) {
      bool last = i + 1 == path.size();
      Value* existing = find_mut(*t, path[i]);
      if (last && array_of_tables) {
        if (!existing) {
          t->emplace_back(path[i], Value(Array{}));
          existing = &t->back().second;
        }
        if (!existing->is_array()) fail("redefinition of key '" + path[i] + "' as array of tables");
        auto& arr = const_cast<Array&>(existing->as_array());
        arr.emplace_back(Value(Table{}));
        t = &const_cast<Table&>(arr.back().as_table());
        return t;
      }
      if (!existing) {
        t->emplace_back(path[i], Value(Table{}));
        existing = &t->back().second;
      }
      if (existing->is_array()) {
        auto& arr = const_cast<Array&>(existing->as_array());
        if (arr.empty() || !arr.back().is_table()) fail("key '" + path[i] + "' is not a table");
        t = &const_cast<Table&>(arr.back().as_table());
      } else if (existing->is_table()) {
        t = &const_cast<Table&>(existing->as_table());
      } else {
        fail("key '" + path[i] + "' is not a table");
      }
    }
    return t;
  }

  void parse_key_value(Table& t) {
    std::string key = parse_key();
    cur_.skip_ws_inline();
    if (cur_.consume('.')) fail("dotted keys are not supported");
    if (!cur_.consume('=')) fail("expected '=' after key '" + key + "'");
    cur_.skip_ws_inline();
    Value v = parse_value();
    if (find_mut(t, key)) fail("duplicate key '" + key + "'");
    t.emplace_back(std::move(key), std::move(v));
    end_of_line();
  }

  std::string parse_key() {
    cur_.skip_ws_inline();
    if (cur_.eof()) fail("expected key");
    if (cur_.peek() == '"') return parse_basic_string();
    if (cur_.peek() == '\'') return parse_literal_string();
    std::string key;
    while (!cur_.eof()) {
      char c = cur_.peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
        key += cur_.get();
      } else {
        break;
      }
    }
    if (key.empty()) fail("empty key");
    return key;
  }

  void end_of_line() {
    cur_.skip_ws_inline();
    if (cur_.eof()) return;
    if (cur_.peek() == '#') {
      while (!cur_.eof() && cur_.peek() != '\n') cur_.get();
    }
    if (cur_.eof()) return;
    if (cur_.consume('\r')) {
    }
    if (!cur_.consume('\n')) fail("trailing characters after value");
  }

  Value parse_value() {
    if (cur_.eof()) fail("expected value");
    char c = cur_.peek();
    if (c == '"') {
      if (cur_.consume("\"\"\"")) return Value(parse_multiline_basic());
      return Value(parse_basic_string());
    }
    if (c == '\'') {
      if (cur_.consume("'''")) return Value(parse_multiline_literal());
      return Value(parse_literal_string());
    }
    if (c == '[') return parse_array();
    if (cur_.consume("true")) return Value(true);
    if (cur_.consume("false")) return Value(false);
    return parse_number();
  }

  std::string parse_basic_string() {
    if (!cur_.consume('"')) fail("expected '\"'");
    std::string out;
    for (;;) {
      if (cur_.eof()) fail("unterminated string");
      if (cur_.peek() == '\n') fail("newline in single-line string");
      char c = cur_.get();
      if (c == '"') break;
      if (c == '\\') {
        out += parse_escape();
      } else {
        out += c;
      }
    }
    return out;
  }

  std::string parse_literal_string() {
    if (!cur_.consume('\'')) fail("expected '\\''");
    std::string out;
    for (;;) {
      if (cur_.eof()) fail("unterminated literal string");
      if (cur_.peek() == '\n') fail("newline in single-line string");
      char c = cur_.get();
      if (c == '\'') break;
      out += c;
    }
    return out;
  }

  std::string parse_multiline_basic() {
    std::string out;
    // a newline immediately after the opening delimiter is trimmed
    if (!cur_.eof() && cur_.peek() == '\r') cur_.get();
    if (!cur_.eof() && cur_.peek() == '\n') cur_.get();
    for (;;) {
      if (cur_.eof()) fail("unterminated multi-line string");
      if (cur_.consume("\"\"\"")) break;
      char c = cur_.get();
      if (c == '\\') {
        // line-ending backslash: trim whitespace through the next non-space
        if (!cur_.eof() && (cur_.peek() == '\n' || cur_.peek() == '\r' || cur_.peek() == ' ' ||
                            cur_.peek() == '\t')) {
          std::size_t mark = cur_.pos;
          bool saw_newline = false;
          while (!cur_.eof() && (cur_.peek() == '\n' || cur_.peek() == '\r' ||
                                 cur_.peek() == ' ' || cur_.peek() == '\t')) {
            if (cur_.peek() == '\n') saw_newline = true;
            cur_.get();
          }
          if (!saw_newline) {
            cur_.pos = mark;  // plain escape, not a continuation
            out += parse_escape();
          }
          continue;
        }
        out += parse_escape();
      } else if (c == '\r') {
        // normalize CRLF
      } else {
        out += c;
      }
    }
    return out;
  }

  std::string parse_multiline_literal() {
    std::string out;
    if (!cur_.eof() && cur_.peek() == '\r') cur_.get();
    if (!cur_.eof() && cur_.peek() == '\n') cur_.get();
    for (;;) {
      if (cur_.eof()) fail("unterminated multi-line literal string");
      if (cur_.consume("'''")) break;
      char c = cur_.get();
      if (c != '\r') out += c;
    }
    return out;
  }

  std::string parse_escape() {
    if (cur_.eof()) fail("dangling escape");
    char c = cur_.get();
    switch (c) {
      case 'n': return "\n";
      case 't': return "\t";
      case 'r': return "\r";
      case '"': return "\"";
      case '\\': return "\\";
      case 'b': return "\b";
      case 'f': return "\f";
      case 'u': return parse_unicode_escape(4);
      case 'U': return parse_unicode_escape(8);
      default: fail(std::string("unsupported escape '\\") + c + "'");
    }
  }

  std::string parse_unicode_escape(int digits) {
    unsigned long cp = 0;
    for (int i = 0; i < digits; ++i) {
      if (cur_.eof()) fail("truncated unicode escape");
      char c = cur_.get();
      cp <<= 4;
      if (c >= '0' && c <= '9') cp |= static_cast<unsigned long>(c - '0');
      else if (c >= 'a' && c <= 'f') cp |= static_cast<unsigned long>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') cp |= static_cast<unsigned long>(c - 'A' + 10);
      else fail("bad unicode escape digit");
    }
    // encode UTF-8
    std::string out;
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
    return out;
  }

  Value parse_array() {
    cur_.get();  // '['
    Array arr;
    for (;;) {
      cur_.skip_ws_and_comments();
      if (cur_.eof()) fail("unterminated array");
      if (cur_.consume(']')) break;
      arr.push_back(parse_value());
      cur_.skip_ws_and_comments();
      if (cur_.consume(',')) continue;
      if (cur_.consume(']')) break;
      if (cur_.eof()) fail("unterminated array");
    }
    return Value(std::move(arr));
  }

  Value parse_number() {
    std::string tok;
    while (!cur_.eof()) {
      char c = cur_.peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' ||
          c == '_') {
        tok += cur_.get();
      } else {
        break;
      }
    }
    if (tok.empty()) fail("expected value");
    std::string clean;
    for (char c : tok) {
      if (c != '_') clean += c;
    }
    bool looks_float = clean.find_first_of(".eE") != std::string::npos &&
                       !(clean.size() > 1 && (clean[0] == '0') && clean[1] == 'x');
    if (!looks_float) {
      if (auto i = parse_int(clean)) return Value(static_cast<long long>(*i));
    }
    if (auto d = parse_double(clean)) return Value(*d);
    fail("malformed number '" + tok + "'");
  }
};

}  // namespace

bool Value::as_bool() const {
  if (kind_ != Kind::boolean) type_error("boolean", kind_);
  return bool_;
}

long long Value::as_int() const {
  if (kind_ != Kind::integer) type_error("integer", kind_);
  return int_;
}

double Value::as_double() const {
  if (kind_ == Kind::integer) return static_cast<double>(int_);
  if (kind_ != Kind::floating) type_error("float", kind_);
  return float_;
}

const std::string& Value::as_string() const {
  if (kind_ != Kind::string) type_error("string", kind_);
  return str_;
}

const Array& Value::as_array() const {
  if (kind_ != Kind::array) type_error("array", kind_);
  return array_;
}

const Table& Value::as_table() const {
  if (kind_ != Kind::table) type_error("table", kind_);
  return table_;
}

Table parse(std::string_view text) { return Parser(text).run(); }

Table parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open toml file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const Value* find(const Table& table, std::string_view path) {
  const Table* t = &table;
  const Value* v = nullptr;
  for (const auto& part : split(path, '.')) {
    if (!t) return nullptr;
    v = nullptr;
    for (const auto& [k, val] : *t) {
      if (k == part) {
        v = &val;
        break;
      }
    }
    if (!v) return nullptr;
    t = v->is_table() ? &v->as_table() : nullptr;
  }
  return v;
}

std::optional<std::string> get_string(const Table& t, std::string_view path) {
  const Value* v = find(t, path);
  if (!v) return std::nullopt;
  return v->as_string();
}

std::optional<long long> get_int(const Table& t, std::string_view path) {
  const Value* v = find(t, path);
  if (!v) return std::nullopt;
  return v->as_int();
}

std::optional<double> get_double(const Table& t, std::string_view path) {
  const Value* v = find(t, path);
  if (!v) return std::nullopt;
  return v->as_double();
}

std::optional<bool> get_bool(const Table& t, std::string_view path) {
  const Value* v = find(t, path);
  if (!v) return std::nullopt;
  return v->as_bool();
}

std::vector<std::string> get_string_array(const Table& t, std::string_view path) {
  std::vector<std::string> out;
  const Value* v = find(t, path);
  if (!v) return out;
  for (const auto& e : v->as_array()) out.push_back(e.as_string());
  return out;
}

std::vector<const Table*> get_table_array(const Table& t, std::string_view path) {
  std::vector<const Table*> out;
  const Value* v = find(t, path);
  if (!v) return out;
  for (const auto& e : v->as_array()) out.push_back(&e.as_table());
  return out;
}

const Table* get_table(const Table& t, std::string_view path) {
  const Value* v = find(t, path);
  if (!v || !v->is_table()) return nullptr;
  return &v->as_table();
}

}  // namespace enseval::toml
