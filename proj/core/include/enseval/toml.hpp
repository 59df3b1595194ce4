// Minimal TOML reader covering the subset this project's config files use:
// [table] / [[array-of-table]] headers, bare or quoted keys, basic and
// multi-line basic strings, literal strings, integers, floats, booleans and
// (possibly multi-line) arrays. Dotted keys and dates are not supported.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace enseval::toml {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error("toml:" + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_ = 0;
};

class Value;
using Array = std::vector<Value>;
// Order-preserving table; configs are small, lookups scan linearly.
using Table = std::vector<std::pair<std::string, Value>>;

class Value {
 public:
  enum class Kind { none, boolean, integer, floating, string, array, table };

  Value() = default;
  explicit Value(bool b) : kind_(Kind::boolean), bool_(b) {}
  explicit Value(long long i) : kind_(Kind::integer), int_(i) {}
  explicit Value(double d) : kind_(Kind::floating), float_(d) {}
  explicit Value(std::string s) : kind_(Kind::string), str_(std::move(s)) {}
  explicit Value(Array a) : kind_(Kind::array), array_(std::move(a)) {}
  explicit Value(Table t) : kind_(Kind::table), table_(std::move(t)) {}

  Kind kind() const { return kind_; }
  bool is_table() const { return kind_ == Kind::table; }
  bool is_array() const { return kind_ == Kind::array; }
  bool is_string() const { return kind_ == Kind::string; }

  bool as_bool() const;
  long long as_int() const;
  double as_double() const;  // accepts integer values too
  const std::string& as_string() const;
  const Array& as_array() const;
  const Table& as_table() const;

 private:
  Kind kind_ = Kind::none;
  bool bool_ = false;
  long long int_ = 0;
  double float_ = 0.0;
  std::string str_;
  Array array_;
  Table table_;
};

Table parse(std::string_view text);
Table parse_file(const std::filesystem::path& path);

// Lookup helpers. `path` is dot-separated ("corpus.gold"). Missing keys give
// nullptr / nullopt; present-but-wrong-type throws ParseError-like logic via
// Value accessors (std::runtime_error).
const Value* find(const Table& table, std::string_view path);
std::optional<std::string> get_string(const Table&, std::string_view path);
std::optional<long long> get_int(const Table&, std::string_view path);
std::optional<double> get_double(const Table&, std::string_view path);
std::optional<bool> get_bool(const Table&, std::string_view path);
std::vector<std::string> get_string_array(const Table&, std::string_view path);
// Every [[path]] entry; empty when absent.
std::vector<const Table*> get_table_array(const Table&, std::string_view path);
const Table* get_table(const Table&, std::string_view path);

}  // namespace enseval::toml
