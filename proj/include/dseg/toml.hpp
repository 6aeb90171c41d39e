#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Minimal TOML reader/writer covering what our config and artifact files use:
// top-level keys, [table], [[array-of-tables]], integers, floats, booleans,
// basic strings, and single-line homogeneous arrays. Anything outside that
// subset is a parse error, never a silent skip.

namespace dseg::toml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Value;
using Array = std::vector<Value>;

class Value {
 public:
  Value() : data_(std::int64_t{0}) {}
  Value(std::int64_t v) : data_(v) {}
  Value(int v) : data_(std::int64_t{v}) {}
  Value(double v) : data_(v) {}
  Value(bool v) : data_(v) {}
  Value(std::string v) : data_(std::move(v)) {}
  Value(const char* v) : data_(std::string(v)) {}
  Value(Array v) : data_(std::move(v)) {}

  bool is_int() const { return std::holds_alternative<std::int64_t>(data_); }
  bool is_double() const { return std::holds_alternative<double>(data_); }
  bool is_bool() const { return std::holds_alternative<bool>(data_); }
  bool is_string() const { return std::holds_alternative<std::string>(data_); }
  bool is_array() const { return std::holds_alternative<Array>(data_); }

  std::int64_t as_int(std::string_view where) const;
  double as_double(std::string_view where) const;  // accepts int
  bool as_bool(std::string_view where) const;
  const std::string& as_string(std::string_view where) const;
  const Array& as_array(std::string_view where) const;

 private:
  std::variant<std::int64_t, double, bool, std::string, Array> data_;
};

using Table = std::map<std::string, Value>;

struct Document {
  Table root;
  std::map<std::string, Table> tables;
  std::map<std::string, std::vector<Table>> table_arrays;
};

Document parse(std::string_view text, std::string_view origin = "<string>");
Document parse_file(const std::filesystem::path& path);

std::string serialize(const Document& doc);
void write_file(const std::filesystem::path& path, const Document& doc);

// Lookup helpers; `where` names the file or table for error messages.
const Value* find(const Table& t, std::string_view key);
std::int64_t require_int(const Table& t, const std::string& key, std::string_view where);
double require_double(const Table& t, const std::string& key, std::string_view where);
bool require_bool(const Table& t, const std::string& key, std::string_view where);
std::string require_string(const Table& t, const std::string& key, std::string_view where);
std::vector<double> require_double_array(const Table& t, const std::string& key,
                                         std::string_view where);

// Strict-config guard: every key in t must appear in `known`.
void reject_unknown_keys(const Table& t, const std::vector<std::string>& known,
                         std::string_view where);

}  // namespace dseg::toml
