#include "dseg/toml.hpp"

#include "dseg/core.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace dseg::toml {

std::int64_t Value::as_int(std::string_view where) const {
  if (!is_int()) throw Error(std::string(where) + ": expected integer");
  return std::get<std::int64_t>(data_);
}

double Value::as_double(std::string_view where) const {
  if (is_int()) return static_cast<double>(std::get<std::int64_t>(data_));
  if (!is_double()) throw Error(std::string(where) + ": expected float");
  return std::get<double>(data_);
}

bool Value::as_bool(std::string_view where) const {
  if (!is_bool()) throw Error(std::string(where) + ": expected boolean");
  return std::get<bool>(data_);
}

const std::string& Value::as_string(std::string_view where) const {
  if (!is_string()) throw Error(std::string(where) + ": expected string");
  return std::get<std::string>(data_);
}

const Array& Value::as_array(std::string_view where) const {
  if (!is_array()) throw Error(std::string(where) + ": expected array");
  return std::get<Array>(data_);
}

namespace {

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 1;
  std::string origin;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(origin + ":" + std::to_string(line) + ": " + msg);
  }
  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() { return text[pos++]; }
  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos;
  }
  // whitespace and comment up to end of line; true if a newline was consumed
  bool end_of_line() {
    skip_ws();
    if (!eof() && peek() == '#') {
      while (!eof() && peek() != '\n') ++pos;
    }
    if (eof()) return true;
    if (peek() == '\r') {
      ++pos;
      if (eof() || peek() != '\n') fail("stray carriage return");
    }
    if (peek() == '\n') {
      ++pos;
      ++line;
      return true;
    }
    return false;
  }
};

bool is_bare_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '-';
}

std::string parse_basic_string(Cursor& c) {
  if (c.take() != '"') c.fail("expected '\"'");
  std::string out;
  while (true) {
    if (c.eof()) c.fail("unterminated string");
    char ch = c.take();
    if (ch == '"') break;
    if (ch == '\n') c.fail("newline in string");
    if (ch == '\\') {
      if (c.eof()) c.fail("unterminated escape");
      char esc = c.take();
      switch (esc) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: c.fail(std::string("unsupported escape '\\") + esc + "'");
      }
    } else {
      out += ch;
    }
  }
  return out;
}

std::string parse_key(Cursor& c) {
  if (!c.eof() && c.peek() == '"') return parse_basic_string(c);
  std::string key;
  while (!c.eof() && is_bare_key_char(c.peek())) key += c.take();
  if (key.empty()) c.fail("expected key");
  return key;
}

Value parse_number(Cursor& c) {
  std::size_t start = c.pos;
  if (!c.eof() && (c.peek() == '+' || c.peek() == '-')) ++c.pos;
  bool is_float = false;
  if (c.text.compare(c.pos, 3, "inf") == 0) {
    c.pos += 3;
    return Value(c.text[start] == '-' ? -std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::infinity());
  }
  if (c.text.compare(c.pos, 3, "nan") == 0) {
    c.pos += 3;
    return Value(std::numeric_limits<double>::quiet_NaN());
  }
  while (!c.eof()) {
    char ch = c.peek();
    if (ch >= '0' && ch <= '9') {
      ++c.pos;
    } else if (ch == '.' || ch == 'e' || ch == 'E') {
      is_float = true;
      ++c.pos;
      if (!c.eof() && (c.peek() == '+' || c.peek() == '-') && (ch == 'e' || ch == 'E')) ++c.pos;
    } else {
      break;
    }
  }
  std::string_view tok = c.text.substr(start, c.pos - start);
  if (tok.empty() || tok == "+" || tok == "-") c.fail("malformed number");
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (*first == '+') ++first;  // from_chars rejects a leading plus
  if (is_float) {
    double v = 0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) c.fail("malformed float '" + std::string(tok) + "'");
    return Value(v);
  }
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last) c.fail("malformed integer '" + std::string(tok) + "'");
  return Value(v);
}

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
  if (c.take() != '[') c.fail("expected '['");
  Array items;
  c.skip_ws();
  if (!c.eof() && c.peek() == ']') {
    ++c.pos;
    return Value(std::move(items));
  }
  while (true) {
    c.skip_ws();
    items.push_back(parse_value(c));
    if (items.back().is_array()) c.fail("nested arrays are not supported");
    if (items.size() > 1) {
      const Value& a = items.front();
      const Value& b = items.back();
      bool same = (a.is_int() && b.is_int()) || (a.is_double() && b.is_double()) ||
                  (a.is_bool() && b.is_bool()) || (a.is_string() && b.is_string());
      if (!same) c.fail("arrays must hold one value type");
    }
    c.skip_ws();
    if (c.eof()) c.fail("unterminated array");
    char ch = c.take();
    if (ch == ']') break;
    if (ch != ',') c.fail("expected ',' or ']' in array");
    c.skip_ws();
    if (!c.eof() && c.peek() == ']') {  // trailing comma
      ++c.pos;
      break;
    }
  }
  return Value(std::move(items));
}

Value parse_value(Cursor& c) {
  if (c.eof()) c.fail("expected value");
  char ch = c.peek();
  if (ch == '"') return Value(parse_basic_string(c));
  if (ch == '[') return parse_array(c);
  if (c.text.compare(c.pos, 4, "true") == 0 &&
      (c.pos + 4 >= c.text.size() || !is_bare_key_char(c.text[c.pos + 4]))) {
    c.pos += 4;
    return Value(true);
  }
  if (c.text.compare(c.pos, 5, "false") == 0 &&
      (c.pos + 5 >= c.text.size() || !is_bare_key_char(c.text[c.pos + 5]))) {
    c.pos += 5;
    return Value(false);
  }
  if (ch == '+' || ch == '-' || (ch >= '0' && ch <= '9') || ch == 'i' || ch == 'n') {
    return parse_number(c);
  }
  c.fail(std::string("unexpected character '") + ch + "'");
}

void insert_pair(Table& table, Cursor& c) {
  std::string key = parse_key(c);
  c.skip_ws();
  if (c.eof() || c.take() != '=') c.fail("expected '=' after key '" + key + "'");
  c.skip_ws();
  Value v = parse_value(c);
  if (table.count(key)) c.fail("duplicate key '" + key + "'");
  table.emplace(std::move(key), std::move(v));
  if (!c.end_of_line()) c.fail("trailing content after value");
}

}  // namespace

Document parse(std::string_view text, std::string_view origin) {
  Cursor c{text, 0, 1, std::string(origin)};
  Document doc;
  Table* current = &doc.root;
  while (!c.eof()) {
    if (c.end_of_line()) continue;  // blank or comment line
    char ch = c.peek();
    if (ch == '[') {
      ++c.pos;
      bool array_table = !c.eof() && c.peek() == '[';
      if (array_table) ++c.pos;
      c.skip_ws();
      std::string name = parse_key(c);
      c.skip_ws();
      if (c.eof() || c.take() != ']') c.fail("expected ']' after table name");
      if (array_table && (c.eof() || c.take() != ']')) c.fail("expected ']]' after table name");
      if (!c.end_of_line()) c.fail("trailing content after table header");
      if (array_table) {
        doc.table_arrays[name].emplace_back();
        current = &doc.table_arrays[name].back();
      } else {
        if (doc.tables.count(name)) c.fail("duplicate table '" + name + "'");
        current = &doc.tables[name];
      }
    } else {
      insert_pair(*current, c);
    }
  }
  return doc;
}

Document parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

namespace {

std::string escape_string(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += ch;
    }
  }
  return out + "\"";
}

std::string format_key(const std::string& key) {
  bool bare = !key.empty() && std::all_of(key.begin(), key.end(), is_bare_key_char);
  return bare ? key : escape_string(key);
}

void write_value(std::string& out, const Value& v) {
  if (v.is_int()) {
    out += std::to_string(v.as_int(""));
  } else if (v.is_double()) {
    out += format_double(v.as_double(""));
  } else if (v.is_bool()) {
    out += v.as_bool("") ? "true" : "false";
  } else if (v.is_string()) {
    out += escape_string(v.as_string(""));
  } else {
    out += '[';
    const Array& items = v.as_array("");
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ", ";
      write_value(out, items[i]);
    }
    out += ']';
  }
}

void write_table_body(std::string& out, const Table& t) {
  for (const auto& [key, value] : t) {
    out += format_key(key);
    out += " = ";
    write_value(out, value);
    out += '\n';
  }
}

}  // namespace

std::string serialize(const Document& doc) {
  std::string out;
  write_table_body(out, doc.root);
  for (const auto& [name, table] : doc.tables) {
    if (!out.empty()) out += '\n';
    out += '[' + format_key(name) + "]\n";
    write_table_body(out, table);
  }
  for (const auto& [name, entries] : doc.table_arrays) {
    for (const Table& entry : entries) {
      if (!out.empty()) out += '\n';
      out += "[[" + format_key(name) + "]]\n";
      write_table_body(out, entry);
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const Document& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize(doc);
  if (!out) throw Error("write failed for " + path.string());
}

const Value* find(const Table& t, std::string_view key) {
  auto it = t.find(std::string(key));
  return it == t.end() ? nullptr : &it->second;
}

namespace {
[[noreturn]] void missing(std::string_view where, const std::string& key) {
  throw Error(std::string(where) + ": missing key '" + key + "'");
}
}  // namespace

std::int64_t require_int(const Table& t, const std::string& key, std::string_view where) {
  const Value* v = find(t, key);
  if (!v) missing(where, key);
  return v->as_int(std::string(where) + "." + key);
}

double require_double(const Table& t, const std::string& key, std::string_view where) {
  const Value* v = find(t, key);
  if (!v) missing(where, key);
  return v->as_double(std::string(where) + "." + key);
}

bool require_bool(const Table& t, const std::string& key, std::string_view where) {
  const Value* v = find(t, key);
  if (!v) missing(where, key);
  return v->as_bool(std::string(where) + "." + key);
}

std::string require_string(const Table& t, const std::string& key, std::string_view where) {
  const Value* v = find(t, key);
  if (!v) missing(where, key);
  return v->as_string(std::string(where) + "." + key);
}

std::vector<double> require_double_array(const Table& t, const std::string& key,
                                         std::string_view where) {
  const Value* v = find(t, key);
  if (!v) missing(where, key);
  std::string ctx = std::string(where) + "." + key;
  const Array& arr = v->as_array(ctx);
  std::vector<double> out;
  out.reserve(arr.size());
  for (const Value& item : arr) out.push_back(item.as_double(ctx));
  return out;
}

void reject_unknown_keys(const Table& t, const std::vector<std::string>& known,
                         std::string_view where) {
  for (const auto& [key, value] : t) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace dseg::toml
