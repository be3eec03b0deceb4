#include "aoct/toml.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

#include "aoct/io.hpp"

namespace aoct {

namespace {

using nlohmann::json;

struct Cursor {
  const std::string& s;
  size_t i = 0;
  int line = 1;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("toml: line " + std::to_string(line) + ": " + what);
  }
  bool eof() const { return i >= s.size(); }
  char peek() const { return s[i]; }
  char take() {
    const char c = s[i++];
    if (c == '\n') ++line;
    return c;
  }
  void skip_blank() {  // spaces/tabs and comments, not newlines
    while (!eof()) {
      const char c = s[i];
      if (c == ' ' || c == '\t') {
        ++i;
      } else if (c == '#') {
        while (!eof() && s[i] != '\n') ++i;
      } else {
        break;
      }
    }
  }
  void skip_ws() {  // including newlines (inside arrays)
    while (!eof()) {
      skip_blank();
      if (!eof() && (s[i] == '\n' || s[i] == '\r')) {
        take();
      } else {
        break;
      }
    }
  }
  bool consume(char c) {
    if (!eof() && s[i] == c) {
      take();
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }
};

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_basic_string(Cursor& cur) {
  cur.expect('"');
  std::string out;
  while (true) {
    if (cur.eof()) cur.fail("unterminated string");
    char c = cur.take();
    if (c == '"') break;
    if (c == '\n') cur.fail("newline in string");
    if (c == '\\') {
      if (cur.eof()) cur.fail("unterminated escape");
      const char e = cur.take();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: cur.fail(std::string("unsupported escape \\") + e);
      }
    } else {
      out += c;
    }
  }
  return out;
}

std::string parse_literal_string(Cursor& cur) {
  cur.expect('\'');
  std::string out;
  while (true) {
    if (cur.eof()) cur.fail("unterminated string");
    const char c = cur.take();
    if (c == '\'') break;
    if (c == '\n') cur.fail("newline in string");
    out += c;
  }
  return out;
}

std::string parse_key(Cursor& cur) {
  cur.skip_blank();
  if (cur.eof()) cur.fail("expected key");
  if (cur.peek() == '"') return parse_basic_string(cur);
  if (cur.peek() == '\'') return parse_literal_string(cur);
  std::string key;
  while (!cur.eof() && is_bare_key_char(cur.peek())) key += cur.take();
  if (key.empty()) cur.fail("expected key");
  return key;
}

json parse_value(Cursor& cur);

json parse_number(Cursor& cur) {
  std::string tok;
  while (!cur.eof()) {
    const char c = cur.peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' ||
        c == 'e' || c == 'E' || c == '_' || c == 'x' || (c >= 'a' && c <= 'f') ||
        (c >= 'A' && c <= 'F')) {
      tok += cur.take();
    } else {
      break;
    }
  }
  std::string clean;
  for (char c : tok)
    if (c != '_') clean += c;
  if (clean.empty()) cur.fail("expected number");

  const bool is_float = clean.find_first_of(".eE") != std::string::npos &&
                        clean.rfind("0x", 0) != 0 && clean.rfind("-0x", 0) != 0;
  if (!is_float) {
    int64_t v = 0;
    const char* b = clean.data();
    const char* e = b + clean.size();
    int base = 10;
    if (clean.rfind("0x", 0) == 0 || clean.rfind("+0x", 0) == 0 || clean.rfind("-0x", 0) == 0) {
      base = 16;
      const bool neg = clean[0] == '-';
      b += (clean[0] == '+' || clean[0] == '-') ? 3 : 2;
      uint64_t u = 0;
      auto [p, ec] = std::from_chars(b, e, u, base);
      if (ec == std::errc() && p == e) return neg ? json(-static_cast<int64_t>(u)) : json(u);
      cur.fail("malformed integer: " + clean);
    }
    if (clean[0] == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v, base);
    if (ec == std::errc() && p == e) return v;
    // fall through: e.g. "1e3" without a dot still has 'e' handled above
  }
  double d = 0.0;
  const char* b = clean.data();
  if (clean[0] == '+') ++b;
  auto [p, ec] = std::from_chars(b, clean.data() + clean.size(), d);
  if (ec != std::errc() || p != clean.data() + clean.size())
    cur.fail("malformed number: " + clean);
  return d;
}

json parse_array(Cursor& cur) {
  cur.expect('[');
  json arr = json::array();
  cur.skip_ws();
  if (cur.consume(']')) return arr;
  while (true) {
    cur.skip_ws();
    arr.push_back(parse_value(cur));
    cur.skip_ws();
    if (cur.consume(']')) break;
    cur.expect(',');
    cur.skip_ws();
    if (cur.consume(']')) break;  // trailing comma
  }
  return arr;
}

json parse_inline_table(Cursor& cur) {
  cur.expect('{');
  json obj = json::object();
  cur.skip_blank();
  if (cur.consume('}')) return obj;
  while (true) {
    const std::string key = parse_key(cur);
    cur.skip_blank();
    cur.expect('=');
    cur.skip_blank();
    obj[key] = parse_value(cur);
    cur.skip_blank();
    if (cur.consume('}')) break;
    cur.expect(',');
    cur.skip_blank();
  }
  return obj;
}

json parse_value(Cursor& cur) {
  cur.skip_blank();
  if (cur.eof()) cur.fail("expected value");
  const char c = cur.peek();
  if (c == '"') return parse_basic_string(cur);
  if (c == '\'') return parse_literal_string(cur);
  if (c == '[') return parse_array(cur);
  if (c == '{') return parse_inline_table(cur);
  if (cur.s.compare(cur.i, 4, "true") == 0 && (cur.i + 4 >= cur.s.size() ||
                                               !is_bare_key_char(cur.s[cur.i + 4]))) {
    cur.i += 4;
    return true;
  }
  if (cur.s.compare(cur.i, 5, "false") == 0 && (cur.i + 5 >= cur.s.size() ||
                                                !is_bare_key_char(cur.s[cur.i + 5]))) {
    cur.i += 5;
    return false;
  }
  return parse_number(cur);
}

std::vector<std::string> parse_dotted_name(Cursor& cur, char terminator) {
  std::vector<std::string> parts;
  while (true) {
    parts.push_back(parse_key(cur));
    cur.skip_blank();
    if (cur.consume('.')) {
      cur.skip_blank();
      continue;
    }
    break;
  }
  cur.expect(terminator);
  return parts;
}

json* descend(json& root, const std::vector<std::string>& parts, Cursor& cur) {
  json* node = &root;
  for (const std::string& part : parts) {
    if (node->is_array()) node = &node->back();
    if (node->is_null()) *node = json::object();  // implicit super-table
    if (!node->is_object()) cur.fail("key collision at '" + part + "'");
    node = &(*node)[part];
  }
  if (node->is_array()) node = &node->back();
  return node;
}

}  // namespace

json parse_toml(const std::string& text) {
  Cursor cur{text};
  json root = json::object();
  json* table = &root;

  while (true) {
    cur.skip_ws();
    if (cur.eof()) break;
    const char c = cur.peek();
    if (c == '[') {
      cur.take();
      if (cur.consume('[')) {  // [[array.of.tables]]
        const auto parts = parse_dotted_name(cur, ']');
        cur.expect(']');
        json* node = &root;
        for (size_t k = 0; k + 1 < parts.size(); ++k) {
          if (node->is_array()) node = &node->back();
          node = &(*node)[parts[k]];
        }
        if (node->is_array()) node = &node->back();
        json& arr = (*node)[parts.back()];
        if (arr.is_null()) arr = json::array();
        if (!arr.is_array()) cur.fail("'" + parts.back() + "' is not an array of tables");
        arr.push_back(json::object());
        table = &arr.back();
      } else {
        const auto parts = parse_dotted_name(cur, ']');
        table = descend(root, parts, cur);
        if (table->is_null()) *table = json::object();
        if (!table->is_object()) cur.fail("'" + parts.back() + "' is not a table");
      }
      cur.skip_blank();
      if (!cur.eof() && cur.peek() != '\n' && cur.peek() != '\r')
        cur.fail("junk after table header");
      continue;
    }
    // key = value
    std::vector<std::string> parts;
    parts.push_back(parse_key(cur));
    cur.skip_blank();
    while (cur.consume('.')) {
      cur.skip_blank();
      parts.push_back(parse_key(cur));
      cur.skip_blank();
    }
    cur.expect('=');
    json* node = table;
    for (size_t k = 0; k + 1 < parts.size(); ++k) {
      node = &(*node)[parts[k]];
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) cur.fail("key collision at '" + parts[k] + "'");
    }
    if (node->contains(parts.back())) cur.fail("duplicate key '" + parts.back() + "'");
    (*node)[parts.back()] = parse_value(cur);
    cur.skip_blank();
    if (!cur.eof() && cur.peek() != '\n' && cur.peek() != '\r')
      cur.fail("junk after value");
  }
  return root;
}

json parse_toml_file(const std::string& path) {
  return parse_toml(read_text_file(path));
}

}  // namespace aoct
