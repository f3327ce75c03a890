#include "ulab/toml.hpp"

#include <charconv>
#include <cstdio>

namespace ulab::toml {

namespace {

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string escape(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  // make sure it re-parses as a float, not an int
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

// Splits a single-line array body on commas at depth zero.
std::vector<std::string_view> split_items(std::string_view body) {
  std::vector<std::string_view> items;
  int depth = 0;
  bool in_str = false;
  size_t start = 0;
  for (size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (in_str) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '[') ++depth;
    else if (c == ']') --depth;
    else if (c == ',' && depth == 0) {
      items.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  if (strip(body.substr(start)).size() > 0 || !items.empty()) {
    items.push_back(body.substr(start));
  }
  // drop a trailing empty item from "a, b,"
  if (!items.empty() && strip(items.back()).empty()) items.pop_back();
  return items;
}

std::string unescape(std::string_view s, int line_no) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i >= s.size()) {
      throw FormatError("dangling escape on line " + std::to_string(line_no));
    }
    switch (s[i]) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      default:
        throw FormatError("unknown escape on line " + std::to_string(line_no));
    }
  }
  return out;
}

Value parse_value(std::string_view raw, int line_no) {
  raw = strip(raw);
  if (raw.empty()) {
    throw FormatError("missing value on line " + std::to_string(line_no));
  }
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw FormatError("unterminated string on line " + std::to_string(line_no));
    }
    return Value::str(unescape(raw.substr(1, raw.size() - 2), line_no));
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') {
      throw FormatError("unterminated array on line " + std::to_string(line_no));
    }
    std::vector<Value> items;
    for (auto item : split_items(raw.substr(1, raw.size() - 2))) {
      items.push_back(parse_value(item, line_no));
    }
    return Value::array(std::move(items));
  }
  if (raw == "true") return Value::boolean(true);
  if (raw == "false") return Value::boolean(false);

  const bool looks_float = raw.find('.') != std::string_view::npos ||
                           raw.find('e') != std::string_view::npos ||
                           raw.find('E') != std::string_view::npos;
  if (!looks_float) {
    int64_t iv = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), iv);
    if (ec == std::errc() && p == raw.data() + raw.size()) {
      return Value::integer(iv);
    }
  }
  double dv = 0.0;
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), dv);
  if (ec == std::errc() && p == raw.data() + raw.size()) {
    return Value::real(dv);
  }
  throw FormatError("cannot parse value '" + std::string(raw) + "' on line " +
                    std::to_string(line_no));
}

// Strips a trailing comment, respecting quoted strings.
std::string_view strip_comment(std::string_view line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

Value Value::str(std::string s) {
  Value v;
  v.kind_ = Kind::string;
  v.str_ = std::move(s);
  return v;
}

Value Value::integer(int64_t x) {
  Value v;
  v.kind_ = Kind::integer;
  v.int_ = x;
  return v;
}

Value Value::real(double x) {
  Value v;
  v.kind_ = Kind::real;
  v.real_ = x;
  return v;
}

Value Value::boolean(bool x) {
  Value v;
  v.kind_ = Kind::boolean;
  v.bool_ = x;
  return v;
}

Value Value::array(std::vector<Value> items) {
  Value v;
  v.kind_ = Kind::array;
  v.array_ = std::move(items);
  return v;
}

Value Value::u64(uint64_t x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(x));
  return Value::str(buf);
}

const std::string& Value::as_str() const {
  if (kind_ != Kind::string) throw FormatError("expected a string value");
  return str_;
}

int64_t Value::as_int() const {
  if (kind_ != Kind::integer) throw FormatError("expected an integer value");
  return int_;
}

double Value::as_real() const {
  if (kind_ == Kind::integer) return static_cast<double>(int_);
  if (kind_ != Kind::real) throw FormatError("expected a float value");
  return real_;
}

bool Value::as_bool() const {
  if (kind_ != Kind::boolean) throw FormatError("expected a boolean value");
  return bool_;
}

uint64_t Value::as_u64() const {
  if (kind_ == Kind::integer) {
    if (int_ < 0) throw FormatError("seed values must be non-negative");
    return static_cast<uint64_t>(int_);
  }
  if (kind_ == Kind::string && str_.starts_with("0x")) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(str_.data() + 2, str_.data() + str_.size(), v, 16);
    if (ec == std::errc() && p == str_.data() + str_.size()) return v;
  }
  throw FormatError("expected an integer or 0x-hex string");
}

const std::vector<Value>& Value::as_array() const {
  if (kind_ != Kind::array) throw FormatError("expected an array value");
  return array_;
}

std::string Value::serialize() const {
  switch (kind_) {
    case Kind::string: return escape(str_);
    case Kind::integer: return std::to_string(int_);
    case Kind::real: return format_real(real_);
    case Kind::boolean: return bool_ ? "true" : "false";
    case Kind::array: {
      std::string out = "[";
      for (size_t i = 0; i < array_.size(); ++i) {
        if (i) out += ", ";
        out += array_[i].serialize();
      }
      out += "]";
      return out;
    }
  }
  return {};
}

Table Table::parse(std::string_view text) {
  Table t;
  std::string current;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    line = strip(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw FormatError("malformed section header on line " +
                          std::to_string(line_no));
      }
      current = std::string(strip(line.substr(1, line.size() - 2)));
      t.section(current);  // record even if empty
      continue;
    }

    const size_t eq = [&] {
      bool in_str = false;
      for (size_t i = 0; i < line.size(); ++i) {
        if (in_str) {
          if (line[i] == '\\') ++i;
          else if (line[i] == '"') in_str = false;
        } else if (line[i] == '"') {
          in_str = true;
        } else if (line[i] == '=') {
          return i;
        }
      }
      return std::string_view::npos;
    }();
    if (eq == std::string_view::npos) {
      throw FormatError("expected key = value on line " + std::to_string(line_no));
    }
    std::string_view key = strip(line.substr(0, eq));
    if (key.empty()) {
      throw FormatError("empty key on line " + std::to_string(line_no));
    }
    std::string key_str;
    if (key.front() == '"') {
      if (key.size() < 2 || key.back() != '"') {
        throw FormatError("malformed quoted key on line " + std::to_string(line_no));
      }
      key_str = unescape(key.substr(1, key.size() - 2), line_no);
    } else {
      key_str = std::string(key);
    }
    t.set(current, key_str, parse_value(line.substr(eq + 1), line_no));
  }
  return t;
}

Section& Table::section(std::string_view name) {
  for (auto& s : sections_) {
    if (s.name == name) return s;
  }
  sections_.push_back({std::string(name), {}});
  return sections_.back();
}

bool Table::has(std::string_view section, std::string_view key) const {
  return find(section, key) != nullptr;
}

bool Table::has_section(std::string_view section) const {
  for (const auto& s : sections_) {
    if (s.name == section) return true;
  }
  return false;
}

const Value* Table::find(std::string_view section, std::string_view key) const {
  for (const auto& s : sections_) {
    if (s.name != section) continue;
    for (const auto& e : s.entries) {
      if (e.key == key) return &e.value;
    }
  }
  return nullptr;
}

const Value& Table::at(std::string_view section, std::string_view key) const {
  const Value* v = find(section, key);
  if (!v) {
    throw FormatError("missing key [" + std::string(section) + "] " +
                      std::string(key));
  }
  return *v;
}

void Table::set(std::string_view sec, std::string_view key, Value v) {
  auto& s = section(sec);
  for (auto& e : s.entries) {
    if (e.key == key) {
      e.value = std::move(v);
      return;
    }
  }
  s.entries.push_back({std::string(key), std::move(v)});
}

std::string Table::serialize() const {
  std::string out;
  bool first = true;
  for (const auto& s : sections_) {
    if (!s.name.empty()) {
      if (!first) out += '\n';
      out += '[' + s.name + "]\n";
    }
    first = false;
    for (const auto& e : s.entries) {
      const bool bare = !e.key.empty() &&
                        e.key.find_first_not_of(
                            "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
                            "abcdefghijklmnopqrstuvwxyz0123456789_-") ==
                            std::string::npos;
      out += bare ? e.key : escape(e.key);
      out += " = ";
      out += e.value.serialize();
      out += '\n';
    }
  }
  return out;
}

}  // namespace ulab::toml
