#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ulab/errors.hpp"

namespace ulab::toml {

// Minimal TOML subset used for experiment configs and manifests: sections,
// scalar values (string, integer, float, bool) and one-line arrays. Order
// is preserved so serialization is byte-deterministic. 64-bit seeds are
// stored as hex strings ("0x...") because TOML integers are signed.
class Value {
 public:
  enum class Kind { string, integer, real, boolean, array };

  static Value str(std::string s);
  static Value integer(int64_t v);
  static Value real(double v);
  static Value boolean(bool v);
  static Value array(std::vector<Value> items);
  static Value u64(uint64_t v);  // hex string

  Kind kind() const { return kind_; }
  const std::string& as_str() const;
  int64_t as_int() const;
  double as_real() const;         // also accepts integer values
  bool as_bool() const;
  uint64_t as_u64() const;        // integer or "0x..." string
  const std::vector<Value>& as_array() const;

  std::string serialize() const;

 private:
  Kind kind_ = Kind::integer;
  std::string str_;
  int64_t int_ = 0;
  double real_ = 0.0;
  bool bool_ = false;
  std::vector<Value> array_;
};

struct Entry {
  std::string key;
  Value value;
};

struct Section {
  std::string name;  // "" = top level
  std::vector<Entry> entries;
};

class Table {
 public:
  static Table parse(std::string_view text);

  bool has(std::string_view section, std::string_view key) const;
  const Value* find(std::string_view section, std::string_view key) const;
  // FormatError when missing.
  const Value& at(std::string_view section, std::string_view key) const;
  bool has_section(std::string_view section) const;

  void set(std::string_view section, std::string_view key, Value v);

  const std::vector<Section>& sections() const { return sections_; }

  std::string serialize() const;

 private:
  Section& section(std::string_view name);
  std::vector<Section> sections_;
};

}  // namespace ulab::toml
