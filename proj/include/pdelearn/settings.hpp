#pragma once

// Reader for the small TOML subset used by library and run-configuration
// files: comments, [table], [[array-of-tables]], and `key = value` with
// strings, numbers, booleans and (possibly multi-line) arrays.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pdelearn {

struct SettingValue {
  using Array = std::vector<SettingValue>;
  std::variant<std::string, double, bool, Array> data;
  bool integer = false;  // number written without fraction/exponent
  std::size_t line = 0;

  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_number() const { return std::holds_alternative<double>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_array() const { return std::holds_alternative<Array>(data); }

  std::string render() const;
};

class SettingsTable {
 public:
  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, SettingValue v) { values_[key] = std::move(v); }
  const SettingValue& at(const std::string& key) const;
  const std::map<std::string, SettingValue>& values() const { return values_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_strings(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

 private:
  std::map<std::string, SettingValue> values_;
};

class SettingsDocument {
 public:
  static SettingsDocument parse(std::string_view text);
  static SettingsDocument load(const std::string& path);

  SettingsTable& root() { return root_; }
  const SettingsTable& root() const { return root_; }
  bool has_table(const std::string& name) const { return tables_.contains(name); }
  const SettingsTable& table(const std::string& name) const;
  SettingsTable& table_or_create(const std::string& name) { return tables_[name]; }
  /// [[name]] entries in file order (empty when absent).
  const std::vector<SettingsTable>& table_array(const std::string& name) const;
  std::vector<SettingsTable>& table_array_mut(const std::string& name) { return arrays_[name]; }
  const std::map<std::string, SettingsTable>& tables() const { return tables_; }
  const std::map<std::string, std::vector<SettingsTable>>& table_arrays() const { return arrays_; }

  /// Apply `path=value` where path is `key`, `table.key`, or `array.N.key`.
  void apply_override(std::string_view assignment);

  std::string render() const;

 private:
  SettingsTable root_;
  std::map<std::string, SettingsTable> tables_;
  std::map<std::string, std::vector<SettingsTable>> arrays_;
};

/// Parse a single value literal (as it would appear right of `=`).
SettingValue parse_setting_value(std::string_view text);

}  // namespace pdelearn
