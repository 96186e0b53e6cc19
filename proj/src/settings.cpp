#include "pdelearn/settings.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pdelearn/errors.hpp"

namespace pdelearn {

namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[pos_]; }
  char get() {
    const char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  std::size_t line() const { return line_; }

  // Skip spaces/tabs and, when `newlines`, line breaks and comments.
  void skip(bool newlines) {
    while (!done()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') {
        get();
      } else if (c == '#') {
        while (!done() && peek() != '\n') get();
      } else if (newlines && c == '\n') {
        get();
      } else {
        break;
      }
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("settings: " + msg, line_); }

  std::string bare_key() {
    std::string key;
    while (!done()) {
      const char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
        key.push_back(get());
      } else {
        break;
      }
    }
    if (key.empty()) fail("expected a key");
    return key;
  }

  SettingValue value() {
    skip(false);
    SettingValue v;
    v.line = line_;
    const char c = peek();
    if (c == '"') {
      get();
      std::string s;
      while (true) {
        if (done() || peek() == '\n') fail("unterminated string");
        char ch = get();
        if (ch == '"') break;
        if (ch == '\\') {
          if (done()) fail("unterminated escape");
          const char e = get();
          switch (e) {
            case 'n': ch = '\n'; break;
            case 't': ch = '\t'; break;
            case '"': ch = '"'; break;
            case '\\': ch = '\\'; break;
            default: fail(std::string("unknown escape \\") + e);
          }
        }
        s.push_back(ch);
      }
      v.data = std::move(s);
    } else if (c == '[') {
      get();
      SettingValue::Array items;
      while (true) {
        skip(true);
        if (peek() == ']') {
          get();
          break;
        }
        items.push_back(value());
        skip(true);
        if (peek() == ',') {
          get();
        } else if (peek() == ']') {
          get();
          break;
        } else {
          fail("expected ',' or ']' in array");
        }
      }
      v.data = std::move(items);
    } else if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      v.data = true;
    } else if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      v.data = false;
    } else {
      const std::size_t start = pos_;
      while (!done()) {
        const char ch = peek();
        if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '+' || ch == '-' || ch == '.' ||
            ch == 'e' || ch == 'E' || ch == '_') {
          get();
        } else {
          break;
        }
      }
      std::string num(text_.substr(start, pos_ - start));
      std::erase(num, '_');
      if (num.empty()) fail("expected a value");
      double d = 0.0;
      const char* first = num.data();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, num.data() + num.size(), d);
      if (ec != std::errc() || ptr != num.data() + num.size()) fail("malformed number '" + num + "'");
      v.data = d;
      v.integer = num.find_first_of(".eE") == std::string::npos;
    }
    return v;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string format_double(double d) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void render_table(std::ostringstream& os, const SettingsTable& t) {
  for (const auto& [k, v] : t.values()) os << k << " = " << v.render() << '\n';
}

}  // namespace

std::string SettingValue::render() const {
  if (const auto* s = std::get_if<std::string>(&data)) {
    std::string out = "\"";
    for (char c : *s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      out.push_back(c);
    }
    return out + "\"";
  }
  if (const auto* d = std::get_if<double>(&data)) {
    if (integer && std::abs(*d) < 9e15) return std::to_string(static_cast<std::int64_t>(*d));
    return format_double(*d);
  }
  if (const auto* b = std::get_if<bool>(&data)) return *b ? "true" : "false";
  const auto& arr = std::get<Array>(data);
  std::string out = "[";
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (i) out += ", ";
    out += arr[i].render();
  }
  return out + "]";
}

const SettingValue& SettingsTable::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing setting '" + key + "'");
  return it->second;
}

std::string SettingsTable::get_string(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_string()) throw ConfigError("setting '" + key + "' must be a string");
  return std::get<std::string>(v.data);
}

std::string SettingsTable::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double SettingsTable::get_double(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_number()) throw ConfigError("setting '" + key + "' must be a number");
  return std::get<double>(v.data);
}

double SettingsTable::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t SettingsTable::get_int(const std::string& key) const {
  const double d = get_double(key);
  if (d != std::floor(d)) throw ConfigError("setting '" + key + "' must be an integer");
  return static_cast<std::int64_t>(d);
}

std::int64_t SettingsTable::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool SettingsTable::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = at(key);
  if (!v.is_bool()) throw ConfigError("setting '" + key + "' must be true or false");
  return std::get<bool>(v.data);
}

std::vector<std::string> SettingsTable::get_strings(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) throw ConfigError("setting '" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : std::get<SettingValue::Array>(v.data)) {
    if (!item.is_string()) throw ConfigError("setting '" + key + "' must be an array of strings");
    out.push_back(std::get<std::string>(item.data));
  }
  return out;
}

std::vector<double> SettingsTable::get_doubles(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) throw ConfigError("setting '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& item : std::get<SettingValue::Array>(v.data)) {
    if (!item.is_number()) throw ConfigError("setting '" + key + "' must be an array of numbers");
    out.push_back(std::get<double>(item.data));
  }
  return out;
}

SettingsDocument SettingsDocument::parse(std::string_view text) {
  SettingsDocument doc;
  Cursor cur(text);
  SettingsTable* current = &doc.root_;
  while (true) {
    cur.skip(true);
    if (cur.done()) break;
    if (cur.peek() == '[') {
      cur.get();
      const bool array = cur.peek() == '[';
      if (array) cur.get();
      cur.skip(false);
      const std::string name = cur.bare_key();
      cur.skip(false);
      if (cur.done() || cur.get() != ']') cur.fail("expected ']'");
      if (array && (cur.done() || cur.get() != ']')) cur.fail("expected ']]'");
      if (array) {
        auto& vec = doc.arrays_[name];
        vec.emplace_back();
        current = &vec.back();
      } else {
        if (doc.tables_.contains(name)) cur.fail("duplicate table [" + name + "]");
        current = &doc.tables_[name];
      }
    } else {
      const std::string key = cur.bare_key();
      cur.skip(false);
      if (cur.done() || cur.get() != '=') cur.fail("expected '=' after '" + key + "'");
      SettingValue v = cur.value();
      if (current->has(key)) cur.fail("duplicate key '" + key + "'");
      current->set(key, std::move(v));
    }
    cur.skip(false);
    if (!cur.done() && cur.peek() != '\n') cur.fail("unexpected trailing characters");
  }
  return doc;
}

SettingsDocument SettingsDocument::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const SettingsTable& SettingsDocument::table(const std::string& name) const {
  auto it = tables_.find(name);
  if (it == tables_.end()) throw ConfigError("missing table [" + name + "]");
  return it->second;
}

const std::vector<SettingsTable>& SettingsDocument::table_array(const std::string& name) const {
  static const std::vector<SettingsTable> empty;
  auto it = arrays_.find(name);
  return it == arrays_.end() ? empty : it->second;
}

SettingValue parse_setting_value(std::string_view text) {
  Cursor cur(text);
  SettingValue v = cur.value();
  cur.skip(false);
  if (!cur.done()) cur.fail("trailing characters in value");
  return v;
}

void SettingsDocument::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like key=value");
  std::string path(assignment.substr(0, eq));
  while (!path.empty() && path.back() == ' ') path.pop_back();
  SettingValue value;
  try {
    value = parse_setting_value(assignment.substr(eq + 1));
  } catch (const ParseError&) {
    // unquoted strings such as paths
    value.data = std::string(assignment.substr(eq + 1));
  }
  const auto first_dot = path.find('.');
  if (first_dot == std::string::npos) {
    root_.set(path, std::move(value));
    return;
  }
  const std::string head = path.substr(0, first_dot);
  const std::string rest = path.substr(first_dot + 1);
  if (arrays_.contains(head)) {
    const auto dot = rest.find('.');
    if (dot == std::string::npos) throw ConfigError("override '" + path + "' needs array.N.key");
    const std::size_t index = std::stoul(rest.substr(0, dot));
    auto& vec = arrays_[head];
    if (index >= vec.size()) throw ConfigError("override index out of range in '" + path + "'");
    vec[index].set(rest.substr(dot + 1), std::move(value));
    return;
  }
  tables_[head].set(rest, std::move(value));
}

std::string SettingsDocument::render() const {
  std::ostringstream os;
  render_table(os, root_);
  for (const auto& [name, t] : tables_) {
    os << "\n[" << name << "]\n";
    render_table(os, t);
  }
  for (const auto& [name, vec] : arrays_) {
    for (const auto& t : vec) {
      os << "\n[[" << name << "]]\n";
      render_table(os, t);
    }
  }
  return os.str();
}

}  // namespace pdelearn
