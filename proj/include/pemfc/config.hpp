// Copyright 2026 The pemfc-online Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Strict reader for the TOML subset used by run configs:
//
//   # comment
//   [section]
//   key = 1.5            numbers (integers are read as doubles)
//   key = "text"         strings, with \" and \\ escapes
//   key = true           booleans
//   key = [1.0, 2.0]     flat numeric arrays
//
// Keys are stored flat as "section.key". Anything else is a ConfigError with
// the offending line number.

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pemfc/errors.hpp"

namespace pemfc {

using ConfigValue = std::variant<double, bool, std::string, std::vector<double>>;

enum class ValueType { Number, Bool, String, Array };

inline const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::Number: return "number";
    case ValueType::Bool: return "bool";
    case ValueType::String: return "string";
    case ValueType::Array: return "array";
  }
  return "?";
}

inline ValueType type_of(const ConfigValue& v) { return static_cast<ValueType>(v.index()); }

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

// Removes a trailing comment, respecting string literals.
inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (c == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace detail

// Parses one value literal; `where` prefixes error messages.
inline ConfigValue parse_value(const std::string& raw, const std::string& where) {
  const std::string text = detail::trim(raw);
  if (text.empty()) throw ConfigError(where + ": missing value");
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if (c == '\\') {
        if (i + 1 >= text.size()) break;
        const char n = text[++i];
        if (n == '"' || n == '\\') {
          out.push_back(n);
        } else if (n == 'n') {
          out.push_back('\n');
        } else {
          throw ConfigError(where + ": unsupported escape");
        }
      } else if (c == '"') {
        break;
      } else {
        out.push_back(c);
      }
    }
    if (i != text.size() - 1) throw ConfigError(where + ": malformed string");
    return out;
  }
  if (text.front() == '[') {
    if (text.back() != ']') throw ConfigError(where + ": unterminated array");
    std::vector<double> out;
    const std::string body = detail::trim(std::string_view(text).substr(1, text.size() - 2));
    if (body.empty()) return out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      double v = 0.0;
      if (!detail::parse_number(detail::trim(item), v)) throw ConfigError(where + ": arrays hold numbers only");
      out.push_back(v);
    }
    if (body.back() == ',') throw ConfigError(where + ": trailing comma in array");
    return out;
  }
  double v = 0.0;
  if (!detail::parse_number(text, v)) throw ConfigError(where + ": cannot parse value '" + text + "'");
  return v;
}

class ConfigDoc {
 public:
  static ConfigDoc parse(const std::string& text, const std::string& origin = "<config>") {
    ConfigDoc doc;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const std::string where = origin + ":" + std::to_string(number);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string body = detail::trim(detail::strip_comment(line));
      if (body.empty()) continue;
      if (body.front() == '[') {
        if (body.back() != ']') throw ConfigError(where + ": malformed section header");
        section = detail::trim(std::string_view(body).substr(1, body.size() - 2));
        if (!detail::valid_key(section)) throw ConfigError(where + ": invalid section name");
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = detail::trim(std::string_view(body).substr(0, eq));
      if (!detail::valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (doc.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      doc.values_[full] = parse_value(body.substr(eq + 1), where);
    }
    return doc;
  }

  static ConfigDoc load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  // Applies "section.key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string key = detail::trim(std::string_view(assignment).substr(0, eq));
    const auto dot = key.find('.');
    if (dot == std::string::npos || !detail::valid_key(key.substr(0, dot)) ||
        !detail::valid_key(key.substr(dot + 1)))
      throw ConfigError("override '" + assignment + "': key must be section.key");
    std::string raw = assignment.substr(eq + 1);
    ConfigValue v;
    try {
      v = parse_value(raw, "override " + key);
    } catch (const ConfigError&) {
      // bare words are accepted as strings on the command line
      const std::string t = detail::trim(raw);
      if (t.empty() || t.find_first_of("\"[],") != std::string::npos) throw;
      v = t;
    }
    values_[key] = std::move(v);
  }

  // Entries of `other` replace entries here.
  void merge(const ConfigDoc& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  void set(const std::string& key, ConfigValue v) { values_[key] = std::move(v); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  double number(const std::string& key, double fallback) const { return get<double>(key, fallback); }
  bool boolean(const std::string& key, bool fallback) const { return get<bool>(key, fallback); }
  std::string string(const std::string& key, const std::string& fallback) const {
    return get<std::string>(key, fallback);
  }
  std::vector<double> array(const std::string& key, const std::vector<double>& fallback) const {
    return get<std::vector<double>>(key, fallback);
  }

  // Rejects keys absent from `schema` and values of the wrong type.
  void validate(const std::map<std::string, ValueType>& schema) const {
    for (const auto& [k, v] : values_) {
      const auto it = schema.find(k);
      if (it == schema.end()) throw ConfigError("unknown key '" + k + "'");
      if (type_of(v) != it->second)
        throw ConfigError("key '" + k + "' must be a " + type_name(it->second) + ", got " +
                          type_name(type_of(v)));
    }
  }

  std::string to_toml() const {
    std::map<std::string, std::vector<std::pair<std::string, const ConfigValue*>>> sections;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      sections[k.substr(0, dot)].emplace_back(k.substr(dot + 1), &v);
    }
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [name, entries] : sections) {
      if (!first) os << '\n';
      first = false;
      os << '[' << name << "]\n";
      for (const auto& [key, v] : entries) {
        os << key << " = ";
        std::visit(
            [&os](const auto& x) {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, double>) {
                os << x;
              } else if constexpr (std::is_same_v<T, bool>) {
                os << (x ? "true" : "false");
              } else if constexpr (std::is_same_v<T, std::string>) {
                os << '"';
                for (char c : x) {
                  if (c == '"' || c == '\\') os << '\\';
                  os << c;
                }
                os << '"';
              } else {
                os << '[';
                for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
                os << ']';
              }
            },
            *v);
        os << '\n';
      }
    }
    return os.str();
  }

 private:
  template <class T>
  T get(const std::string& key, const T& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (const T* v = std::get_if<T>(&it->second)) return *v;
    throw ConfigError("key '" + key + "' has the wrong type");
  }

  std::map<std::string, ConfigValue> values_;
};

}  // namespace pemfc
