#pragma once

// Flat key=value text files. '#' starts a comment; blank lines are ignored;
// whitespace around keys and values is trimmed.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "hsiseg/error.hpp"

namespace hsiseg::config {

class KeyValues {
 public:
  KeyValues() = default;
  explicit KeyValues(std::map<std::string, std::string> entries, std::string source = "<memory>")
      : entries_(std::move(entries)), source_(std::move(source)) {}

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::string& source() const { return source_; }

  const std::string& text(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ArgumentError(source_ + ": missing key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const auto& v = text(key);
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty()) throw ArgumentError(source_ + ": key '" + key + "' is not a number: " + v);
    return d;
  }

  std::uint64_t integer(const std::string& key) const {
    const auto& v = text(key);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ArgumentError(source_ + ": key '" + key + "' is not a non-negative integer: " + v);
    }
    return out;
  }

  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  std::uint64_t integer_or(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  // Rejects keys outside `allowed`, so typos do not silently fall back to defaults.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : entries_) {
      if (!allowed.count(k)) throw ArgumentError(source_ + ": unknown key '" + k + "'");
    }
  }

 private:
  std::map<std::string, std::string> entries_;
  std::string source_ = "<memory>";
};

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}
}  // namespace detail

inline KeyValues parse(std::string_view text, const std::string& source = "<memory>") {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = detail::trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(detail::trim(l.substr(0, eq)));
    const std::string value(detail::trim(l.substr(eq + 1)));
    if (key.empty()) throw FormatError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return KeyValues(std::move(out), source);
}

inline KeyValues load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace hsiseg::config
