#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "driver_wm/error.hpp"

namespace dwm {

/// Flat "key = value" text used for manifests, configs and reports.
/// '#' starts a comment, blank lines are skipped, later keys override
/// earlier ones. Writing preserves insertion order.
class KeyValueText {
 public:
  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_.emplace(key, entries_.size());
      entries_.emplace_back(key, value);
    } else {
      entries_[it->second].second = value;
    }
  }

  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::uint32_t value) { set(key, std::to_string(value)); }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) fail(ErrorCode::kNotFound, "key '" + key + "'");
    return entries_[it->second].second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  double get_double(const std::string& key) const { return parse_double(key, get(key)); }
  std::uint64_t get_u64(const std::string& key) const { return parse_u64(key, get(key)); }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void merge(const KeyValueText& other) {
    for (const auto& [k, v] : other.entries()) set(k, v);
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  static KeyValueText parse(std::istream& in) {
    KeyValueText kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        fail(ErrorCode::kInvalidConfig, "line " + std::to_string(lineno) + " has no '='");
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValueText parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueText load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path);
    return parse(in);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path);
    out << str();
    if (!out) fail(ErrorCode::kIo, "write failed for " + path);
  }

  /// Shortest representation that round-trips.
  static std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  }

  static double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail(ErrorCode::kInvalidConfig, "key '" + key + "': '" + s + "' is not a number");
    }
    return v;
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail(ErrorCode::kInvalidConfig, "key '" + key + "': '" + s + "' is not an unsigned integer");
    }
    return v;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        if (!trim(cur).empty()) out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
  }

  static std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ",";
      out += items[i];
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// FNV-1a over raw bytes; used for provenance hashes in output files.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

}  // namespace dwm
