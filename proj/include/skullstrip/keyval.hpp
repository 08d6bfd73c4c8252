#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "skullstrip/errors.hpp"

namespace skullstrip {

// Flat key=value text files, one pair per line; '#' starts a comment.
using KeyValueMap = std::map<std::string, std::string>;

inline KeyValueMap parse_keyvalue(std::istream& in) {
  KeyValueMap kv;
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (!key.empty()) kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValueMap read_keyvalue_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  return parse_keyvalue(in);
}

inline void write_keyvalue_file(const KeyValueMap& kv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
  if (!out) throw IoFailure("write failed: " + path);
}

inline double kv_get(const KeyValueMap& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

inline int kv_get(const KeyValueMap& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

inline bool kv_get(const KeyValueMap& kv, const std::string& key, bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  return it->second == "1" || it->second == "true" || it->second == "yes";
}

}  // namespace skullstrip
