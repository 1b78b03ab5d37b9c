#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stvnn/types.hpp"

namespace stvnn {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Flat `key = value` text with dotted keys. '#' starts a comment; blank lines
// are ignored; a repeated key is an error.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  // Keys not in `known`; used to reject typos.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  // Sorted `key = value` lines; stable across formatting differences.
  std::string canonical() const;
  std::uint64_t hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

// FNV-1a 64 over bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a(const std::string& s);

}  // namespace stvnn
