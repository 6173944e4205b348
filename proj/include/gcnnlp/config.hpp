#pragma once

#include "gcnnlp/error.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace gcnnlp {

/// Flat key=value configuration. Blank lines and lines starting with '#'
/// are ignored; whitespace around keys and values is trimmed.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "config");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Parses "key=value". Throws ConfigError otherwise.
  void set_assignment(const std::string& assignment);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& items() const& { return values_; }
  std::map<std::string, std::string> items() && { return std::move(values_); }
  /// "key=value" lines in key order.
  std::string dump() const;

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace gcnnlp
