#pragma once

#include <map>
#include <string>
#include <vector>

namespace stereoadapt::harness {

/// Plain-text `key = value` settings, one per line, `#` starts a comment.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  long long get_int64(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Applies `key=value` overrides, e.g. from the command line.
  void merge(const Config& other);
  void apply_override(const std::string& assignment);

  std::vector<std::string> keys() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// One `key = value` line per entry, sorted by key.
  std::string to_string() const;
  void save(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stereoadapt::harness
