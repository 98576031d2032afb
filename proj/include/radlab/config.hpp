#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "radlab/matrix.hpp"

namespace radlab {

/// Bad config text, bad value or a key nobody asked for.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Key–value config with [section] headers:
///
///   # comment
///   [pretrain]
///   learning_rate = 0.05
///   kind = "mlp"
///   caps = [1.0, 2.5]
///
/// Keys are addressed as "section.key" (top-level keys have no prefix).
/// Every getter marks its key as read; `reject_unknown` then fails on any key
/// that was never read, so a typo cannot be silently ignored.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const;
  /// Overrides (or adds) a raw value, e.g. from a command-line flag.
  void set(const std::string& key, const std::string& raw);

  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_u64s(const std::string& key, const std::vector<std::uint64_t>& fallback) const;

  void reject_unknown() const;

  /// Every key with its raw text, sorted by key.
  std::map<std::string, std::string> entries() const;

 private:
  struct Entry {
    std::string raw;
    std::size_t line = 0;
    mutable bool used = false;
  };
  const Entry* find(const std::string& key) const;
  [[noreturn]] void bad_value(const std::string& key, const Entry& e, const char* expected) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

}  // namespace radlab
