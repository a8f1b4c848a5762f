#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace eqfa {

/// Plain-text settings: "[section]" headers, "key = value" lines, full-line
/// comments starting with # or ;. Values keep internal whitespace, so paths
/// with spaces work. Typed getters fall back to a default when a key is
/// absent and throw ConfigError when a present value does not parse.
class Config {
 public:
  Config() = default;

  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);

  /// Missing key: throws ConfigError naming "section.key".
  std::string str(const std::string& section, const std::string& key) const;
  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) const;

  double num(const std::string& section, const std::string& key, double fallback) const;
  long long integer(const std::string& section, const std::string& key,
                    long long fallback) const;
  std::uint64_t u64(const std::string& section, const std::string& key,
                    std::uint64_t fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace eqfa
