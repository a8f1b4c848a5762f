#include "eqfa/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "eqfa/errors.hpp"

namespace eqfa {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated section header", line_number);
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ParseError("empty section name", line_number);
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_number);
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_number);
    cfg.sections_[section][key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

std::string Config::str(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s != sections_.end()) {
    const auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  throw ConfigError("missing config key " + section + "." + key);
}

std::string Config::str(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  return has(section, key) ? str(section, key) : fallback;
}

double Config::num(const std::string& section, const std::string& key,
                   double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = str(section, key);
  size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size())
    throw ConfigError("config key " + section + "." + key + " is not a number: " + v);
  return out;
}

long long Config::integer(const std::string& section, const std::string& key,
                          long long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = str(section, key);
  size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size())
    throw ConfigError("config key " + section + "." + key + " is not an integer: " + v);
  return out;
}

std::uint64_t Config::u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = str(section, key);
  size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || (!v.empty() && v[0] == '-'))
    throw ConfigError("config key " + section + "." + key + " is not an unsigned integer: " + v);
  return out;
}

bool Config::flag(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = str(section, key);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("config key " + section + "." + key + " is not a boolean: " + v);
}

}  // namespace eqfa
