#ifndef PBOEM_CONFIG_HPP
#define PBOEM_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pboem {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat sectioned key-value config file:
///   [section]
///   key = value        # comment
/// Every key must be consumed by the reader; leftovers are reported as
/// errors with their line number, so typos cannot silently change a study.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  static ConfigFile parse_string(const std::string& text,
                                 const std::string& name = "<string>") {
    ConfigFile cfg;
    cfg.name_ = name;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = strip(strip_comment(line));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError(at(name, lineno) + "malformed section header");
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(at(name, lineno) + "expected 'key = value'");
      const std::string key = section + "." + strip(s.substr(0, eq));
      if (cfg.values_.count(key))
        throw ConfigError(at(name, lineno) + "duplicate key '" + key + "'");
      cfg.values_[key] = {strip(s.substr(eq + 1)), lineno};
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end())
      throw ConfigError(name_ + ": missing required key '" + key + "'");
    consumed_.insert(key);
    return it->second.text;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
  }

  double get_double(const std::string& key) {
    return parse_as<double>(key, get_string(key));
  }
  double get_double(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  std::int64_t get_int(const std::string& key) {
    return parse_as<std::int64_t>(key, get_string(key));
  }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    return has(key) ? parse_as<std::uint64_t>(key, get_string(key)) : fallback;
  }

  std::vector<double> get_doubles(const std::string& key) {
    std::vector<double> out;
    std::istringstream in(get_string(key));
    std::string tok;
    while (std::getline(in, tok, ','))
      out.push_back(parse_as<double>(key, strip(tok)));
    return out;
  }

  /// Call after reading everything; reports unconsumed keys.
  void finish() const {
    for (const auto& [key, entry] : values_) {
      if (!consumed_.count(key))
        throw ConfigError(at(name_, entry.lineno) + "unknown key '" + key +
                          "'");
    }
  }

 private:
  struct Entry {
    std::string text;
    int lineno = 0;
  };

  template <class T>
  T parse_as(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T v{};
    in >> v;
    if (in.fail() || !(in >> std::ws).eof())
      throw ConfigError(name_ + ": key '" + key + "': cannot parse '" + text +
                        "'");
    return v;
  }

  static std::string strip_comment(const std::string& s) {
    const auto pos = s.find('#');
    return pos == std::string::npos ? s : s.substr(0, pos);
  }
  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static std::string at(const std::string& name, int lineno) {
    return name + ":" + std::to_string(lineno) + ": ";
  }

  std::string name_;
  std::map<std::string, Entry> values_;
  std::set<std::string> consumed_;
};

}  // namespace pboem

#endif  // PBOEM_CONFIG_HPP
