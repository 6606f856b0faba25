#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "veil/common.hpp"

namespace veil {

/// Flat key=value run configuration. Files hold one pair per line with `#`
/// comments; every key can also be set by the CLI flag of the same name
/// (dashes in flags map to underscores in keys). Unknown keys are rejected
/// against the registry below.
class RunConfig {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        // data generation
        "n", "noise_sigma", "jitter", "k_hidden", "k_public", "image_size",
        "image_format",
        // shared
        "seed", "threads", "out", "data", "format",
        // training
        "role", "epochs", "batch_size", "lr", "momentum", "train_alpha1",
        "train_alpha2", "eval_data",
        // attack
        "model", "method", "epsilon", "alpha1", "alpha2", "steps", "step_size",
        // sweep / report / grid
        "grid", "surrogate", "clean_a", "clean_b", "out_prefix", "in", "count",
        "columns", "data_clean", "data_perturbed",
        // ingestion
        "hidden_field", "public_field", "fraction",
    };
    return keys;
  }

  void set(const std::string& key, const std::string& value) {
    require(known_keys().count(key) > 0, "unknown config key: ", key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(concat("cannot open config file: ", path));
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      require(eq != std::string::npos, path, " line ", lineno,
              ": expected key=value, got '", line, "'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      require(!key.empty(), path, " line ", lineno, ": empty key");
      try {
        cfg.set(key, value);
      } catch (const ConfigError& e) {
        throw ConfigError(concat(path, " line ", lineno, ": ", e.what()));
      }
    }
    return cfg;
  }

  std::string get_string(const std::string& key,
                         const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), "missing required config key: ", key);
    return it->second;
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      require(used == it->second.size(), "");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(concat("config key ", key, ": expected integer, got '",
                               it->second, "'"));
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      require(used == it->second.size(), "");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(concat("config key ", key, ": expected number, got '",
                               it->second, "'"));
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(it->second, &used);
      require(used == it->second.size(), "");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(concat("config key ", key,
                               ": expected unsigned integer, got '", it->second,
                               "'"));
    }
  }

  /// Effective configuration as ordered JSON, for embedding into outputs.
  nlohmann::ordered_json echo() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace veil
