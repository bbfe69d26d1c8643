#pragma once

// Experiment configuration: INI-style `[section]` blocks of `key = value`
// lines. Every key must appear in the schema below; anything else is an error.
// Relative paths resolve against the directory holding the config file.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ncsn/error.hpp"

namespace ncsn {

class ExperimentConfig {
public:
  static const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"run", {"seed", "out"}},
        {"data",
         {"kind", "weights", "means", "variances", "manifold", "segment_from", "segment_to", "radius",
          "noise_variance"}},
        {"schedule", {"preset", "sigma_first", "sigma_last", "levels"}},
        {"network", {"hidden", "layers"}},
        {"train",
         {"iterations", "batch_size", "lr", "objective", "checkpoint_every", "log_every", "projections", "level",
          "weighting", "debug_grad_check", "eval_batch"}},
        {"sampler", {"epsilon", "steps", "record_every", "chains", "init_low", "init_high", "checkpoint"}},
        {"vanilla", {"epsilon", "steps"}},
        {"inpaint", {"mask", "observed"}},
        {"eval", {"grid", "bound", "near_radius", "samples"}},
    };
    return s;
  }

  ExperimentConfig() = default;

  static ExperimentConfig from_string(const std::string& text, std::filesystem::path base_dir = ".") {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.base_dir_ = std::move(base_dir);
    for (const auto& [section, body] : tree) {
      auto known = schema().find(section);
      if (known == schema().end()) {
        if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
        throw ConfigError("config: unknown section [" + section + "]");
      }
      for (const auto& [key, value] : body) {
        if (!known->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
        cfg.values_[section + "." + key] = value.get_value<std::string>();
      }
    }
    return cfg;
  }

  static ExperimentConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto dir = std::filesystem::absolute(path).parent_path();
    return from_string(ss.str(), dir);
  }

  // Programmatic override; the key must be in the schema.
  void set(const std::string& dotted, const std::string& value) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) throw ConfigError("config: key '" + dotted + "' needs a section");
    auto known = schema().find(dotted.substr(0, dot));
    if (known == schema().end() || !known->second.count(dotted.substr(dot + 1)))
      throw ConfigError("config: unknown key '" + dotted + "'");
    values_[dotted] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  bool has_section(const std::string& section) const {
    for (const auto& [k, v] : values_)
      if (k.rfind(section + ".", 0) == 0) return true;
    return false;
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_real(it->second, key);
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const std::string& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
  }

  bool flag(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + it->second + "'");
  }

  // Comma- or whitespace-separated numbers.
  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return split_reals(it->second, key);
  }

  // Rows separated by ';', entries by ',' or whitespace.
  std::vector<std::vector<double>> matrix(const std::string& key, std::vector<std::vector<double>> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::vector<double>> rows;
    std::stringstream ss(it->second);
    std::string row;
    while (std::getline(ss, row, ';')) rows.push_back(split_reals(row, key));
    return rows;
  }

  std::filesystem::path path(const std::string& key, const std::filesystem::path& fallback) const {
    auto it = values_.find(key);
    std::filesystem::path p = it == values_.end() ? fallback : std::filesystem::path(it->second);
    if (p.empty() || p.is_absolute()) return p;
    return base_dir_ / p;
  }

  const std::filesystem::path& base_dir() const { return base_dir_; }

private:
  static double parse_real(const std::string& s, const std::string& key) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
    }
  }

  static std::vector<double> split_reals(std::string s, const std::string& key) {
    for (char& c : s)
      if (c == ',') c = ' ';
    std::stringstream ss(s);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) out.push_back(parse_real(tok, key));
    return out;
  }

  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_ = ".";
};

}  // namespace ncsn
