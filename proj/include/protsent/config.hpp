#pragma once

// Run configuration: flat INI sections with typed keys. Every key has a
// default, so an empty file reproduces the reference recipe. Unknown
// sections or keys are errors.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "protsent/common.hpp"
#include "protsent/profile.hpp"

namespace protsent {

class ConfigError : public Error {
public:
  using Error::Error;
};

enum class KeyType { integer, real, boolean, text, real_list, int_list };

struct ConfigKey {
  std::string section;  // "" for top-level keys
  std::string key;
  KeyType type;
  std::string default_value;
};

namespace detail {

inline std::string default_background_text() {
  std::string s;
  for (double v : default_background()) {
    if (!s.empty()) s += ',';
    s += format_double(v);
  }
  return s;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace detail

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"", "seed", KeyType::integer, "42"},

      {"data", "pfam_min_id", KeyType::real, "0.7"},
      {"data", "pfam_min_cov", KeyType::real, "0.8"},
      {"data", "cluster_prefilter", KeyType::text, "auto"},
      {"data", "string_min_score", KeyType::integer, "400"},
      {"data", "ppi_len_min", KeyType::integer, "10"},
      {"data", "ppi_len_max", KeyType::integer, "1024"},
      {"data", "decontam_min_id", KeyType::real, "0.5"},
      {"data", "decontam_min_cov", KeyType::real, "0.8"},
      {"data", "decontam_prefix", KeyType::text, "BERNETT_"},
      {"data", "stage1_min_id", KeyType::real, "0.65"},
      {"data", "stage1_min_cov", KeyType::real, "0.85"},
      {"data", "stage2_min_id", KeyType::real, "0.5"},
      {"data", "stage2_min_cov", KeyType::real, "0.75"},
      {"data", "dms_drop_prefixes", KeyType::text, "GB1_,GFP_AEQVI_"},
      {"data", "dms_test_frac", KeyType::real, "0.2"},
      {"data", "dms_min_group", KeyType::integer, "10"},

      {"hard_negatives", "per_pos_threshold", KeyType::real, "-1.0"},
      {"hard_negatives", "sum_threshold", KeyType::real, "-16.0"},
      {"hard_negatives", "spacing_min", KeyType::integer, "6"},
      {"hard_negatives", "spacing_len_divisor", KeyType::integer, "8"},
      {"hard_negatives", "k_floor", KeyType::integer, "6"},
      {"hard_negatives", "k_max", KeyType::integer, "50"},
      {"hard_negatives", "proposals_per_k", KeyType::integer, "2048"},
      {"hard_negatives", "family_len_tolerance", KeyType::real, "0.1"},
      {"hard_negatives", "per_family_cap", KeyType::integer, "100"},
      {"hard_negatives", "len_min", KeyType::integer, "6"},
      {"hard_negatives", "len_max", KeyType::integer, "1023"},
      {"hard_negatives", "background", KeyType::real_list, detail::default_background_text()},

      {"sampler", "kind", KeyType::text, "round_robin"},
      {"sampler", "batch_size", KeyType::integer, "64"},
      {"sampler", "max_pairs", KeyType::integer, "70000000"},

      {"trainer", "effective_batch", KeyType::integer, "1024"},
      {"trainer", "lr", KeyType::real, "3e-4"},
      {"trainer", "min_lr", KeyType::real, "0"},
      {"trainer", "warmup_steps", KeyType::integer, "500"},
      {"trainer", "weight_decay", KeyType::real, "0.01"},
      {"trainer", "beta1", KeyType::real, "0.9"},
      {"trainer", "beta2", KeyType::real, "0.999"},
      {"trainer", "eps", KeyType::real, "1e-8"},
      {"trainer", "scale", KeyType::real, "20"},
      {"trainer", "init_scale", KeyType::real, "1e-3"},
      {"trainer", "bias", KeyType::boolean, "false"},

      {"eval", "cv_folds", KeyType::integer, "4"},
      {"eval", "recall_k", KeyType::int_list, "1,10,30"},
      {"eval", "few_shot_n", KeyType::int_list, "50,100,500,1000"},
      {"eval", "few_shot_stratified", KeyType::boolean, "false"},
  };
  return schema;
}

class RunConfig {
public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[name(k.section, k.key)] = canonicalize(k, k.default_value);
  }

  static RunConfig parse(std::istream& in) {
    RunConfig cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        bool known = false;
        for (const auto& k : config_schema()) known |= k.section == section;
        if (!known) throw ParseError(lineno, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
      const std::string key = detail::trim(line.substr(0, eq));
      std::string value = detail::trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      try {
        cfg.set(section, key, value);
      } catch (const ConfigError& e) {
        throw ParseError(lineno, e.what());
      }
    }
    return cfg;
  }

  static RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    return parse(in);
  }

  /// Validates against the schema; values are stored in canonical form.
  void set(const std::string& section, const std::string& key, const std::string& value) {
    const ConfigKey* spec = find(section, key);
    if (!spec) throw ConfigError("unknown key '" + name(section, key) + "'");
    values_[name(section, key)] = canonicalize(*spec, value);
  }

  /// "section.key" or top-level "key".
  void set(const std::string& dotted, const std::string& value) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) set("", dotted, value);
    else set(dotted.substr(0, dot), dotted.substr(dot + 1), value);
  }

  const std::string& text(const std::string& dotted) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) throw ConfigError("unknown key '" + dotted + "'");
    return it->second;
  }
  double real(const std::string& dotted) const { return std::stod(text(dotted)); }
  std::int64_t integer(const std::string& dotted) const { return std::stoll(text(dotted)); }
  std::size_t count(const std::string& dotted) const {
    const auto v = integer(dotted);
    if (v < 0) throw ConfigError("'" + dotted + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }
  bool boolean(const std::string& dotted) const { return text(dotted) == "true"; }
  std::vector<double> reals(const std::string& dotted) const {
    std::vector<double> out;
    for (const auto& t : detail::split_csv(text(dotted))) out.push_back(std::stod(t));
    return out;
  }
  std::vector<std::size_t> counts(const std::string& dotted) const {
    std::vector<std::size_t> out;
    for (const auto& t : detail::split_csv(text(dotted))) out.push_back(static_cast<std::size_t>(std::stoull(t)));
    return out;
  }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(std::stoull(text("seed"))); }

  /// Sorted "key = value" lines; the config hash is taken over this text.
  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  HardNegConfig hard_negatives() const {
    HardNegConfig c;
    c.per_pos_threshold = real("hard_negatives.per_pos_threshold");
    c.sum_threshold = real("hard_negatives.sum_threshold");
    c.spacing_min_abs = count("hard_negatives.spacing_min");
    c.spacing_len_divisor = count("hard_negatives.spacing_len_divisor");
    c.k_floor = count("hard_negatives.k_floor");
    c.k_max = count("hard_negatives.k_max");
    c.proposals_per_k = count("hard_negatives.proposals_per_k");
    c.family_len_tolerance = real("hard_negatives.family_len_tolerance");
    c.per_family_cap = count("hard_negatives.per_family_cap");
    c.len_min = count("hard_negatives.len_min");
    c.len_max = count("hard_negatives.len_max");
    c.validate();
    return c;
  }

  ResidueRow background() const {
    const auto v = reals("hard_negatives.background");
    if (v.size() != 20) throw ConfigError("hard_negatives.background needs 20 values");
    ResidueRow bg;
    double sum = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      if (!(v[i] > 0.0)) throw ConfigError("hard_negatives.background values must be positive");
      sum += v[i];
    }
    for (std::size_t i = 0; i < 20; ++i) bg[i] = v[i] / sum;
    return bg;
  }

private:
  static std::string name(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }

  static const ConfigKey* find(const std::string& section, const std::string& key) {
    for (const auto& k : config_schema()) {
      if (k.section == section && k.key == key) return &k;
    }
    return nullptr;
  }

  static std::string canonicalize(const ConfigKey& spec, const std::string& value) {
    const std::string what = "'" + name(spec.section, spec.key) + "': ";
    auto parse_int = [&](const std::string& s) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(s, &used);
      } catch (const std::exception&) {
        throw ConfigError(what + "expected an integer, got '" + s + "'");
      }
      if (used != s.size()) throw ConfigError(what + "expected an integer, got '" + s + "'");
      return v;
    };
    auto parse_real = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        throw ConfigError(what + "expected a number, got '" + s + "'");
      }
      if (used != s.size() || !std::isfinite(v)) throw ConfigError(what + "expected a number, got '" + s + "'");
      return v;
    };
    switch (spec.type) {
      case KeyType::integer: return std::to_string(parse_int(value));
      case KeyType::real: return format_double(parse_real(value));
      case KeyType::boolean:
        if (value == "true" || value == "1" || value == "yes") return "true";
        if (value == "false" || value == "0" || value == "no") return "false";
        throw ConfigError(what + "expected true/false, got '" + value + "'");
      case KeyType::text: return value;
      case KeyType::real_list: {
        std::string out;
        for (const auto& t : detail::split_csv(value)) out += (out.empty() ? "" : ",") + format_double(parse_real(t));
        return out;
      }
      case KeyType::int_list: {
        std::string out;
        for (const auto& t : detail::split_csv(value)) out += (out.empty() ? "" : ",") + std::to_string(parse_int(t));
        return out;
      }
    }
    return value;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace protsent
