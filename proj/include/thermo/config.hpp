#pragma once

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "thermo/errors.hpp"
#include "thermo/map_model.hpp"
#include "thermo/pressure.hpp"

namespace thermo {

enum class ValueType { String, Real, Integer, Boolean, List };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string fallback;
  std::vector<std::string> choices;  // empty: free
};

inline const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema = {
      {"model", ValueType::String, "renyi", {"renyi", "gauss", "custom"}},
      {"model.spec", ValueType::String, "", {}},
      {"potential", ValueType::String, "log_b1", {"log_b1", "b1_pow", "log_pow", "log_deriv", "digit_table"}},
      {"potential.r", ValueType::Real, "1", {}},
      {"potential.table", ValueType::String, "", {}},
      {"potential.class", ValueType::String, "auto", {"auto", "zero", "finite", "infinite"}},
      {"potential.theta", ValueType::Real, "0", {}},
      {"potential.h1", ValueType::Boolean, "true", {}},
      {"digits", ValueType::String, "", {}},
      {"truncation.j_max", ValueType::Integer, "400", {}},
      {"truncation.n_max", ValueType::Integer, "400", {}},
      {"truncation.depth", ValueType::Integer, "1", {}},
      {"truncation.nodes", ValueType::Integer, "24", {}},
      {"truncation.extrapolate_runs", ValueType::Boolean, "true", {}},
      {"tol.root", ValueType::Real, "1e-10", {}},
      {"tol.res_P", ValueType::Real, "1e-8", {}},
      {"tol.res_dP", ValueType::Real, "1e-6", {}},
      {"check.i_max", ValueType::Integer, "1000", {}},
      {"check.n_max", ValueType::Integer, "1000", {}},
      {"pressure.b", ValueType::String, "0.6:0.8:3", {}},
      {"pressure.q", ValueType::String, "0:0.1:3", {}},
      {"dimension.subsystems", ValueType::String, "", {}},
      {"spectrum.alpha", ValueType::List, "1.0,1.5,2.0", {}},
      {"spectrum.q_max", ValueType::Real, "20", {}},
      {"bcf.x", ValueType::List, "", {}},
      {"bcf.random", ValueType::Integer, "0", {}},
      {"bcf.n", ValueType::Integer, "40", {}},
      {"bcf.psi", ValueType::String, "log", {"log", "pow"}},
      {"bcf.r", ValueType::Real, "1", {}},
      {"sample.alpha", ValueType::String, "", {}},
      {"sample.b", ValueType::Real, "1", {}},
      {"sample.q", ValueType::Real, "0", {}},
      {"sample.length", ValueType::Integer, "100000", {}},
      {"sample.burn_in", ValueType::Integer, "1000", {}},
      {"seed", ValueType::Integer, "1", {}},
      {"workers", ValueType::Integer, "0", {}},
      {"output.path", ValueType::String, "", {}},
      {"output.format", ValueType::String, "csv", {"csv", "json"}},
  };
  return schema;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ValidationError("config: " + key + " expects a real number, got '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc() && ptr == last) return v;
  // allow 1e6 style integers
  double d = 0.0;
  auto [p2, e2] = std::from_chars(first, last, d);
  if (e2 == std::errc() && p2 == last && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
  throw ValidationError("config: " + key + " expects an integer, got '" + text + "'");
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ValidationError("config: " + key + " expects a boolean, got '" + text + "'");
}

/// "1..50", "1,2,7", "1..10,20"
inline std::vector<Index> parse_digit_set(const std::string& text) {
  std::vector<Index> out;
  for (const std::string& part : split(text, ',')) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_integer("digits", part));
    } else {
      const Index lo = parse_integer("digits", trim(part.substr(0, dots)));
      const Index hi = parse_integer("digits", trim(part.substr(dots + 2)));
      if (hi < lo) throw ValidationError("config: empty digit range '" + part + "'");
      if (hi - lo > 10'000'000) throw ValidationError("config: digit range '" + part + "' is too large");
      for (Index d = lo; d <= hi; ++d) out.push_back(d);
    }
  }
  for (Index d : out)
    if (d < 1) throw ValidationError("config: digits start at 1");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// "lo:hi:count" or a comma list.
inline std::vector<double> parse_grid(const std::string& key, const std::string& text) {
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ValidationError("config: " + key + " expects lo:hi:count");
    const double lo = parse_real(key, parts[0]);
    const double hi = parse_real(key, parts[1]);
    const long long n = parse_integer(key, parts[2]);
    if (n < 1) throw ValidationError("config: " + key + " needs count >= 1");
    if (n == 1) return {lo};
    std::vector<double> out;
    for (long long k = 0; k < n; ++k) out.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1));
    return out;
  }
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_real(key, p));
  return out;
}

class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<config>") {
    Config cfg;
    const std::string body = trim(text);
    if (!body.empty() && body.front() == '{') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(source + ": " + e.what());
      }
      const nlohmann::json& c = j.contains("config") ? j.at("config") : j;
      if (!c.is_object()) throw ValidationError(source + ": config must be an object");
      for (const auto& [k, v] : c.items()) cfg.set(k, v.is_string() ? v.get<std::string>() : v.dump());
      return cfg;
    }
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    // reports carry their resolved config on "#!" lines
    const bool report = std::any_of(lines.begin(), lines.end(), [](const std::string& l) { return l.rfind("#!", 0) == 0; });
    int number = 0;
    for (std::string line : lines) {
      ++number;
      if (report) {
        if (line.rfind("#!", 0) != 0) continue;
        line = line.substr(2);
      } else {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
      }
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError(source + ":" + std::to_string(number) + ": expected key = value");
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, const std::string& value) {
    const KeySpec& spec = find(key);
    switch (spec.type) {
      case ValueType::Real: parse_real(key, value); break;
      case ValueType::Integer: parse_integer(key, value); break;
      case ValueType::Boolean: parse_bool(key, value); break;
      case ValueType::List:
        for (const auto& p : split(value, ',')) parse_real(key, p);
        break;
      case ValueType::String:
        if (!spec.choices.empty() && std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end())
          throw ValidationError("config: " + key + " must be one of " + join(spec.choices) + ", got '" + value + "'");
        break;
    }
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) const {
    const auto it = values_.find(key);
    return it != values_.end() ? it->second : find(key).fallback;
  }
  double real(const std::string& key) const { return parse_real(key, str(key)); }
  long long integer(const std::string& key) const { return parse_integer(key, str(key)); }
  bool boolean(const std::string& key) const { return parse_bool(key, str(key)); }
  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : split(str(key), ',')) out.push_back(parse_real(key, p));
    return out;
  }

  /// Every schema key with its effective value, in schema order.
  std::vector<std::pair<std::string, std::string>> resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const KeySpec& k : config_schema()) out.emplace_back(k.key, str(k.key));
    return out;
  }

 private:
  static const KeySpec& find(const std::string& key) {
    for (const KeySpec& k : config_schema())
      if (k.key == key) return k;
    throw ValidationError("config: unknown key '" + key + "'");
  }

  static std::string join(const std::vector<std::string>& xs) {
    std::string out;
    for (const auto& x : xs) out += (out.empty() ? "" : "|") + x;
    return out;
  }

  std::map<std::string, std::string> values_;
};

/// Custom model file: name, a, b, c, d ("constant, slope"), parabolic, kappa, growth_constant, gamma, digit_offset.
inline CustomModelSpec load_custom_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read custom model file " + path);
  CustomModelSpec spec;
  int number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(path + ":" + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto affine = [&](IndexAffine& out) {
      const auto parts = split(value, ',');
      if (parts.size() != 2) throw ValidationError(path + ": " + key + " expects 'constant, slope'");
      out = {parse_real(key, parts[0]), parse_real(key, parts[1])};
    };
    if (key == "name") spec.name = value;
    else if (key == "a") affine(spec.inverse.a);
    else if (key == "b") affine(spec.inverse.b);
    else if (key == "c") affine(spec.inverse.c);
    else if (key == "d") affine(spec.inverse.d);
    else if (key == "parabolic") spec.parabolic = value.empty() ? std::vector<Index>{} : parse_digit_set(value);
    else if (key == "kappa") spec.kappa = parse_real(key, value);
    else if (key == "growth_constant") spec.growth_constant = parse_real(key, value);
    else if (key == "gamma") spec.gamma = parse_real(key, value);
    else if (key == "digit_offset") spec.digit_offset = parse_integer(key, value);
    else throw ValidationError(path + ": unknown key '" + key + "'");
  }
  return spec;
}

/// Table file: one "digit value" pair per line.
inline std::vector<std::pair<Index, double>> load_digit_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read digit table " + path);
  std::vector<std::pair<Index, double>> out;
  for (std::string line; std::getline(in, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    long long d = 0;
    double v = 0.0;
    if (!(ls >> d)) continue;
    if (!(ls >> v)) throw ValidationError(path + ": expected 'digit value'");
    out.emplace_back(d, v);
  }
  return out;
}

inline MapModel build_model(const Config& cfg) {
  const std::string kind = cfg.str("model");
  if (kind == "renyi") return MapModel::renyi();
  if (kind == "gauss") return MapModel::gauss();
  if (cfg.str("model.spec").empty()) throw ValidationError("config: model = custom needs model.spec");
  return MapModel::custom(load_custom_spec(cfg.str("model.spec")));
}

inline Potential build_potential(const Config& cfg, const MapModel& model) {
  const std::string name = cfg.str("potential");
  const double r = cfg.real("potential.r");
  Potential phi = name == "log_b1"      ? Potential::log_digit(model)
                  : name == "b1_pow"    ? Potential::digit_power(model, r)
                  : name == "log_pow"   ? Potential::log_power(model, r)
                  : name == "log_deriv" ? Potential::log_derivative(model)
                                        : Potential::digit_table(model, load_digit_table(cfg.str("potential.table")));
  const std::string cls = cfg.str("potential.class");
  if (cls != "auto") {
    const bool h1 = cfg.boolean("potential.h1");
    if (cls == "zero") phi = phi.with_class(XiClass::zero(), h1);
    if (cls == "infinite") phi = phi.with_class(XiClass::infinite(), h1);
    if (cls == "finite") {
      const double theta = cfg.real("potential.theta");
      if (!(theta > 0.0)) throw ValidationError("config: potential.class = finite needs potential.theta > 0");
      phi = phi.with_class(XiClass::finite(theta, phi.xi_class().eta, phi.xi_class().xi), h1);
    }
  }
  return phi;
}

inline Truncation build_truncation(const Config& cfg) {
  Truncation t;
  t.j_max = cfg.integer("truncation.j_max");
  t.n_max = cfg.integer("truncation.n_max");
  t.depth = static_cast<int>(cfg.integer("truncation.depth"));
  t.nodes = static_cast<int>(cfg.integer("truncation.nodes"));
  t.extrapolate_runs = cfg.boolean("truncation.extrapolate_runs");
  if (t.j_max < 2) throw ValidationError("config: truncation.j_max must be >= 2");
  if (t.n_max < 1) throw ValidationError("config: truncation.n_max must be >= 1");
  if (t.depth < 1 || t.depth > 3) throw ValidationError("config: truncation.depth must be 1, 2 or 3");
  if (t.nodes < 4) throw ValidationError("config: truncation.nodes must be >= 4");
  return t;
}

}  // namespace thermo
