#pragma once

// Experiment configuration: a small INI dialect ([section] / key = value /
// '#' comments) with line-anchored errors, plus the built-in scenarios.

#include "cpost/adjust.hpp"
#include "cpost/core.hpp"
#include "cpost/gp_model.hpp"
#include "cpost/prior.hpp"
#include "cpost/samplers.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cpost {

inline const std::vector<std::string>& parameter_names() {
  static const std::vector<std::string> names{"mu", "tau", "omega"};
  return names;
}

inline const std::vector<std::string>& sampler_names() {
  static const std::vector<std::string> names{"mh", "overall-gibbs", "adaptive-gibbs", "full-gibbs"};
  return names;
}

struct ScenarioConfig {
  std::string name = "omega3";
  double mu = 0.0;
  double tau = 1.0;
  double omega = 3.0;
  Index sites = 20;
  Index n = 50;
  double lower = 0.0;
  double upper = 20.0;

  GpParams truth() const { return {mu, tau, omega}; }
  bool operator==(const ScenarioConfig&) const = default;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  PriorSpec prior;
  std::string sampler = "mh";
  Adjustment adjustment = Adjustment::curvature;
  std::string partition = "mu|tau|omega";
  Coordinates coordinates = Coordinates::unconstrained;
  McmcSettings mcmc;
  Index replicates = 200;
  std::uint64_t seed = 20240;
  std::vector<double> alphas{0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  std::string output = "results";

  void validate() const;
  BlockPartition block_partition() const { return BlockPartition::parse(partition, parameter_names()); }
  bool operator==(const ExperimentConfig& o) const;
};

inline bool operator==(const McmcSettings& a, const McmcSettings& b) {
  return a.iterations == b.iterations && a.burn_in == b.burn_in && a.thinning == b.thinning &&
         a.target_low == b.target_low && a.target_high == b.target_high && a.adapt_interval == b.adapt_interval &&
         a.max_consecutive_rejects == b.max_consecutive_rejects && a.refresh_every == b.refresh_every &&
         a.inner_max_iterations == b.inner_max_iterations;
}

inline bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return scenario == o.scenario && prior == o.prior && sampler == o.sampler && adjustment == o.adjustment &&
         partition == o.partition && coordinates == o.coordinates && mcmc == o.mcmc && replicates == o.replicates &&
         seed == o.seed && alphas == o.alphas && output == o.output;
}

inline void ExperimentConfig::validate() const {
  if (replicates < 1) throw ConfigError("replicates must be at least 1");
  if (scenario.sites < 2) throw ConfigError("scenario needs at least 2 sites");
  if (scenario.n < 2) throw ConfigError("scenario needs n >= 2 replicates per dataset");
  if (!(scenario.upper > scenario.lower)) throw ConfigError("scenario interval must have upper > lower");
  if (!(scenario.tau > 0.0) || !(scenario.omega > 0.0)) throw ConfigError("scenario tau and omega must be positive");
  try {
    prior.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (std::find(sampler_names().begin(), sampler_names().end(), sampler) == sampler_names().end())
    throw ConfigError("unknown sampler '" + sampler + "'");
  if (sampler == "full-gibbs" && adjustment != Adjustment::full)
    throw ConfigError("the full-gibbs sampler requires adjustment = full");
  if (sampler == "adaptive-gibbs" && adjustment == Adjustment::full)
    throw ConfigError("adaptive-gibbs adjusts the composite likelihood; use none, magnitude or curvature");
  if (sampler == "overall-gibbs" && adjustment == Adjustment::full)
    throw ConfigError("overall-gibbs runs on the composite posterior; use mh or full-gibbs for adjustment = full");
  block_partition();
  if (mcmc.iterations <= mcmc.burn_in) throw ConfigError("iterations must exceed burn_in");
  if (mcmc.burn_in < 0 || mcmc.thinning < 1 || mcmc.refresh_every < 1 || mcmc.adapt_interval < 1)
    throw ConfigError("burn_in, thinning, refresh_every and adapt_interval must be positive");
  if (alphas.empty()) throw ConfigError("alphas must not be empty");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("every alpha must lie in (0, 1)");
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (!(alphas[i] > alphas[i - 1])) throw ConfigError("alphas must be strictly increasing");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_integer(const std::string& s, int line) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("not an integer: '" + s + "'", line);
  return v;
}

inline double parse_real(const std::string& s, int line) {
  try {
    return parse_double(s);
  } catch (const Error& e) {
    throw ConfigError(e.what(), line);
  }
}

}  // namespace detail

inline void apply_setting(ExperimentConfig& c, const std::string& section, const std::string& key,
                          const std::string& value, int line) {
  using detail::parse_integer;
  using detail::parse_real;
  auto unknown = [&]() { throw ConfigError("unknown key '" + key + "' in section [" + section + "]", line); };
  try {
    if (section == "scenario") {
      if (key == "name") c.scenario.name = value;
      else if (key == "mu") c.scenario.mu = parse_real(value, line);
      else if (key == "tau") c.scenario.tau = parse_real(value, line);
      else if (key == "omega") c.scenario.omega = parse_real(value, line);
      else if (key == "sites") {
        c.scenario.sites = parse_integer<Index>(value, line);
        if (c.scenario.sites < 2) throw ConfigError("sites must be at least 2", line);
      } else if (key == "n") {
        c.scenario.n = parse_integer<Index>(value, line);
        if (c.scenario.n < 2) throw ConfigError("n must be at least 2", line);
      }
      else if (key == "lower") c.scenario.lower = parse_real(value, line);
      else if (key == "upper") c.scenario.upper = parse_real(value, line);
      else unknown();
    } else if (section == "prior") {
      if (key == "mu_mean") c.prior.mu.mean = parse_real(value, line);
      else if (key == "mu_variance") c.prior.mu.variance = parse_real(value, line);
      else if (key == "tau_shape") c.prior.tau.shape = parse_real(value, line);
      else if (key == "tau_scale") c.prior.tau.scale = parse_real(value, line);
      else if (key == "omega_shape") c.prior.omega.shape = parse_real(value, line);
      else if (key == "omega_scale") c.prior.omega.scale = parse_real(value, line);
      else unknown();
    } else if (section == "sampler") {
      if (key == "kind") {
        c.sampler = value;
        if (std::find(sampler_names().begin(), sampler_names().end(), value) == sampler_names().end())
          throw ConfigError("unknown sampler '" + value + "'", line);
      }
      else if (key == "adjustment") c.adjustment = parse_adjustment(value);
      else if (key == "partition") c.partition = value;
      else if (key == "coordinates") c.coordinates = parse_coordinates(value);
      else if (key == "iterations") {
        c.mcmc.iterations = parse_integer<Index>(value, line);
        if (c.mcmc.iterations < 1) throw ConfigError("iterations must be positive", line);
      }
      else if (key == "burn_in") c.mcmc.burn_in = parse_integer<Index>(value, line);
      else if (key == "thinning") c.mcmc.thinning = parse_integer<Index>(value, line);
      else if (key == "refresh_every") c.mcmc.refresh_every = parse_integer<Index>(value, line);
      else if (key == "inner_max_iterations") c.mcmc.inner_max_iterations = parse_integer<int>(value, line);
      else if (key == "adapt_interval") c.mcmc.adapt_interval = parse_integer<Index>(value, line);
      else if (key == "target_low") c.mcmc.target_low = parse_real(value, line);
      else if (key == "target_high") c.mcmc.target_high = parse_real(value, line);
      else if (key == "max_consecutive_rejects") c.mcmc.max_consecutive_rejects = parse_integer<Index>(value, line);
      else unknown();
    } else if (section == "experiment") {
      if (key == "replicates") {
        c.replicates = parse_integer<Index>(value, line);
        if (c.replicates < 1) throw ConfigError("replicates must be at least 1", line);
      }
      else if (key == "seed") c.seed = parse_integer<std::uint64_t>(value, line);
      else if (key == "output") c.output = value;
      else if (key == "alphas") {
        c.alphas.clear();
        for (const auto& tok : detail::split(value, ',')) c.alphas.push_back(parse_real(detail::trim(tok), line));
      } else unknown();
    } else {
      throw ConfigError("unknown section [" + section + "]", line);
    }
  } catch (const ConfigError& e) {
    if (e.line > 0) throw;
    throw ConfigError(e.what(), line);
  }
}

// Parses on top of `base`; keys not present keep their base values.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig base = {}) {
  std::string raw, section;
  int line = 0;
  std::set<std::string> seen;
  while (std::getline(is, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find('#');
    if (hash != std::string::npos) s.erase(hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("unterminated section header", line);
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section != "scenario" && section != "prior" && section != "sampler" && section != "experiment")
        throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    if (section.empty()) throw ConfigError("key outside of any section", line);
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (!seen.insert(section + "." + key).second) throw ConfigError("duplicate key '" + key + "'", line);
    apply_setting(base, section, key, value, line);
  }
  return base;
}

inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream is(text);
  return parse_config(is, std::move(base));
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  os << "[scenario]\n"
     << "name = " << c.scenario.name << '\n'
     << "mu = " << format_double(c.scenario.mu) << '\n'
     << "tau = " << format_double(c.scenario.tau) << '\n'
     << "omega = " << format_double(c.scenario.omega) << '\n'
     << "sites = " << c.scenario.sites << '\n'
     << "n = " << c.scenario.n << '\n'
     << "lower = " << format_double(c.scenario.lower) << '\n'
     << "upper = " << format_double(c.scenario.upper) << "\n\n";
  os << "[prior]\n"
     << "mu_mean = " << format_double(c.prior.mu.mean) << '\n'
     << "mu_variance = " << format_double(c.prior.mu.variance) << '\n'
     << "tau_shape = " << format_double(c.prior.tau.shape) << '\n'
     << "tau_scale = " << format_double(c.prior.tau.scale) << '\n'
     << "omega_shape = " << format_double(c.prior.omega.shape) << '\n'
     << "omega_scale = " << format_double(c.prior.omega.scale) << "\n\n";
  os << "[sampler]\n"
     << "kind = " << c.sampler << '\n'
     << "adjustment = " << to_string(c.adjustment) << '\n'
     << "partition = " << c.partition << '\n'
     << "coordinates = " << to_string(c.coordinates) << '\n'
     << "iterations = " << c.mcmc.iterations << '\n'
     << "burn_in = " << c.mcmc.burn_in << '\n'
     << "thinning = " << c.mcmc.thinning << '\n'
     << "refresh_every = " << c.mcmc.refresh_every << '\n'
     << "inner_max_iterations = " << c.mcmc.inner_max_iterations << '\n'
     << "adapt_interval = " << c.mcmc.adapt_interval << '\n'
     << "target_low = " << format_double(c.mcmc.target_low) << '\n'
     << "target_high = " << format_double(c.mcmc.target_high) << '\n'
     << "max_consecutive_rejects = " << c.mcmc.max_consecutive_rejects << "\n\n";
  os << "[experiment]\n"
     << "replicates = " << c.replicates << '\n'
     << "seed = " << c.seed << '\n'
     << "alphas = ";
  for (std::size_t i = 0; i < c.alphas.size(); ++i) os << (i ? "," : "") << format_double(c.alphas[i]);
  os << '\n' << "output = " << c.output << '\n';
}

inline std::string config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

// Built-in scenarios: omega3 and omega15 (range 3 and 1.5, K = 20 sites
// uniform on [0, 20], n = 50, mu = 0, tau = 1), and twoblock (omega3 with
// the adaptive Gibbs sampler on blocks {mu}, {tau, omega}).
inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "omega3") {
    c.scenario.name = "omega3";
  } else if (name == "omega15") {
    c.scenario.name = "omega15";
    c.scenario.omega = 1.5;
  } else if (name == "twoblock") {
    c.scenario.name = "twoblock";
    c.sampler = "adaptive-gibbs";
    c.partition = "mu|tau,omega";
    c.replicates = 100;
  } else {
    throw ConfigError("unknown scenario '" + name + "' (expected omega3, omega15 or twoblock)");
  }
  c.output = "results/" + c.scenario.name;
  return c;
}

// 64-bit FNV-1a, used to fingerprint configs in manifests.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace cpost
