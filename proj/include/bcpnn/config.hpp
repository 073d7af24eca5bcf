#ifndef BCPNN_CONFIG_HPP
#define BCPNN_CONFIG_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace bcpnn {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace detail

/// Parse `key = value` lines. `[section]` headers prefix following keys with
/// "section."; `#` and `;` start comments. Later duplicates win.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& origin = "config") {
  std::map<std::string, std::string> kv;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config file " + p.string());
  return parse_key_values(in, p.string());
}

/// Every ExperimentConfig parameter, addressable by dotted key.
class ConfigBinder {
public:
  explicit ConfigBinder(ExperimentConfig& cfg) {
    auto& u = cfg.unsup;
    auto& c = cfg.cls;
    path("data.mnist_dir", cfg.mnist_dir);
    bind("data.encoding", [&u](const std::string& v) { u.encoding.mode = parse_encoding(v); },
         [&u] { return to_string(u.encoding.mode); });
    real("data.threshold", u.encoding.threshold);

    count("unsup.hidden_hc", u.hidden_hc);
    count("unsup.hidden_mc", u.hidden_mc);
    count("unsup.epochs", u.epochs);
    real("unsup.dt", u.params.dt);
    real("unsup.tau_p", u.params.tau_p);
    real("unsup.kappa", u.params.kappa);
    real("unsup.epsilon", u.params.epsilon);
    real("unsup.init_jitter", u.init_jitter);
    flag("unsup.skip_small_activity", u.trace_opts.skip_small_activity);

    real("plasticity.p_conn", u.p_conn);
    count("plasticity.rewire_period", u.rewire_period);
    count("plasticity.frozen_final_epochs", u.frozen_final_epochs);
    count("plasticity.max_swaps_per_event", u.max_swaps_per_event);

    real("classifier.dt", c.params.dt);
    real("classifier.tau_p", c.params.tau_p);
    real("classifier.epsilon", c.params.epsilon);
    bind("classifier.assoc_init", [&c](const std::string& v) { c.assoc_init = parse_trace_init(v); },
         [&c] { return to_string(c.assoc_init); });
    bind("classifier.gonogo_init", [&c](const std::string& v) { c.gonogo_init = parse_trace_init(v); },
         [&c] { return to_string(c.gonogo_init); });
    count("classifier.assoc_epochs", c.assoc_epochs);
    count("classifier.gonogo_epochs", c.gonogo_epochs);

    real("linear.lr", c.linear.lr);
    real("linear.beta1", c.linear.beta1);
    real("linear.beta2", c.linear.beta2);
    real("linear.delta", c.linear.delta);
    count("linear.batch", c.linear.batch);
    count("linear.epochs", c.linear.epochs);

    counts("experiment.hidden_sizes", cfg.hidden_sizes);
    count("experiment.unsup_seeds", cfg.unsup_seeds);
    seed("experiment.unsup_seed_base", cfg.unsup_seed_base);
    count("experiment.split_seeds", cfg.split_seeds);
    seed("experiment.split_seed_base", cfg.split_seed_base);
    counts("experiment.label_grid", cfg.label_grid);
    bind("experiment.classifiers",
         [&cfg](const std::string& v) {
           cfg.classifiers.clear();
           for (const auto& s : list(v)) cfg.classifiers.push_back(parse_classifier_kind(s));
         },
         [&cfg] {
           std::string s;
           for (auto k : cfg.classifiers) s += (s.empty() ? "" : ",") + to_string(k);
           return s;
         });
    count("experiment.validation_size", cfg.validation_size);
    path("experiment.cache_dir", cfg.cache_dir);
    count("experiment.jobs", cfg.jobs);
    flag("experiment.record_wall_time", cfg.record_wall_time);
  }

  void set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
      it->second.set(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("invalid value '" + value + "' for " + key);
    }
  }

  void apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
  }

  /// `key=value` assignment as given on a command line.
  void apply_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }

  /// Fully resolved configuration, one `key = value` per line, sorted.
  std::string dump() const {
    std::string out;
    for (const auto& [k, e] : entries_) out += k + " = " + e.get() + "\n";
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [name, e] : entries_) k.push_back(name);
    return k;
  }

  static std::vector<std::string> list(const std::string& v) {
    std::vector<std::string> out;
    for (auto& f : detail::split_fields(v)) {
      auto t = detail::trim(f);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

private:
  struct Entry {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  void bind(const std::string& key, std::function<void(const std::string&)> s, std::function<std::string()> g) {
    entries_[key] = Entry{std::move(s), std::move(g)};
  }

  static std::size_t to_count(const std::string& v) {
    std::size_t pos = 0;
    if (v.empty() || v.front() == '-') throw ConfigError("expected a non-negative integer, got '" + v + "'");
    const auto n = std::stoull(v, &pos);
    if (pos != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
  }

  void count(const std::string& key, std::size_t& ref) {
    bind(key, [&ref](const std::string& v) { ref = to_count(v); }, [&ref] { return std::to_string(ref); });
  }
  void seed(const std::string& key, std::uint64_t& ref) {
    bind(key, [&ref](const std::string& v) { ref = to_count(v); }, [&ref] { return std::to_string(ref); });
  }
  void real(const std::string& key, double& ref) {
    bind(key,
         [&ref](const std::string& v) {
           std::size_t pos = 0;
           const double d = std::stod(v, &pos);
           if (pos != v.size()) throw ConfigError("expected a number, got '" + v + "'");
           ref = d;
         },
         [&ref] {
           char buf[64];
           std::snprintf(buf, sizeof buf, "%.17g", ref);
           return std::string(buf);
         });
  }
  void flag(const std::string& key, bool& ref) {
    bind(key,
         [&ref](const std::string& v) {
           if (v == "true" || v == "1" || v == "yes") ref = true;
           else if (v == "false" || v == "0" || v == "no") ref = false;
           else throw ConfigError("expected true/false, got '" + v + "'");
         },
         [&ref] { return std::string(ref ? "true" : "false"); });
  }
  void path(const std::string& key, std::filesystem::path& ref) {
    bind(key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref.string(); });
  }
  void counts(const std::string& key, std::vector<std::size_t>& ref) {
    bind(key,
         [&ref](const std::string& v) {
           ref.clear();
           for (const auto& s : list(v)) ref.push_back(to_count(s));
         },
         [&ref] {
           std::string s;
           for (auto n : ref) s += (s.empty() ? "" : ",") + std::to_string(n);
           return s;
         });
  }

  std::map<std::string, Entry> entries_;
};

} // namespace bcpnn

#endif
