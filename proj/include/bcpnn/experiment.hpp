#ifndef BCPNN_EXPERIMENT_HPP
#define BCPNN_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "classifiers.hpp"
#include "mnist.hpp"
#include "persist.hpp"
#include "unsup.hpp"

namespace bcpnn {

struct ExperimentConfig {
  std::filesystem::path mnist_dir;
  std::vector<std::size_t> hidden_sizes{30, 100, 200};
  std::size_t unsup_seeds = 5;
  std::uint64_t unsup_seed_base = 0;
  std::size_t split_seeds = 5;
  std::uint64_t split_seed_base = 0;
  std::vector<std::size_t> label_grid{10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000};
  std::vector<ClassifierKind> classifiers{ClassifierKind::assoc, ClassifierKind::go, ClassifierKind::nogo,
                                          ClassifierKind::gonogo, ClassifierKind::linear};
  std::size_t validation_size = 10000;
  UnsupConfig unsup{};
  ClassifierConfig cls{};
  std::filesystem::path cache_dir;   // empty: no caching
  bool resume = false;               // reuse cached models/representations
  std::size_t jobs = 1;
  bool record_wall_time = false;     // false writes 0

  void validate(std::size_t n_train) const {
    unsup.validate();
    cls.params.validate();
    if (hidden_sizes.empty() || label_grid.empty() || classifiers.empty())
      throw ConfigError("experiment grid has an empty axis");
    if (unsup_seeds == 0 || split_seeds == 0) throw ConfigError("need at least one unsupervised and one split seed");
    for (auto n : label_grid) {
      if (n == 0 || n % kNumClasses != 0) throw ConfigError("label count " + std::to_string(n) + " is not a positive multiple of 10");
      if (n > n_train) throw ConfigError("label count " + std::to_string(n) + " exceeds the training split");
      if (n + validation_size > n_train)
        throw ConfigError("label count " + std::to_string(n) + " leaves fewer than " + std::to_string(validation_size) +
                          " validation samples");
    }
  }
};

struct ExperimentRecord {
  std::string run_id;
  std::uint64_t unsup_seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t n_hc_hid = 0;
  ClassifierKind classifier = ClassifierKind::assoc;
  std::size_t n_labels = 0;
  std::size_t epochs = 0;
  EncodingMode encoding = EncodingMode::binary;
  double accuracy = 0.0;
  double wall_time_s = 0.0;

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

struct CellFailure {
  std::string run_id;
  ClassifierKind classifier = ClassifierKind::assoc;
  std::size_t n_labels = 0;
  std::string error_class;
  std::string message;
};

struct ExperimentResult {
  std::vector<ExperimentRecord> records;
  std::vector<CellFailure> failures;
};

inline double accuracy(std::span<const std::size_t> preds, std::span<const std::uint8_t> labels) {
  if (preds.empty()) throw ValidationError("accuracy of an empty prediction set");
  if (preds.size() != labels.size()) throw DimensionError("accuracy: prediction and label counts differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

inline double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.empty()) throw ValidationError("accuracy of an empty prediction set");
  if (preds.size() != labels.size()) throw DimensionError("accuracy: prediction and label counts differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Results CSV

inline constexpr const char* kResultsHeader =
    "run_id,unsup_seed,split_seed,n_hc_hid,classifier,n_labels,epochs,encoding,accuracy,wall_time_s";

inline std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string to_csv(const std::vector<ExperimentRecord>& recs) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : recs) {
    out += r.run_id + "," + std::to_string(r.unsup_seed) + "," + std::to_string(r.split_seed) + "," +
           std::to_string(r.n_hc_hid) + "," + to_string(r.classifier) + "," + std::to_string(r.n_labels) + "," +
           std::to_string(r.epochs) + "," + to_string(r.encoding) + "," + format_double(r.accuracy, 6) + "," +
           format_double(r.wall_time_s, 3) + "\n";
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      f.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  f.push_back(cur);
  return f;
}

template <class T>
T parse_number(const std::string& s, std::size_t line, const char* field) {
  try {
    std::size_t pos = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) v = static_cast<T>(std::stod(s, &pos));
    else v = static_cast<T>(std::stoull(s, &pos));
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
}

} // namespace detail

inline std::vector<ExperimentRecord> parse_results_csv(std::istream& in) {
  std::vector<ExperimentRecord> recs;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw FormatError("line 1: missing header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw FormatError("line 1: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 10)
      throw FormatError("line " + std::to_string(lineno) + ": expected 10 fields, found " + std::to_string(f.size()));
    ExperimentRecord r;
    r.run_id = f[0];
    r.unsup_seed = detail::parse_number<std::uint64_t>(f[1], lineno, "unsup_seed");
    r.split_seed = detail::parse_number<std::uint64_t>(f[2], lineno, "split_seed");
    r.n_hc_hid = detail::parse_number<std::size_t>(f[3], lineno, "n_hc_hid");
    try {
      r.classifier = parse_classifier_kind(f[4]);
      r.encoding = parse_encoding(f[7]);
    } catch (const ConfigError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    r.n_labels = detail::parse_number<std::size_t>(f[5], lineno, "n_labels");
    r.epochs = detail::parse_number<std::size_t>(f[6], lineno, "epochs");
    r.accuracy = detail::parse_number<double>(f[8], lineno, "accuracy");
    r.wall_time_s = detail::parse_number<double>(f[9], lineno, "wall_time_s");
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0))
      throw FormatError("line " + std::to_string(lineno) + ": accuracy outside [0,1]");
    recs.push_back(std::move(r));
  }
  return recs;
}

inline std::vector<ExperimentRecord> read_results_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return parse_results_csv(in);
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  io::write_all(p, std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Aggregation

struct GroupStat {
  std::size_t n_hc_hid = 0;
  ClassifierKind classifier = ClassifierKind::assoc;
  std::size_t n_labels = 0;
  std::size_t count = 0;
  double mean_pct = 0.0;
  double sd_pct = 0.0;   // sample s.d. (n-1); 0 for single-record groups
  double min_pct = 0.0;
  double max_pct = 0.0;
  bool degenerate = false;
};

/// Groups by (hidden size, classifier, label count), ordered by those keys.
inline std::vector<GroupStat> aggregate(const std::vector<ExperimentRecord>& recs) {
  if (recs.empty()) throw ValidationError("aggregate: no records");
  std::map<std::tuple<std::size_t, int, std::size_t>, std::vector<double>> groups;
  for (const auto& r : recs)
    groups[{r.n_hc_hid, static_cast<int>(r.classifier), r.n_labels}].push_back(100.0 * r.accuracy);

  std::vector<GroupStat> out;
  for (const auto& [key, acc] : groups) {
    GroupStat g;
    g.n_hc_hid = std::get<0>(key);
    g.classifier = static_cast<ClassifierKind>(std::get<1>(key));
    g.n_labels = std::get<2>(key);
    g.count = acc.size();
    double sum = 0.0;
    for (double a : acc) sum += a;
    g.mean_pct = sum / static_cast<double>(acc.size());
    g.min_pct = *std::min_element(acc.begin(), acc.end());
    g.max_pct = *std::max_element(acc.begin(), acc.end());
    if (acc.size() > 1) {
      double ss = 0.0;
      for (double a : acc) ss += (a - g.mean_pct) * (a - g.mean_pct);
      g.sd_pct = std::sqrt(ss / static_cast<double>(acc.size() - 1));
    } else {
      g.degenerate = true;
    }
    out.push_back(g);
  }
  return out;
}

inline std::string table_label(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::assoc: return "BCPNN + Assoc.";
    case ClassifierKind::go: return "BCPNN + Go";
    case ClassifierKind::nogo: return "BCPNN + No-go";
    case ClassifierKind::gonogo: return "BCPNN + Go/No-go";
    case ClassifierKind::linear: return "BCPNN + Linear";
  }
  return "?";
}

inline const std::vector<std::size_t>& table_columns() {
  static const std::vector<std::size_t> cols{10, 100, 1000, 10000, 50000};
  return cols;
}

/// Markdown table: one row per (hidden size, classifier), label counts as
/// columns. Single-record cells carry a dagger.
inline std::string markdown_table(const std::vector<GroupStat>& stats,
                                  const std::vector<std::size_t>& columns = table_columns()) {
  std::ostringstream os;
  os << "| Model | n_HC |";
  for (auto c : columns) os << ' ' << c << " |";
  os << "\n|---|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) os << "---|";
  os << '\n';

  std::map<std::pair<std::size_t, int>, std::map<std::size_t, const GroupStat*>> rows;
  for (const auto& g : stats) rows[{g.n_hc_hid, static_cast<int>(g.classifier)}][g.n_labels] = &g;
  bool any_degenerate = false;
  for (const auto& [key, cells] : rows) {
    os << "| " << table_label(static_cast<ClassifierKind>(key.second)) << " | " << key.first << " |";
    for (auto c : columns) {
      auto it = cells.find(c);
      if (it == cells.end()) {
        os << " - |";
        continue;
      }
      os << ' ' << format_double(it->second->mean_pct, 1) << "±" << format_double(it->second->sd_pct, 1);
      if (it->second->degenerate) {
        os << "†";
        any_degenerate = true;
      }
      os << " |";
    }
    os << '\n';
  }
  if (any_degenerate) os << "\n† single run: standard deviation undefined, reported as 0.\n";
  return os.str();
}

/// Curve CSV for one (hidden size, classifier), ascending label counts.
inline std::string curve_csv(const std::vector<GroupStat>& stats, std::size_t n_hc, ClassifierKind kind) {
  std::vector<const GroupStat*> pts;
  for (const auto& g : stats)
    if (g.n_hc_hid == n_hc && g.classifier == kind) pts.push_back(&g);
  std::sort(pts.begin(), pts.end(), [](auto a, auto b) { return a->n_labels < b->n_labels; });
  std::string out = "classifier,n_labels,mean_pct,sd_pct\n";
  for (auto* g : pts)
    out += to_string(kind) + "," + std::to_string(g->n_labels) + "," + format_double(g->mean_pct, 4) + "," +
           format_double(g->sd_pct, 4) + "\n";
  return out;
}

/// Writes curve_h<n_hc>_<classifier>.csv for every group present.
inline std::vector<std::filesystem::path> write_curves(const std::vector<GroupStat>& stats, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::pair<std::size_t, int>, bool> seen;
  std::vector<std::filesystem::path> written;
  for (const auto& g : stats) {
    if (seen[{g.n_hc_hid, static_cast<int>(g.classifier)}]) continue;
    seen[{g.n_hc_hid, static_cast<int>(g.classifier)}] = true;
    const auto p = dir / ("curve_h" + std::to_string(g.n_hc_hid) + "_" + to_string(g.classifier) + ".csv");
    write_text(p, curve_csv(stats, g.n_hc_hid, g.classifier));
    written.push_back(p);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Protocol runner

inline std::string error_class(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e)) return "config";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const LengthError*>(&e) ||
      dynamic_cast<const DataError*>(&e) || dynamic_cast<const ConsistencyError*>(&e))
    return "data";
  return "runtime";
}

/// Hash of everything that determines one unsupervised model.
inline std::uint64_t unsup_cache_key(const UnsupConfig& u, const Dataset& train, std::uint64_t seed) {
  io::Fnv1a h;
  h.add_value(u.hidden_hc);
  h.add_value(u.hidden_mc);
  h.add_value(u.epochs);
  h.add_value(u.params.dt);
  h.add_value(u.params.tau_p);
  h.add_value(u.params.kappa);
  h.add_value(u.params.epsilon);
  h.add_value(u.p_conn);
  h.add_value(u.rewire_period);
  h.add_value(u.frozen_final_epochs);
  h.add_value(u.max_swaps_per_event);
  h.add_value(u.init_jitter);
  h.add_value(u.encoding.mode);
  h.add_value(u.encoding.threshold);
  h.add_value(u.trace_opts.skip_small_activity);
  h.add_value(seed);
  h.add(std::span<const std::uint8_t>(train.pixels));
  h.add(std::span<const std::uint8_t>(train.labels));
  return h.value();
}

struct ExperimentHooks {
  std::function<void(const std::string&)> log;
  /// Called after each (hidden size, unsup seed) block with all records so far.
  std::function<void(const ExperimentResult&)> flush;
};

inline std::string run_id(std::size_t n_hc, std::uint64_t unsup_seed, std::uint64_t split_seed) {
  return "h" + std::to_string(n_hc) + "-u" + std::to_string(unsup_seed) + "-s" + std::to_string(split_seed);
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

} // namespace detail

/// Labelled and validation rows of one grid cell.
struct SplitIndices {
  std::vector<std::size_t> labelled;
  std::vector<std::size_t> validation;
};

/// The validation permutation is fixed per (unsup seed, split seed); only
/// the labelled rows of this label count are removed from it.
inline SplitIndices make_split(std::span<const std::uint8_t> labels, std::size_t n_labels, std::size_t validation_size,
                               std::uint64_t unsup_seed, std::uint64_t split_seed) {
  SplitIndices s;
  s.labelled = stratified_sample(labels, n_labels, derive_seed(split_seed, {0x6c61626c, n_labels}));
  s.validation = sample_excluding(labels.size(), s.labelled, validation_size, derive_seed(split_seed, {0x76616c, unsup_seed}));
  return s;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& train, const ExperimentHooks& hooks = {}) {
  train.validate();
  cfg.validate(train.size());
  auto log = [&](const std::string& s) {
    if (hooks.log) hooks.log(s);
  };

  ExperimentResult result;
  for (std::size_t n_hc : cfg.hidden_sizes) {
    for (std::size_t us = 0; us < cfg.unsup_seeds; ++us) {
      const std::uint64_t unsup_seed = cfg.unsup_seed_base + us;
      UnsupConfig ucfg = cfg.unsup;
      ucfg.hidden_hc = n_hc;

      // unsupervised model and representations, cached by content key
      std::optional<RepresentationSet> reps;
      std::filesystem::path model_path, rep_path;
      if (!cfg.cache_dir.empty()) {
        std::filesystem::create_directories(cfg.cache_dir);
        char key[32];
        std::snprintf(key, sizeof key, "%016llx", static_cast<unsigned long long>(unsup_cache_key(ucfg, train, unsup_seed)));
        const std::string stem = "h" + std::to_string(n_hc) + "_u" + std::to_string(unsup_seed) + "_" + key;
        model_path = cfg.cache_dir / (stem + ".bcp1");
        rep_path = cfg.cache_dir / (stem + ".brep");
        if (cfg.resume && std::filesystem::exists(model_path) && std::filesystem::exists(rep_path)) {
          try {
            auto cached = load_representations(rep_path);
            if (cached.rows == train.size() && cached.hidden_geometry == LayerGeometry(n_hc, ucfg.hidden_mc)) {
              reps = std::move(cached);
              log("cache hit: " + rep_path.string() + " (skipping unsupervised training)");
            }
          } catch (const Error& e) {
            log(std::string("cache unreadable, retraining: ") + e.what());
          }
        }
      }
      if (!reps) {
        log("training unsupervised model n_hc=" + std::to_string(n_hc) + " seed=" + std::to_string(unsup_seed));
        const auto model = train_unsupervised(train, ucfg, unsup_seed, [&](const EpochStats& st) {
          log("  epoch " + std::to_string(st.epoch) + ": " + format_double(st.seconds, 1) + " s, rewire events " +
              std::to_string(st.rewire_events) + ", mean hidden entropy " + format_double(st.mean_p_tgt_entropy, 4) +
              ", max |w| " + format_double(st.max_abs_weight, 3));
        });
        reps = extract_representations(model, train);
        if (!model_path.empty()) {
          save_model(model, model_path);
          save_representations(*reps, rep_path);
        }
      }

      const FeatureView x = FeatureView::of(*reps);
      struct Cell {
        std::size_t split_idx, n_labels;
        ClassifierKind kind;
      };
      std::vector<Cell> cells;
      for (std::size_t sp = 0; sp < cfg.split_seeds; ++sp)
        for (auto n : cfg.label_grid)
          for (auto k : cfg.classifiers) cells.push_back({sp, n, k});

      std::vector<std::optional<ExperimentRecord>> recs(cells.size());
      std::vector<std::optional<CellFailure>> fails(cells.size());
      detail::parallel_for(cells.size(), cfg.jobs, [&](std::size_t c) {
        const auto& cell = cells[c];
        const std::uint64_t split_seed = cfg.split_seed_base + cell.split_idx;
        const auto id = run_id(n_hc, unsup_seed, split_seed);
        try {
          const auto t0 = std::chrono::steady_clock::now();
          const auto split = make_split(train.labels, cell.n_labels, cfg.validation_size, unsup_seed, split_seed);
          const auto clf = train_classifier(cell.kind, x, train.labels, split.labelled, cfg.cls,
                                            derive_seed(split_seed, {unsup_seed, cell.n_labels, static_cast<std::uint64_t>(cell.kind)}));
          const auto preds = predict_rows(clf, x, split.validation);
          std::vector<std::uint8_t> truth;
          truth.reserve(split.validation.size());
          for (auto r : split.validation) truth.push_back(train.labels[r]);
          ExperimentRecord rec;
          rec.run_id = id;
          rec.unsup_seed = unsup_seed;
          rec.split_seed = split_seed;
          rec.n_hc_hid = n_hc;
          rec.classifier = cell.kind;
          rec.n_labels = cell.n_labels;
          rec.epochs = cfg.cls.epochs_for(cell.kind);
          rec.encoding = ucfg.encoding.mode;
          rec.accuracy = accuracy(preds, truth);
          if (cfg.record_wall_time)
            rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          recs[c] = rec;
        } catch (const std::exception& e) {
          fails[c] = CellFailure{id, cell.kind, cell.n_labels, error_class(e), e.what()};
        }
      });
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (recs[c]) {
          log("  " + recs[c]->run_id + " " + to_string(recs[c]->classifier) + " n=" + std::to_string(recs[c]->n_labels) +
              " acc=" + format_double(100.0 * recs[c]->accuracy, 2) + "%");
          result.records.push_back(std::move(*recs[c]));
        }
        if (fails[c]) {
          log("  FAILED " + fails[c]->run_id + " " + to_string(fails[c]->classifier) + ": " + fails[c]->message);
          result.failures.push_back(std::move(*fails[c]));
        }
      }
      if (hooks.flush) hooks.flush(result);
    }
  }
  return result;
}

inline std::string failures_csv(const std::vector<CellFailure>& fails) {
  std::string out = "run_id,classifier,n_labels,error_class,message\n";
  for (const auto& f : fails) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out += f.run_id + "," + to_string(f.classifier) + "," + std::to_string(f.n_labels) + "," + f.error_class + "," + msg + "\n";
  }
  return out;
}

} // namespace bcpnn

#endif
