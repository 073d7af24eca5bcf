// bcpnn: command-line driver for unsupervised training, classifier heads,
// the MNIST evaluation grid and result reporting.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcpnn/bcpnn.hpp"

namespace fs = std::filesystem;
using namespace bcpnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Mirrors every line to stderr and, once opened, to a log file.
class RunLog {
public:
  void open(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    file_.open(p, std::ios::trunc);
  }
  void operator()(const std::string& line) {
    std::cerr << line << '\n';
    if (file_) file_ << line << '\n' << std::flush;
  }

private:
  std::ofstream file_;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string mnist_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_data) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--set", o.overrides, "override a configuration key (key=value), repeatable");
  if (needs_data) cmd->add_option("--mnist-dir", o.mnist_dir, "directory with the MNIST IDX files (default: $BCPNN_MNIST_DIR)");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  ConfigBinder binder(cfg);
  if (!o.config_path.empty()) binder.apply(read_key_values(o.config_path));
  for (const auto& kv : o.overrides) binder.apply_assignment(kv);
  if (!o.mnist_dir.empty()) cfg.mnist_dir = o.mnist_dir;
  return cfg;
}

fs::path require_mnist_dir(const ExperimentConfig& cfg) {
  if (!cfg.mnist_dir.empty()) return cfg.mnist_dir;
  if (const char* env = std::getenv("BCPNN_MNIST_DIR"); env && *env) return env;
  throw UsageError("no MNIST directory: pass --mnist-dir, set data.mnist_dir or BCPNN_MNIST_DIR");
}

void echo_config(RunLog& log, ExperimentConfig& cfg) {
  log("# resolved configuration");
  std::istringstream in(ConfigBinder(cfg).dump());
  for (std::string line; std::getline(in, line);) log("  " + line);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw UsageError("split must be train or test");
}

// ---------------------------------------------------------------------------

int cmd_train_unsup(const CommonOptions& o, std::optional<std::size_t> hidden_hc, std::optional<std::size_t> epochs,
                    std::uint64_t seed, const fs::path& out) {
  auto cfg = resolve_config(o);
  if (hidden_hc) cfg.unsup.hidden_hc = *hidden_hc;
  if (epochs) cfg.unsup.epochs = *epochs;
  const auto dir = require_mnist_dir(cfg);

  RunLog log;
  log.open(fs::path(out).concat(".log"));
  log("bcpnn train-unsup seed=" + std::to_string(seed) + " out=" + out.string());
  echo_config(log, cfg);

  const auto train = load_mnist_dir(dir, Split::train);
  log("loaded " + std::to_string(train.size()) + " training images from " + dir.string());
  const auto model = train_unsupervised(train, cfg.unsup, seed, [&](const EpochStats& st) {
    log("epoch " + std::to_string(st.epoch) + ": " + format_double(st.seconds, 2) + " s, rewire events " +
        std::to_string(st.rewire_events) + ", mean hidden entropy " + format_double(st.mean_p_tgt_entropy, 4) +
        " nats, max |w| " + format_double(st.max_abs_weight, 4));
  });
  save_model(model, out);
  log("wrote " + out.string() + " (fingerprint " + std::to_string(fingerprint(model)) + ")");
  return kExitOk;
}

int cmd_extract(const CommonOptions& o, const fs::path& model_path, const std::string& split, const fs::path& out) {
  auto cfg = resolve_config(o);
  const auto dir = require_mnist_dir(cfg);
  const auto model = load_unsup_model(model_path);
  const auto data = load_mnist_dir(dir, parse_split(split));
  const auto reps = extract_representations(model, data);
  save_representations(reps, out);
  std::cerr << "wrote " << reps.rows << " x " << reps.cols() << " representations to " << out << '\n';
  return kExitOk;
}

int cmd_train_cls(const CommonOptions& o, const fs::path& reps_path, const std::string& kind_name, std::size_t n_labels,
                  std::uint64_t split_seed, const fs::path& out) {
  auto cfg = resolve_config(o);
  const auto dir = require_mnist_dir(cfg);
  const auto kind = parse_classifier_kind(kind_name);
  const auto reps = load_representations(reps_path);
  const auto data = load_mnist_dir(dir, reps.split);
  if (data.size() != reps.rows) throw ConsistencyError("representation rows do not match the label file");

  RunLog log;
  log.open(fs::path(out).concat(".log"));
  log("bcpnn train-cls " + kind_name + " n_labels=" + std::to_string(n_labels) + " split_seed=" + std::to_string(split_seed));
  echo_config(log, cfg);

  const auto labelled = stratified_sample(data.labels, n_labels, derive_seed(split_seed, {0x6c61626c, n_labels}));
  const auto clf = train_classifier(kind, FeatureView::of(reps), data.labels, labelled, cfg.cls,
                                    derive_seed(split_seed, {reps.model_fingerprint, n_labels, static_cast<std::uint64_t>(kind)}));
  save_model(clf, out);
  log("wrote " + out.string());
  return kExitOk;
}

int cmd_eval(const CommonOptions& o, const fs::path& model_path, const fs::path& reps_path) {
  auto cfg = resolve_config(o);
  const auto dir = require_mnist_dir(cfg);
  const auto clf = load_classifier(model_path);
  const auto reps = load_representations(reps_path);
  const auto data = load_mnist_dir(dir, reps.split);
  if (data.size() != reps.rows) throw ConsistencyError("representation rows do not match the label file");
  std::vector<std::size_t> rows(reps.rows);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto preds = predict_rows(clf, FeatureView::of(reps), rows);
  const double acc = accuracy(preds, std::span<const std::uint8_t>(data.labels));
  std::cout << to_string(clf.kind()) << " accuracy " << format_double(100.0 * acc, 2) << "% on " << rows.size()
            << " samples\n";
  return kExitOk;
}

int cmd_experiment(const CommonOptions& o, const fs::path& out_dir, bool resume, std::optional<std::size_t> jobs) {
  auto cfg = resolve_config(o);
  if (jobs) cfg.jobs = *jobs;
  cfg.resume = resume;
  if (cfg.cache_dir.empty()) cfg.cache_dir = out_dir / "cache";
  const auto dir = require_mnist_dir(cfg);
  fs::create_directories(out_dir);

  RunLog log;
  log.open(out_dir / "run.log");
  log("bcpnn experiment out-dir=" + out_dir.string() + (resume ? " --resume" : ""));
  echo_config(log, cfg);

  const auto train = load_mnist_dir(dir, Split::train);
  log("loaded " + std::to_string(train.size()) + " training images from " + dir.string());

  const auto results_path = out_dir / "results.csv";
  ExperimentHooks hooks;
  hooks.log = [&](const std::string& s) { log(s); };
  hooks.flush = [&](const ExperimentResult& r) { write_text(results_path, to_csv(r.records)); };
  const auto result = run_experiment(cfg, train, hooks);

  write_text(results_path, to_csv(result.records));
  if (!result.failures.empty()) write_text(out_dir / "failures.csv", failures_csv(result.failures));
  else fs::remove(out_dir / "failures.csv");

  if (!result.records.empty()) {
    const auto stats = aggregate(result.records);
    const auto table = markdown_table(stats);
    write_text(out_dir / "table.md", table);
    write_curves(stats, out_dir / "curves");
    std::cout << table;
  }
  log("wrote " + results_path.string() + " (" + std::to_string(result.records.size()) + " records, " +
      std::to_string(result.failures.size()) + " failed cells)");
  return result.failures.empty() ? kExitOk : kExitRuntime;
}

int cmd_report(const fs::path& in, const fs::path& out_table, const fs::path& out_curves) {
  std::vector<ExperimentRecord> recs;
  try {
    recs = read_results_csv(in);
  } catch (const FormatError& e) {
    throw UsageError(in.string() + ": schema error: " + e.what());
  }
  if (recs.empty()) throw UsageError(in.string() + ": no records (header only)");
  const auto stats = aggregate(recs);
  const auto table = markdown_table(stats);
  if (!out_table.empty()) write_text(out_table, table);
  if (!out_curves.empty())
    for (const auto& p : write_curves(stats, out_curves)) std::cerr << "wrote " << p.string() << '\n';
  std::cout << table;
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"BCPNN semi-supervised learning toolkit"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* tu = app.add_subcommand("train-unsup", "unsupervised training of the input-to-hidden projection");
  add_common(tu, common, true);
  std::optional<std::size_t> hidden_hc, epochs;
  std::uint64_t seed = 0;
  std::string out;
  tu->add_option("--hidden-hc", hidden_hc, "hidden hypercolumns");
  tu->add_option("--epochs", epochs, "unsupervised epochs");
  tu->add_option("--seed", seed, "random seed");
  tu->add_option("--out", out, "model file to write")->required();

  auto* ex = app.add_subcommand("extract", "write hidden representations of a data split");
  add_common(ex, common, true);
  std::string model_path, split = "train", reps_out;
  ex->add_option("--model", model_path, "unsupervised model file")->required();
  ex->add_option("--split", split, "train or test");
  ex->add_option("--out", reps_out, "representation file to write")->required();

  auto* tc = app.add_subcommand("train-cls", "train one classifier head on cached representations");
  add_common(tc, common, true);
  std::string reps_in, kind = "assoc", cls_out;
  std::size_t n_labels = 100;
  std::uint64_t split_seed = 0;
  tc->add_option("--reps", reps_in, "representation file")->required();
  tc->add_option("--classifier", kind, "assoc|go|nogo|gonogo|linear");
  tc->add_option("--n-labels", n_labels, "labelled samples (multiple of 10)");
  tc->add_option("--split-seed", split_seed, "seed of the labelled subset");
  tc->add_option("--out", cls_out, "classifier file to write")->required();

  auto* ev = app.add_subcommand("eval", "accuracy of a classifier on a representation file");
  add_common(ev, common, true);
  std::string eval_model, eval_reps;
  ev->add_option("--model", eval_model, "classifier file")->required();
  ev->add_option("--reps", eval_reps, "representation file")->required();

  auto* xp = app.add_subcommand("experiment", "run the full evaluation grid");
  add_common(xp, common, true);
  std::string out_dir;
  bool resume = false;
  std::optional<std::size_t> jobs;
  xp->add_option("--out-dir", out_dir, "output directory")->required();
  xp->add_flag("--resume", resume, "reuse cached unsupervised models and representations");
  xp->add_option("--jobs", jobs, "worker threads for classifier cells");

  auto* rp = app.add_subcommand("report", "aggregate a results CSV into a table and curves");
  std::string report_in, out_table, out_curves;
  rp->add_option("--in", report_in, "results.csv")->required();
  rp->add_option("--out-table", out_table, "Markdown table to write");
  rp->add_option("--out-curves", out_curves, "directory for curve CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (tu->parsed()) return cmd_train_unsup(common, hidden_hc, epochs, seed, out);
    if (ex->parsed()) return cmd_extract(common, model_path, split, reps_out);
    if (tc->parsed()) return cmd_train_cls(common, reps_in, kind, n_labels, split_seed, cls_out);
    if (ev->parsed()) return cmd_eval(common, eval_model, eval_reps);
    if (xp->parsed()) return cmd_experiment(common, out_dir, resume, jobs);
    if (rp->parsed()) return cmd_report(report_in, out_table, out_curves);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
