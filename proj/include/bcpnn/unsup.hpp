#ifndef BCPNN_UNSUP_HPP
#define BCPNN_UNSUP_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "kernels.hpp"
#include "mnist.hpp"
#include "plasticity.hpp"
#include "random.hpp"

namespace bcpnn {

struct UnsupConfig {
  std::size_t hidden_hc = 30;
  std::size_t hidden_mc = 100;
  std::size_t epochs = 5;
  BcpnnParams params{};       // kappa = 1: always learn
  double p_conn = 0.08;
  std::size_t rewire_period = 2000;
  std::size_t frozen_final_epochs = 1; // mask fixed during the last epochs
  std::size_t max_swaps_per_event = 0;
  double init_jitter = 0.01;  // relative jitter on the initial joint traces
  Encoding encoding{};
  TraceUpdateOptions trace_opts{};

  void validate() const {
    params.validate();
    if (hidden_hc < 1 || hidden_mc < 1) throw ConfigError("hidden layer needs at least one hypercolumn and minicolumn");
    if (rewire_period < 1) throw ConfigError("rewire period must be >= 1");
    if (!(init_jitter >= 0.0 && init_jitter < 1.0)) throw ConfigError("init jitter must lie in [0, 1)");
    if (!(p_conn > 0.0 && p_conn <= 1.0)) throw ConfigError("p_conn must lie in (0, 1]");
  }

  RewireSchedule schedule(std::size_t samples_per_epoch) const {
    RewireSchedule s;
    s.period = rewire_period;
    s.max_swaps_per_event = max_swaps_per_event;
    s.freeze_after = epochs > frozen_final_epochs ? (epochs - frozen_final_epochs) * samples_per_epoch : 0;
    return s;
  }
};

struct UnsupModel {
  LayerGeometry input_geometry;
  LayerGeometry hidden_geometry;
  Projection projection;
  BcpnnParams params;
  Encoding encoding;
  std::uint64_t seed = 0;
  std::size_t samples_seen = 0;
  std::size_t rewire_events = 0;
};

/// Marginals uniform, joint at their product times (1 + u), u ~ U(-jitter, jitter).
inline UnsupModel init_unsup_model(LayerGeometry input, const UnsupConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  UnsupModel m;
  m.input_geometry = input;
  m.hidden_geometry = LayerGeometry(cfg.hidden_hc, cfg.hidden_mc);
  m.params = cfg.params;
  m.encoding = cfg.encoding;
  m.seed = seed;

  auto traces = ProbabilityTraces::uniform(input, m.hidden_geometry, cfg.params.epsilon);
  Rng rng(derive_seed(seed, {0x6a6974746572ULL}));
  for (double& p : traces.joint_values()) {
    const double u = (2.0 * uniform01(rng) - 1.0) * cfg.init_jitter;
    p = std::clamp(p * (1.0 + u), cfg.params.epsilon, 1.0);
  }
  auto mask = init_mask(input.n_hc, m.hidden_geometry.n_hc, cfg.p_conn, derive_seed(seed, {0x6d61736bULL}));
  m.projection = Projection(std::move(traces), std::move(mask));
  return m;
}

inline ActivityVector hidden_activity(const UnsupModel& m, const ActivityVector& input) {
  return normalize(support(m.projection, input));
}

struct EpochStats {
  std::size_t epoch = 0;
  double seconds = 0.0;
  std::size_t rewire_events = 0;
  double mean_p_tgt_entropy = 0.0; // mean over hidden hypercolumns, nats
  double max_abs_weight = 0.0;     // over active pairs
};

using EpochObserver = std::function<void(const EpochStats&)>;
using RewireObserver = std::function<void(std::size_t samples_seen, const ConnectivityMask&)>;

namespace detail {

inline EpochStats trace_stats(UnsupModel& m, std::size_t epoch) {
  EpochStats st;
  st.epoch = epoch;
  st.rewire_events = m.rewire_events;
  const auto& tr = m.projection.traces();
  const auto& g = m.hidden_geometry;
  for (std::size_t h = 0; h < g.n_hc; ++h) {
    double hsum = 0.0, ent = 0.0;
    for (std::size_t k = 0; k < g.n_mc; ++k) hsum += tr.tgt(g.index(h, k));
    for (std::size_t k = 0; k < g.n_mc; ++k) {
      const double q = tr.tgt(g.index(h, k)) / hsum;
      ent -= q * std::log(q);
    }
    st.mean_p_tgt_entropy += ent / static_cast<double>(g.n_hc);
  }
  const auto& w = m.projection.materialize();
  for (double v : w.weights) st.max_abs_weight = std::max(st.max_abs_weight, std::abs(v));
  return st;
}

} // namespace detail

/// Online unsupervised learning over pre-encoded input patterns.
/// `encode(n)` returns the input activity of sample n.
template <class EncodeFn>
UnsupModel train_unsupervised_with(std::size_t n_samples, LayerGeometry input, EncodeFn&& encode,
                                   const UnsupConfig& cfg, std::uint64_t seed, const EpochObserver& observer = {},
                                   const RewireObserver& on_rewire = {}) {
  UnsupModel m = init_unsup_model(input, cfg, seed);
  const RewireSchedule sched = cfg.schedule(n_samples);
  std::vector<std::size_t> order(n_samples);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
    Rng rng(derive_seed(seed, {0x65706f6368ULL, epoch}));
    shuffle(std::span<std::size_t>(order), rng);

    for (std::size_t n : order) {
      const ActivityVector x = encode(n);
      ActivityVector y;
      try {
        y = hidden_activity(m, x);
      } catch (const ValidationError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", sample " + std::to_string(n) + ": " + e.what());
      }
      trace_step_inplace(m.projection.mutable_traces(), x, y, m.params, cfg.trace_opts);
      ++m.samples_seen;
      if (sched.fires(m.samples_seen)) {
        m.projection.set_mask(rewire(m.projection.traces(), m.projection.mask(), sched.max_swaps_per_event));
        ++m.rewire_events;
        if (on_rewire) on_rewire(m.samples_seen, m.projection.mask());
      }
    }
    if (!m.projection.traces().all_finite())
      throw NumericError("non-finite trace after epoch " + std::to_string(epoch));
    if (observer) {
      auto st = detail::trace_stats(m, epoch);
      st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      observer(st);
    }
  }
  m.projection.materialize();
  return m;
}

inline UnsupModel train_unsupervised(const Dataset& data, const UnsupConfig& cfg, std::uint64_t seed,
                                     const EpochObserver& observer = {}, const RewireObserver& on_rewire = {}) {
  data.validate();
  return train_unsupervised_with(
      data.size(), input_geometry(data.pixels_per_image()),
      [&](std::size_t n) { return encode_image(data.image(n), cfg.encoding); }, cfg, seed, observer, on_rewire);
}

inline UnsupModel train_unsupervised(std::span<const ActivityVector> patterns, const UnsupConfig& cfg,
                                     std::uint64_t seed, const EpochObserver& observer = {},
                                     const RewireObserver& on_rewire = {}) {
  if (patterns.empty()) throw DataError("no training patterns");
  return train_unsupervised_with(
      patterns.size(), patterns.front().geometry(), [&](std::size_t n) { return patterns[n]; }, cfg, seed, observer, on_rewire);
}

/// Hidden activities for a set of inputs, stored at 32-bit precision.
struct RepresentationSet {
  LayerGeometry hidden_geometry;
  std::size_t rows = 0;
  std::vector<float> values; // rows x hidden units, row-major
  Split split = Split::train;
  std::uint64_t model_fingerprint = 0;

  std::size_t cols() const noexcept { return hidden_geometry.units(); }
  std::span<const float> row(std::size_t r) const noexcept {
    return std::span<const float>(values).subspan(r * cols(), cols());
  }
  ActivityVector activity(std::size_t r) const {
    const auto src = row(r);
    return ActivityVector(hidden_geometry, std::vector<double>(src.begin(), src.end()));
  }

  friend bool operator==(const RepresentationSet&, const RepresentationSet&) = default;
};

/// Content hash of the learned state; keys representation caches.
inline std::uint64_t fingerprint(const UnsupModel& m) {
  io::Fnv1a h;
  const auto& tr = m.projection.traces();
  h.add(tr.src_values());
  h.add(tr.tgt_values());
  h.add(tr.joint_values());
  const auto bits = m.projection.mask().pack_bits();
  h.add(std::span<const unsigned char>(bits));
  h.add_value(m.encoding.mode);
  h.add_value(m.encoding.threshold);
  return h.value();
}

inline RepresentationSet extract_representations(const UnsupModel& model, const Dataset& data) {
  data.validate();
  require_same(input_geometry(data.pixels_per_image()), model.input_geometry, "extract_representations");
  RepresentationSet reps;
  reps.hidden_geometry = model.hidden_geometry;
  reps.rows = data.size();
  reps.split = data.split;
  reps.model_fingerprint = fingerprint(model);
  reps.values.resize(reps.rows * reps.cols());
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto y = hidden_activity(model, encode_image(data.image(r), model.encoding));
    auto dst = reps.values.begin() + static_cast<std::ptrdiff_t>(r * reps.cols());
    std::transform(y.values().begin(), y.values().end(), dst, [](double v) { return static_cast<float>(v); });
  }
  return reps;
}

} // namespace bcpnn

#endif
