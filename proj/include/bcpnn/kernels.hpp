#ifndef BCPNN_KERNELS_HPP
#define BCPNN_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "connectivity.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace bcpnn {

struct BcpnnParams {
  double dt = 0.01;
  double tau_p = 60.0;
  double kappa = 1.0;
  double epsilon = 1e-8;

  /// Euler rate of one trace update.
  double rate() const noexcept { return kappa * dt / tau_p; }

  void validate() const {
    if (!(dt > 0.0) || !(tau_p > 0.0) || !(dt / tau_p < 1.0))
      throw ParameterError("need 0 < dt/tau_p < 1 (dt=" + std::to_string(dt) + ", tau_p=" + std::to_string(tau_p) + ")");
    if (!(kappa >= 0.0 && kappa <= 1.0))
      throw ParameterError("kappa must lie in [0,1], got " + std::to_string(kappa));
    if (!(epsilon > 0.0 && epsilon <= 1e-3))
      throw ParameterError("epsilon must lie in (0, 1e-3], got " + std::to_string(epsilon));
  }

  BcpnnParams with_kappa(double k) const {
    BcpnnParams p = *this;
    p.kappa = k;
    return p;
  }

  friend bool operator==(const BcpnnParams&, const BcpnnParams&) = default;
};

/// Marginal and joint probability traces of one projection. Joint entries
/// are stored target-major: all sources of target unit j are contiguous.
class ProbabilityTraces {
public:
  ProbabilityTraces() = default;

  ProbabilityTraces(LayerGeometry src, LayerGeometry tgt, double epsilon, double fill)
      : src_(src), tgt_(tgt), epsilon_(epsilon),
        p_src_(src.units(), fill), p_tgt_(tgt.units(), fill), p_joint_(src.units() * tgt.units(), fill) {}

  /// Marginals at 1/n_mc of their layer and joint at their product.
  static ProbabilityTraces uniform(LayerGeometry src, LayerGeometry tgt, double epsilon) {
    ProbabilityTraces t(src, tgt, epsilon, 0.0);
    std::fill(t.p_src_.begin(), t.p_src_.end(), 1.0 / static_cast<double>(src.n_mc));
    std::fill(t.p_tgt_.begin(), t.p_tgt_.end(), 1.0 / static_cast<double>(tgt.n_mc));
    std::fill(t.p_joint_.begin(), t.p_joint_.end(),
              (1.0 / static_cast<double>(src.n_mc)) * (1.0 / static_cast<double>(tgt.n_mc)));
    return t;
  }

  /// Every trace at the floor epsilon ("count mode").
  static ProbabilityTraces at_floor(LayerGeometry src, LayerGeometry tgt, double epsilon) {
    return ProbabilityTraces(src, tgt, epsilon, epsilon);
  }

  const LayerGeometry& src_geometry() const noexcept { return src_; }
  const LayerGeometry& tgt_geometry() const noexcept { return tgt_; }
  double epsilon() const noexcept { return epsilon_; }

  std::size_t n_src() const noexcept { return p_src_.size(); }
  std::size_t n_tgt() const noexcept { return p_tgt_.size(); }

  double src(std::size_t i) const noexcept { return p_src_[i]; }
  double tgt(std::size_t j) const noexcept { return p_tgt_[j]; }
  double joint(std::size_t i, std::size_t j) const noexcept { return p_joint_[j * p_src_.size() + i]; }
  double& src(std::size_t i) noexcept { return p_src_[i]; }
  double& tgt(std::size_t j) noexcept { return p_tgt_[j]; }
  double& joint(std::size_t i, std::size_t j) noexcept { return p_joint_[j * p_src_.size() + i]; }

  std::span<const double> src_values() const noexcept { return p_src_; }
  std::span<const double> tgt_values() const noexcept { return p_tgt_; }
  std::span<const double> joint_values() const noexcept { return p_joint_; }
  std::span<double> src_values() noexcept { return p_src_; }
  std::span<double> tgt_values() noexcept { return p_tgt_; }
  std::span<double> joint_values() noexcept { return p_joint_; }

  /// All source entries for target unit j.
  std::span<const double> joint_column(std::size_t j) const noexcept {
    return std::span<const double>(p_joint_).subspan(j * p_src_.size(), p_src_.size());
  }
  std::span<double> joint_column(std::size_t j) noexcept {
    return std::span<double>(p_joint_).subspan(j * p_src_.size(), p_src_.size());
  }

  void validate() const {
    auto check = [&](std::span<const double> v, const char* name) {
      for (double x : v)
        if (!std::isfinite(x) || x < epsilon_ || x > 1.0)
          throw ValidationError(std::string(name) + " trace " + std::to_string(x) + " outside [epsilon, 1]");
    };
    check(p_src_, "source");
    check(p_tgt_, "target");
    check(p_joint_, "joint");
  }

  bool all_finite() const noexcept {
    auto fin = [](std::span<const double> v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return fin(p_src_) && fin(p_tgt_) && fin(p_joint_);
  }

  friend bool operator==(const ProbabilityTraces&, const ProbabilityTraces&) = default;

private:
  LayerGeometry src_{};
  LayerGeometry tgt_{};
  double epsilon_ = 1e-8;
  std::vector<double> p_src_;
  std::vector<double> p_tgt_;
  std::vector<double> p_joint_;
};

/// w(i,j) from the traces, in log-difference form shared by every code path.
inline double log_odds_weight(double p_joint, double log_p_src, double log_p_tgt) noexcept {
  return std::log(p_joint) - log_p_src - log_p_tgt;
}

/// Materialized bias (per target unit) and weights (target-major, like the
/// joint traces). Weights of inactive hypercolumn pairs are zero.
struct WeightSet {
  std::vector<double> bias;
  std::vector<double> weights;
  std::size_t n_src = 0;

  double weight(std::size_t i, std::size_t j) const noexcept { return weights[j * n_src + i]; }

  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

inline WeightSet derive_weights(const ProbabilityTraces& traces, const ConnectivityMask& mask) {
  const auto& sg = traces.src_geometry();
  const auto& tg = traces.tgt_geometry();
  if (mask.n_src_hc() != sg.n_hc || mask.n_tgt_hc() != tg.n_hc)
    throw DimensionError("derive_weights: mask shape does not match trace geometry");

  WeightSet out;
  out.n_src = traces.n_src();
  out.bias.resize(traces.n_tgt());
  out.weights.assign(traces.n_src() * traces.n_tgt(), 0.0);

  std::vector<double> log_src(traces.n_src());
  for (std::size_t i = 0; i < log_src.size(); ++i) log_src[i] = std::log(traces.src(i));

  for (std::size_t j = 0; j < traces.n_tgt(); ++j) {
    const double log_tgt = std::log(traces.tgt(j));
    out.bias[j] = log_tgt;
    const auto col = traces.joint_column(j);
    double* w = out.weights.data() + j * out.n_src;
    for (std::size_t g : mask.sources(tg.hc_of(j)))
      for (std::size_t i = g * sg.n_mc; i < (g + 1) * sg.n_mc; ++i)
        w[i] = log_odds_weight(col[i], log_src[i], log_tgt);
  }
  return out;
}

/// A learnable connection: traces gated by a hypercolumn-level mask.
/// Weights are computed from the traces on demand; materialize() caches
/// them until the traces or mask change.
class Projection {
public:
  Projection() = default;
  Projection(ProbabilityTraces traces, ConnectivityMask mask) : traces_(std::move(traces)), mask_(std::move(mask)) {
    if (mask_.n_src_hc() != traces_.src_geometry().n_hc || mask_.n_tgt_hc() != traces_.tgt_geometry().n_hc)
      throw DimensionError("projection: mask shape does not match trace geometry");
  }

  const ProbabilityTraces& traces() const noexcept { return traces_; }
  const ConnectivityMask& mask() const noexcept { return mask_; }
  const LayerGeometry& src_geometry() const noexcept { return traces_.src_geometry(); }
  const LayerGeometry& tgt_geometry() const noexcept { return traces_.tgt_geometry(); }

  ProbabilityTraces& mutable_traces() noexcept {
    cached_.reset();
    return traces_;
  }
  void set_mask(ConnectivityMask m) {
    if (m.n_src_hc() != mask_.n_src_hc() || m.n_tgt_hc() != mask_.n_tgt_hc())
      throw DimensionError("projection: replacement mask has a different shape");
    mask_ = std::move(m);
    cached_.reset();
  }

  const WeightSet& materialize() {
    if (!cached_) cached_ = derive_weights(traces_, mask_);
    return *cached_;
  }
  const WeightSet* materialized() const noexcept { return cached_ ? &*cached_ : nullptr; }

  /// Used when loading persisted weights alongside the traces they came from.
  void adopt_weights(WeightSet w) {
    if (w.bias.size() != traces_.n_tgt() || w.weights.size() != traces_.n_src() * traces_.n_tgt())
      throw DimensionError("projection: persisted weights have the wrong shape");
    cached_ = std::move(w);
  }

  friend bool operator==(const Projection& a, const Projection& b) {
    return a.traces_ == b.traces_ && a.mask_ == b.mask_;
  }

private:
  ProbabilityTraces traces_;
  ConnectivityMask mask_;
  std::optional<WeightSet> cached_;
};

namespace detail {

inline void check_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw ValidationError(std::string(what) + ": non-finite value at unit " + std::to_string(i));
}

} // namespace detail

/// s(y_j) = b(y_j) + sum_i pi(x_i) w(x_i, y_j) over sources whose
/// hypercolumn is connected to y_j's hypercolumn.
inline SupportVector support(const Projection& proj, const ActivityVector& act_src) {
  require_same(act_src.geometry(), proj.src_geometry(), "support");
  detail::check_finite(act_src.values(), "support");

  const auto& tr = proj.traces();
  const auto& sg = proj.src_geometry();
  const auto& tg = proj.tgt_geometry();
  const auto& mask = proj.mask();
  const auto x = act_src.values();
  SupportVector s(tg);

  if (const WeightSet* ws = proj.materialized()) {
    for (std::size_t j = 0; j < tr.n_tgt(); ++j) {
      const double* w = ws->weights.data() + j * ws->n_src;
      double acc = 0.0;
      for (std::size_t g : mask.sources(tg.hc_of(j)))
        for (std::size_t i = g * sg.n_mc; i < (g + 1) * sg.n_mc; ++i)
          if (x[i] != 0.0) acc += x[i] * w[i];
      s[j] = ws->bias[j] + acc;
    }
  } else {
    // exact zeros are skipped along with their logarithms
    std::vector<double> log_src(tr.n_src());
    for (std::size_t i = 0; i < log_src.size(); ++i)
      if (x[i] != 0.0) log_src[i] = std::log(tr.src(i));
    for (std::size_t j = 0; j < tr.n_tgt(); ++j) {
      const double log_tgt = std::log(tr.tgt(j));
      const auto col = tr.joint_column(j);
      double acc = 0.0;
      for (std::size_t g : mask.sources(tg.hc_of(j)))
        for (std::size_t i = g * sg.n_mc; i < (g + 1) * sg.n_mc; ++i)
          if (x[i] != 0.0) acc += x[i] * log_odds_weight(col[i], log_src[i], log_tgt);
      s[j] = log_tgt + acc;
    }
  }
  detail::check_finite(s.values(), "support output");
  return s;
}

/// Softmax within each hypercolumn, shifted by the hypercolumn maximum.
inline ActivityVector normalize(const SupportVector& s) {
  detail::check_finite(s.values(), "normalize");
  const auto& g = s.geometry();
  ActivityVector a(g);
  for (std::size_t h = 0; h < g.n_hc; ++h) {
    const auto in = s.hypercolumn(h);
    auto out = a.hypercolumn(h);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      out[k] = std::exp(in[k] - mx);
      sum += out[k];
    }
    for (double& v : out) v /= sum;
  }
  return a;
}

struct TraceUpdateOptions {
  /// Treat activities below 1e-12 as exactly zero in the joint update.
  bool skip_small_activity = false;
};

/// One forward-Euler step of the trace dynamics, in place.
inline void trace_step_inplace(ProbabilityTraces& tr, const ActivityVector& act_src, const ActivityVector& act_tgt,
                               const BcpnnParams& params, TraceUpdateOptions opts = {}) {
  require_same(act_src.geometry(), tr.src_geometry(), "trace_step source");
  require_same(act_tgt.geometry(), tr.tgt_geometry(), "trace_step target");
  const double lambda = params.rate();
  if (!(lambda < 1.0)) throw ParameterError("trace_step: rate kappa*dt/tau_p >= 1 is unstable");
  if (!(lambda >= 0.0)) throw ParameterError("trace_step: negative rate");
  if (lambda == 0.0) return;

  const double eps = tr.epsilon();
  const auto x = act_src.values();
  const auto y = act_tgt.values();

  auto src = tr.src_values();
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = std::max(eps, src[i] + lambda * (x[i] - src[i]));
  auto tgt = tr.tgt_values();
  for (std::size_t j = 0; j < tgt.size(); ++j) tgt[j] = std::max(eps, tgt[j] + lambda * (y[j] - tgt[j]));

  const std::size_t n_src = tr.n_src();
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    double* col = tr.joint_column(j).data();
    const double yj = y[j];
    if (opts.skip_small_activity && yj < 1e-12) {
      for (std::size_t i = 0; i < n_src; ++i) col[i] = std::max(eps, col[i] - lambda * col[i]);
      continue;
    }
    for (std::size_t i = 0; i < n_src; ++i) col[i] = std::max(eps, col[i] + lambda * (x[i] * yj - col[i]));
  }
}

inline ProbabilityTraces trace_step(const ProbabilityTraces& traces, const ActivityVector& act_src,
                                    const ActivityVector& act_tgt, const BcpnnParams& params,
                                    TraceUpdateOptions opts = {}) {
  ProbabilityTraces out = traces;
  trace_step_inplace(out, act_src, act_tgt, params, opts);
  return out;
}

/// Train-time convenience: support followed by normalization.
inline ActivityVector propagate(const Projection& proj, const ActivityVector& act_src) {
  return normalize(support(proj, act_src));
}

inline std::size_t argmax(std::span<const double> v) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

} // namespace bcpnn

#endif
