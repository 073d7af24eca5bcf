#ifndef BCPNN_CLASSIFIERS_HPP
#define BCPNN_CLASSIFIERS_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kernels.hpp"
#include "mnist.hpp"
#include "random.hpp"
#include "unsup.hpp"

namespace bcpnn {

enum class ClassifierKind { assoc, go, nogo, gonogo, linear };

inline std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::assoc: return "assoc";
    case ClassifierKind::go: return "go";
    case ClassifierKind::nogo: return "nogo";
    case ClassifierKind::gonogo: return "gonogo";
    case ClassifierKind::linear: return "linear";
  }
  return "?";
}

inline ClassifierKind parse_classifier_kind(const std::string& s) {
  for (auto k : {ClassifierKind::assoc, ClassifierKind::go, ClassifierKind::nogo, ClassifierKind::gonogo, ClassifierKind::linear})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown classifier '" + s + "' (expected assoc|go|nogo|gonogo|linear)");
}

enum class TraceInit { count, uniform };

inline std::string to_string(TraceInit t) { return t == TraceInit::count ? "count" : "uniform"; }
inline TraceInit parse_trace_init(const std::string& s) {
  if (s == "count") return TraceInit::count;
  if (s == "uniform") return TraceInit::uniform;
  throw ConfigError("unknown classifier trace init '" + s + "' (expected count|uniform)");
}

/// Read-only row-major feature matrix (representations or encoded pixels).
struct FeatureView {
  LayerGeometry geometry;
  std::span<const float> values;

  std::size_t cols() const noexcept { return geometry.units(); }
  std::size_t rows() const noexcept { return cols() ? values.size() / cols() : 0; }
  std::span<const float> row(std::size_t r) const noexcept { return values.subspan(r * cols(), cols()); }
  ActivityVector activity(std::size_t r) const {
    const auto src = row(r);
    return ActivityVector(geometry, std::vector<double>(src.begin(), src.end()));
  }

  static FeatureView of(const RepresentationSet& reps) { return {reps.hidden_geometry, reps.values}; }
};

struct Prediction {
  std::size_t pred = 0;
  ActivityVector pi_out;
};

// ---------------------------------------------------------------------------
// BCPNN heads

struct BcpnnHeadConfig {
  BcpnnParams params{};
  TraceInit init = TraceInit::count;
  std::size_t epochs = 5;
};

inline Projection make_head_projection(LayerGeometry hidden, TraceInit init, double epsilon) {
  auto tr = init == TraceInit::count ? ProbabilityTraces::at_floor(hidden, output_geometry(), epsilon)
                                     : ProbabilityTraces::uniform(hidden, output_geometry(), epsilon);
  return Projection(std::move(tr), ConnectivityMask::full(hidden.n_hc, 1));
}

struct AssocClassifier {
  Projection projection;
  BcpnnParams params;
};

enum class GoNogoVariant { go_only, nogo_only, combined };

inline ClassifierKind kind_of(GoNogoVariant v) {
  return v == GoNogoVariant::go_only ? ClassifierKind::go
       : v == GoNogoVariant::nogo_only ? ClassifierKind::nogo : ClassifierKind::gonogo;
}

inline GoNogoVariant variant_of(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::go: return GoNogoVariant::go_only;
    case ClassifierKind::nogo: return GoNogoVariant::nogo_only;
    case ClassifierKind::gonogo: return GoNogoVariant::combined;
    default: throw ConfigError("not a Go/No-go classifier kind: " + to_string(k));
  }
}

struct GoNogoClassifier {
  Projection go;
  Projection nogo;
  GoNogoVariant variant = GoNogoVariant::combined;
  BcpnnParams params;
};

/// Learning signals of the two pathways for one labelled sample.
struct KappaPair {
  double kappa_go = 0.0;
  double kappa_nogo = 0.0;
  std::size_t pred = 0;
};

inline KappaPair compute_kappas(const ActivityVector& pi_out, std::size_t corr) {
  if (corr >= pi_out.size()) throw ValidationError("compute_kappas: label out of range");
  KappaPair k;
  k.pred = argmax(pi_out.values());
  k.kappa_go = 1.0 - pi_out[corr];
  k.kappa_nogo = k.pred == corr ? 0.0 : pi_out[k.pred];
  return k;
}

inline Prediction predict(const AssocClassifier& c, const ActivityVector& rep) {
  Prediction p;
  p.pi_out = normalize(support(c.projection, rep));
  p.pred = argmax(p.pi_out.values());
  return p;
}

/// No-go support enters with a negative sign before normalization.
inline Prediction predict(const GoNogoClassifier& c, const ActivityVector& rep) {
  SupportVector s(output_geometry());
  if (c.variant != GoNogoVariant::nogo_only) s = support(c.go, rep);
  if (c.variant != GoNogoVariant::go_only) {
    const auto sn = support(c.nogo, rep);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] -= sn[j];
  }
  Prediction p;
  p.pi_out = normalize(s);
  p.pred = argmax(p.pi_out.values());
  return p;
}

namespace detail {

inline void check_aligned(const FeatureView& x, std::span<const std::uint8_t> labels, std::span<const std::size_t> rows) {
  if (labels.size() != x.rows()) throw DimensionError("labels are not aligned with the feature rows");
  for (auto r : rows) {
    if (r >= x.rows()) throw DimensionError("training row index out of range");
    if (labels[r] >= kNumClasses) throw ValidationError("label out of range at row " + std::to_string(r));
  }
}

inline std::vector<std::size_t> epoch_order(std::span<const std::size_t> rows, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(rows.begin(), rows.end());
  Rng rng(derive_seed(seed, {0x636c73ULL, epoch}));
  shuffle(std::span<std::size_t>(order), rng);
  return order;
}

} // namespace detail

/// Associative head: clamp the correct label and learn with kappa = 1.
inline AssocClassifier train_assoc(const FeatureView& x, std::span<const std::uint8_t> labels,
                                   std::span<const std::size_t> rows, const BcpnnHeadConfig& cfg, std::uint64_t seed) {
  cfg.params.validate();
  detail::check_aligned(x, labels, rows);
  AssocClassifier c{make_head_projection(x.geometry, cfg.init, cfg.params.epsilon), cfg.params.with_kappa(1.0)};
  std::array<ActivityVector, kNumClasses> targets;
  for (std::size_t k = 0; k < kNumClasses; ++k) targets[k] = encode_label(k);
  for (std::size_t e = 0; e < cfg.epochs; ++e)
    for (auto r : detail::epoch_order(rows, seed, e))
      trace_step_inplace(c.projection.mutable_traces(), x.activity(r), targets[labels[r]], c.params);
  c.projection.materialize();
  return c;
}

struct GoNogoEpochStats {
  double mean_kappa_go = 0.0;
  double mean_kappa_nogo = 0.0;
};

/// Error-driven dual pathway: Go learns the correct label with kappa_go,
/// No-go learns the wrongly predicted label with kappa_nogo.
inline GoNogoClassifier train_gonogo(const FeatureView& x, std::span<const std::uint8_t> labels,
                                     std::span<const std::size_t> rows, GoNogoVariant variant,
                                     const BcpnnHeadConfig& cfg, std::uint64_t seed,
                                     std::vector<GoNogoEpochStats>* history = nullptr) {
  cfg.params.validate();
  detail::check_aligned(x, labels, rows);
  GoNogoClassifier c{make_head_projection(x.geometry, cfg.init, cfg.params.epsilon),
                     make_head_projection(x.geometry, cfg.init, cfg.params.epsilon), variant, cfg.params};
  std::array<ActivityVector, kNumClasses> targets;
  for (std::size_t k = 0; k < kNumClasses; ++k) targets[k] = encode_label(k);

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    GoNogoEpochStats st;
    const auto order = detail::epoch_order(rows, seed, e);
    for (auto r : order) {
      const auto rep = x.activity(r);
      const std::size_t corr = labels[r];
      const auto kp = compute_kappas(predict(c, rep).pi_out, corr);
      st.mean_kappa_go += kp.kappa_go;
      st.mean_kappa_nogo += kp.kappa_nogo;
      if (variant != GoNogoVariant::nogo_only && kp.kappa_go > 0.0)
        trace_step_inplace(c.go.mutable_traces(), rep, targets[corr], c.params.with_kappa(kp.kappa_go));
      if (variant != GoNogoVariant::go_only && kp.kappa_nogo > 0.0)
        trace_step_inplace(c.nogo.mutable_traces(), rep, targets[kp.pred], c.params.with_kappa(kp.kappa_nogo));
    }
    if (!order.empty()) {
      st.mean_kappa_go /= static_cast<double>(order.size());
      st.mean_kappa_nogo /= static_cast<double>(order.size());
    }
    if (history) history->push_back(st);
  }
  c.go.materialize();
  c.nogo.materialize();
  return c;
}

// ---------------------------------------------------------------------------
// Linear softmax baseline

struct LinearHyperparams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  std::size_t batch = 256;
  std::size_t epochs = 300;

  friend bool operator==(const LinearHyperparams&, const LinearHyperparams&) = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One adaptive-moment update of `params`, in place.
inline void adam_step_inplace(std::span<double> params, std::span<const double> grads, AdamState& st,
                              const LinearHyperparams& hp) {
  if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  ++st.t;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    st.m[k] = hp.beta1 * st.m[k] + (1.0 - hp.beta1) * g;
    st.v[k] = hp.beta2 * st.v[k] + (1.0 - hp.beta2) * g * g;
    const double mh = st.m[k] / c1;
    const double vh = st.v[k] / c2;
    params[k] -= hp.lr * mh / (std::sqrt(vh) + hp.delta);
  }
}

inline std::pair<std::vector<double>, AdamState> adam_step(std::vector<double> params, std::span<const double> grads,
                                                           AdamState st, const LinearHyperparams& hp) {
  adam_step_inplace(params, grads, st, hp);
  return {std::move(params), std::move(st)};
}

/// Weights are class-major: theta = [W (10 x n_features) | b (10)].
struct LinearClassifier {
  LayerGeometry input_geometry;
  std::vector<double> theta;
  AdamState adam;
  LinearHyperparams hp;

  std::size_t n_features() const noexcept { return input_geometry.units(); }
  double weight(std::size_t cls, std::size_t feat) const noexcept { return theta[cls * n_features() + feat]; }
  double bias(std::size_t cls) const noexcept { return theta[kNumClasses * n_features() + cls]; }
};

inline std::array<double, kNumClasses> linear_logits(std::span<const double> theta, std::size_t n_feat,
                                                     std::span<const float> x) {
  std::array<double, kNumClasses> z{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double* w = theta.data() + c * n_feat;
    double acc = 0.0;
    for (std::size_t i = 0; i < n_feat; ++i) acc += w[i] * static_cast<double>(x[i]);
    z[c] = acc + theta[kNumClasses * n_feat + c];
  }
  return z;
}

inline std::array<double, kNumClasses> softmax10(const std::array<double, kNumClasses>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::array<double, kNumClasses> p{};
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) sum += p[c] = std::exp(z[c] - mx);
  for (double& v : p) v /= sum;
  return p;
}

/// Mean softmax cross-entropy over `rows` and its gradient w.r.t. theta.
inline double linear_loss_and_grad(std::span<const double> theta, const FeatureView& x,
                                   std::span<const std::uint8_t> labels, std::span<const std::size_t> rows,
                                   std::vector<double>* grad) {
  const std::size_t nf = x.cols();
  if (theta.size() != kNumClasses * (nf + 1)) throw DimensionError("linear: parameter vector has the wrong size");
  if (grad) grad->assign(theta.size(), 0.0);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    const auto xr = x.row(r);
    const auto z = linear_logits(theta, nf, xr);
    const double mx = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    loss += (lse - z[labels[r]]) * inv;
    if (!grad) continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double coef = (std::exp(z[c] - lse) - (c == labels[r] ? 1.0 : 0.0)) * inv;
      double* g = grad->data() + c * nf;
      for (std::size_t i = 0; i < nf; ++i) g[i] += coef * static_cast<double>(xr[i]);
      (*grad)[kNumClasses * nf + c] += coef;
    }
  }
  return loss;
}

inline LinearClassifier train_linear(const FeatureView& x, std::span<const std::uint8_t> labels,
                                     std::span<const std::size_t> rows, const LinearHyperparams& hp, std::uint64_t seed) {
  detail::check_aligned(x, labels, rows);
  if (hp.batch < 1) throw ConfigError("linear: minibatch size must be >= 1");
  LinearClassifier c;
  c.input_geometry = x.geometry;
  c.hp = hp;
  c.theta.assign(kNumClasses * (x.cols() + 1), 0.0);
  c.adam = AdamState(c.theta.size());

  std::vector<double> grad;
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    const auto order = detail::epoch_order(rows, seed, e);
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch);
      const auto batch = std::span<const std::size_t>(order).subspan(start, end - start);
      const double loss = linear_loss_and_grad(c.theta, x, labels, batch, &grad);
      if (!std::isfinite(loss))
        throw DivergenceError("linear classifier diverged at epoch " + std::to_string(e) + ", step " +
                              std::to_string(c.adam.t));
      adam_step_inplace(c.theta, grad, c.adam, hp);
    }
  }
  return c;
}

inline Prediction predict(const LinearClassifier& c, std::span<const float> x) {
  if (x.size() != c.n_features()) throw DimensionError("linear predict: feature count mismatch");
  const auto p = softmax10(linear_logits(c.theta, c.n_features(), x));
  Prediction out;
  out.pi_out = ActivityVector(output_geometry(), std::vector<double>(p.begin(), p.end()));
  out.pred = argmax(out.pi_out.values());
  return out;
}

inline Prediction predict(const LinearClassifier& c, const ActivityVector& rep) {
  std::vector<float> x(rep.values().begin(), rep.values().end());
  return predict(c, std::span<const float>(x));
}

// ---------------------------------------------------------------------------

/// Any trained head, tagged by kind.
class Classifier {
public:
  using Variant = std::variant<AssocClassifier, GoNogoClassifier, LinearClassifier>;

  Classifier(AssocClassifier c) : v_(std::move(c)) {}
  Classifier(GoNogoClassifier c) : v_(std::move(c)) {}
  Classifier(LinearClassifier c) : v_(std::move(c)) {}

  ClassifierKind kind() const {
    if (std::holds_alternative<AssocClassifier>(v_)) return ClassifierKind::assoc;
    if (const auto* g = std::get_if<GoNogoClassifier>(&v_)) return kind_of(g->variant);
    return ClassifierKind::linear;
  }

  const Variant& get() const noexcept { return v_; }
  Variant& get() noexcept { return v_; }

  Prediction predict(const FeatureView& x, std::size_t row) const {
    return std::visit([&](const auto& c) -> Prediction {
      if constexpr (std::is_same_v<std::decay_t<decltype(c)>, LinearClassifier>) return bcpnn::predict(c, x.row(row));
      else return bcpnn::predict(c, x.activity(row));
    }, v_);
  }

private:
  Variant v_;
};

struct ClassifierConfig {
  BcpnnParams params{};
  TraceInit assoc_init = TraceInit::count;
  TraceInit gonogo_init = TraceInit::uniform;
  std::size_t assoc_epochs = 5;
  std::size_t gonogo_epochs = 20;
  LinearHyperparams linear{};

  std::size_t epochs_for(ClassifierKind k) const {
    switch (k) {
      case ClassifierKind::assoc: return assoc_epochs;
      case ClassifierKind::linear: return linear.epochs;
      default: return gonogo_epochs;
    }
  }
};

inline Classifier train_classifier(ClassifierKind kind, const FeatureView& x, std::span<const std::uint8_t> labels,
                                   std::span<const std::size_t> rows, const ClassifierConfig& cfg, std::uint64_t seed) {
  switch (kind) {
    case ClassifierKind::assoc:
      return train_assoc(x, labels, rows, {cfg.params, cfg.assoc_init, cfg.assoc_epochs}, seed);
    case ClassifierKind::linear:
      return train_linear(x, labels, rows, cfg.linear, seed);
    default:
      return train_gonogo(x, labels, rows, variant_of(kind), {cfg.params, cfg.gonogo_init, cfg.gonogo_epochs}, seed);
  }
}

inline std::vector<std::size_t> predict_rows(const Classifier& c, const FeatureView& x, std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(c.predict(x, r).pred);
  return out;
}

} // namespace bcpnn

#endif
