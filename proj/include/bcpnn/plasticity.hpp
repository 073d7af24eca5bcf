#ifndef BCPNN_PLASTICITY_HPP
#define BCPNN_PLASTICITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "connectivity.hpp"
#include "kernels.hpp"
#include "random.hpp"

namespace bcpnn {

/// When structural plasticity rewires a projection during training.
struct RewireSchedule {
  static constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

  std::size_t period = 2000;       // samples between rewiring events
  std::size_t freeze_after = kNever; // no rewiring once this many samples were seen
  std::size_t max_swaps_per_event = 0; // 0 = full reselection

  /// True if the event fires right after the `samples_seen`-th sample.
  bool fires(std::size_t samples_seen) const noexcept {
    return period != kNever && samples_seen > 0 && samples_seen % period == 0 && samples_seen <= freeze_after;
  }

  void validate() const {
    if (period < 1) throw ConfigError("rewire period must be >= 1");
  }
};

inline std::size_t active_count_for(std::size_t n_src_hc, double p_conn) {
  if (!(p_conn > 0.0 && p_conn <= 1.0)) throw ConfigError("connectivity fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(p_conn * static_cast<double>(n_src_hc)));
  if (k == 0) throw ConfigError("connectivity fraction yields zero active sources per target");
  return k;
}

/// Each target hypercolumn draws k distinct sources uniformly at random.
inline ConnectivityMask init_mask(std::size_t n_src_hc, std::size_t n_tgt_hc, double p_conn, std::uint64_t seed) {
  const std::size_t k = active_count_for(n_src_hc, p_conn);
  ConnectivityMask m(n_src_hc, n_tgt_hc, k);
  std::vector<std::size_t> pool(n_src_hc);
  for (std::size_t t = 0; t < n_tgt_hc; ++t) {
    Rng rng(derive_seed(seed, {0x6d61736bULL, t}));
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // partial Fisher-Yates: the first k slots are a uniform k-subset
    for (std::size_t i = 0; i < k; ++i) {
      const auto r = i + static_cast<std::size_t>(uniform_index(rng, n_src_hc - i));
      std::swap(pool[i], pool[r]);
    }
    m.set_sources(t, std::vector<std::size_t>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k)));
  }
  return m;
}

/// Mutual information (nats) between one source and one target hypercolumn,
/// read from the traces. Small negatives caused by the floor clamp to zero.
inline double hc_mutual_information(const ProbabilityTraces& tr, std::size_t hc_src, std::size_t hc_tgt) {
  const auto& sg = tr.src_geometry();
  const auto& tg = tr.tgt_geometry();
  if (hc_src >= sg.n_hc || hc_tgt >= tg.n_hc) throw DimensionError("hc_mutual_information: hypercolumn out of range");
  double mi = 0.0;
  for (std::size_t j = tg.index(hc_tgt, 0); j < tg.index(hc_tgt + 1, 0); ++j) {
    const double pj = tr.tgt(j);
    const auto col = tr.joint_column(j);
    for (std::size_t i = sg.index(hc_src, 0); i < sg.index(hc_src + 1, 0); ++i)
      mi += col[i] * std::log(col[i] / (tr.src(i) * pj));
  }
  return std::max(0.0, mi);
}

/// MI of every source hypercolumn against one target hypercolumn.
inline std::vector<double> score_sources(const ProbabilityTraces& tr, std::size_t hc_tgt) {
  std::vector<double> scores(tr.src_geometry().n_hc);
  for (std::size_t g = 0; g < scores.size(); ++g) scores[g] = hc_mutual_information(tr, g, hc_tgt);
  return scores;
}

/// Indices of the k highest scores; ties go to the lower index.
inline std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Reselect the k most informative sources of every target hypercolumn.
/// With `max_swaps` > 0, at most that many (worst active, best silent)
/// exchanges are made per target instead of a full reselection.
inline ConnectivityMask rewire(const ProbabilityTraces& tr, const ConnectivityMask& mask, std::size_t max_swaps = 0) {
  if (mask.n_src_hc() != tr.src_geometry().n_hc || mask.n_tgt_hc() != tr.tgt_geometry().n_hc)
    throw DimensionError("rewire: mask shape does not match trace geometry");
  ConnectivityMask out = mask;
  for (std::size_t h = 0; h < mask.n_tgt_hc(); ++h) {
    const auto scores = score_sources(tr, h);
    if (max_swaps == 0) {
      out.set_sources(h, top_k(scores, mask.k()));
      continue;
    }
    // ranking key: higher score first, lower index on ties
    auto better = [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
    std::vector<std::size_t> active(mask.sources(h).begin(), mask.sources(h).end());
    std::vector<std::size_t> silent;
    for (std::size_t g = 0; g < scores.size(); ++g)
      if (!mask.active(g, h)) silent.push_back(g);
    for (std::size_t s = 0; s < max_swaps && !silent.empty(); ++s) {
      auto worst = std::min_element(active.begin(), active.end(), [&](auto a, auto b) { return better(b, a); });
      auto best = std::min_element(silent.begin(), silent.end(), better);
      if (!better(*best, *worst)) break;
      std::swap(*worst, *best);
    }
    out.set_sources(h, std::move(active));
  }
  return out;
}

} // namespace bcpnn

#endif
