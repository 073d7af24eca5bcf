#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "bcpnn/plasticity.hpp"
#include "test_util.hpp"

using namespace bcpnn;

namespace {

// Straight summation over an explicit joint table, no trace indexing helpers.
double mi_oracle(const std::vector<std::vector<double>>& pj, const std::vector<double>& ps, const std::vector<double>& pt) {
  double mi = 0.0;
  for (std::size_t a = 0; a < ps.size(); ++a)
    for (std::size_t b = 0; b < pt.size(); ++b) mi += pj[a][b] * std::log(pj[a][b] / (ps[a] * pt[b]));
  return mi;
}

ProbabilityTraces traces_with_mi(std::size_t n_src_hc, std::size_t n_tgt_hc, const std::vector<std::vector<double>>& strength) {
  // joint of source hc g with target hc h = (1-a) * independent + a * diagonal
  const LayerGeometry src(n_src_hc, 2), tgt(n_tgt_hc, 2);
  auto tr = ProbabilityTraces::uniform(src, tgt, 1e-8);
  for (std::size_t g = 0; g < n_src_hc; ++g)
    for (std::size_t h = 0; h < n_tgt_hc; ++h) {
      const double a = strength[g][h];
      for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t q = 0; q < 2; ++q)
          tr.joint(src.index(g, p), tgt.index(h, q)) = (1.0 - a) * 0.25 + a * (p == q ? 0.5 : 0.0) + 1e-8;
    }
  return tr;
}

} // namespace

TEST(MutualInformation, PerfectCorrelationIsLogTwo) {
  const LayerGeometry g(1, 2);
  ProbabilityTraces tr(g, g, 1e-8, 0.5);
  tr.joint(0, 0) = 0.5;
  tr.joint(1, 1) = 0.5;
  tr.joint(0, 1) = 1e-8;
  tr.joint(1, 0) = 1e-8;
  const double exact = 2 * 0.5 * std::log(2.0) + 2 * 1e-8 * std::log(1e-8 / 0.25);
  EXPECT_NEAR(hc_mutual_information(tr, 0, 0), exact, 1e-12);
  EXPECT_NEAR(hc_mutual_information(tr, 0, 0), std::log(2.0), 1e-6);
}

TEST(MutualInformation, IndependenceIsZero) {
  const LayerGeometry src(1, 3), tgt(1, 4);
  auto tr = test::random_traces(src, tgt, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) tr.joint(i, j) = tr.src(i) * tr.tgt(j);
  EXPECT_NEAR(hc_mutual_information(tr, 0, 0), 0.0, 1e-15);
}

TEST(MutualInformation, MatchesTableOracle) {
  for (std::size_t n_mc_tgt : {2u, 100u}) {
    const LayerGeometry src(3, 2), tgt(2, n_mc_tgt);
    std::mt19937_64 gen(n_mc_tgt);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    auto tr = test::random_traces(src, tgt, 99);
    // normalized joint table for hc pair (1, 1), marginals summed from it
    std::vector<std::vector<double>> pj(2, std::vector<double>(n_mc_tgt));
    double total = 0.0;
    for (auto& row : pj)
      for (auto& v : row) total += (v = u(gen));
    std::vector<double> ps(2, 0.0), pt(n_mc_tgt, 0.0);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < n_mc_tgt; ++b) {
        pj[a][b] /= total;
        ps[a] += pj[a][b];
        pt[b] += pj[a][b];
      }
    for (std::size_t a = 0; a < 2; ++a) tr.src(src.index(1, a)) = ps[a];
    for (std::size_t b = 0; b < n_mc_tgt; ++b) tr.tgt(tgt.index(1, b)) = pt[b];
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < n_mc_tgt; ++b) tr.joint(src.index(1, a), tgt.index(1, b)) = pj[a][b];
    const double oracle = mi_oracle(pj, ps, pt);
    EXPECT_GT(oracle, 0.0);
    EXPECT_NEAR(hc_mutual_information(tr, 1, 1), oracle, 1e-12);
  }
}

TEST(MutualInformation, NonNegativeOnRandomTraces) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto tr = test::random_traces(LayerGeometry(2, 3), LayerGeometry(2, 4), seed);
    for (std::size_t g = 0; g < 2; ++g)
      for (std::size_t h = 0; h < 2; ++h) EXPECT_GE(hc_mutual_information(tr, g, h), 0.0);
  }
}

TEST(InitMask, CardinalityAndDeterminism) {
  const auto m = init_mask(784, 30, 0.08, 42);
  EXPECT_EQ(m.k(), 63u);
  for (std::size_t t = 0; t < 30; ++t) {
    EXPECT_EQ(m.active_count(t), 63u);
    const auto s = m.sources(t);
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 63u);
  }
  EXPECT_EQ(m, init_mask(784, 30, 0.08, 42));
  EXPECT_FALSE(m == init_mask(784, 30, 0.08, 43));
}

TEST(InitMask, RoughlyUniformSources) {
  // every source is equally likely: counts over many targets stay near n*k/N
  const auto m = init_mask(20, 2000, 0.25, 5);
  std::vector<std::size_t> hits(20, 0);
  for (std::size_t t = 0; t < 2000; ++t)
    for (auto s : m.sources(t)) ++hits[s];
  for (auto h : hits) EXPECT_NEAR(static_cast<double>(h), 500.0, 80.0);
}

TEST(InitMask, Errors) {
  EXPECT_THROW(init_mask(10, 3, 0.01, 0), ConfigError);
  EXPECT_THROW(init_mask(10, 3, 0.0, 0), ConfigError);
  EXPECT_THROW(init_mask(10, 3, 1.5, 0), ConfigError);
  EXPECT_EQ(active_count_for(784, 1.0), 784u);
  EXPECT_THROW(ConnectivityMask(10, 3, 0), ConfigError);
  EXPECT_THROW(ConnectivityMask(10, 3, 11), ConfigError);
}

TEST(Rewire, KeepsMostInformativeSources) {
  // 4 sources, k = 2, source MI ordering 3 > 1 > 0 > 2
  const auto tr = traces_with_mi(4, 1, {{0.2}, {0.6}, {0.0}, {0.9}});
  ConnectivityMask mask(4, 1, 2);
  mask.set_sources(0, {0, 2});
  const auto out = rewire(tr, mask);
  EXPECT_EQ(std::vector<std::size_t>(out.sources(0).begin(), out.sources(0).end()), (std::vector<std::size_t>{1, 3}));
}

TEST(Rewire, TiesGoToLowerIndex) {
  const auto tr = traces_with_mi(4, 1, {{0.5}, {0.5}, {0.5}, {0.5}});
  ConnectivityMask mask(4, 1, 2);
  mask.set_sources(0, {2, 3});
  const auto out = rewire(tr, mask);
  EXPECT_EQ(std::vector<std::size_t>(out.sources(0).begin(), out.sources(0).end()), (std::vector<std::size_t>{0, 1}));
}

TEST(Rewire, IdempotentAndPreservesCardinality) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto tr = test::random_traces(LayerGeometry(12, 3), LayerGeometry(5, 4), seed);
    const auto mask = init_mask(12, 5, 0.34, seed);
    const auto once = rewire(tr, mask);
    EXPECT_EQ(rewire(tr, once), once);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(once.active_count(t), mask.k());
  }
}

TEST(Rewire, SelectedScoresDominateUnselected) {
  const auto tr = test::random_traces(LayerGeometry(15, 2), LayerGeometry(3, 3), 77);
  const auto out = rewire(tr, init_mask(15, 3, 0.4, 1));
  for (std::size_t t = 0; t < 3; ++t) {
    const auto scores = score_sources(tr, t);
    double min_in = 1e300, max_out = -1.0;
    for (std::size_t g = 0; g < 15; ++g) {
      if (out.active(g, t)) min_in = std::min(min_in, scores[g]);
      else max_out = std::max(max_out, scores[g]);
    }
    EXPECT_GE(min_in, max_out);
  }
}

TEST(Rewire, MaxSwapsLimitsChanges) {
  // sources 4, 5 carry the information; 0, 1 are connected
  const auto tr = traces_with_mi(6, 1, {{0.0}, {0.1}, {0.2}, {0.3}, {0.8}, {0.9}});
  ConnectivityMask mask(6, 1, 2);
  mask.set_sources(0, {0, 1});
  const auto one = rewire(tr, mask, 1);
  EXPECT_EQ(std::vector<std::size_t>(one.sources(0).begin(), one.sources(0).end()), (std::vector<std::size_t>{1, 5}));
  const auto two = rewire(tr, mask, 2);
  EXPECT_EQ(two, rewire(tr, mask));
  EXPECT_EQ(rewire(tr, mask, 10), rewire(tr, mask));
}

TEST(Rewire, ShapeMismatch) {
  const auto tr = test::random_traces(LayerGeometry(4, 2), LayerGeometry(2, 2), 1);
  EXPECT_THROW(rewire(tr, ConnectivityMask::full(5, 2)), DimensionError);
}

TEST(Schedule, Fires) {
  RewireSchedule s{.period = 2000, .freeze_after = 6000};
  EXPECT_FALSE(s.fires(0));
  EXPECT_FALSE(s.fires(1999));
  EXPECT_TRUE(s.fires(2000));
  EXPECT_TRUE(s.fires(6000));
  EXPECT_FALSE(s.fires(8000));
  EXPECT_THROW((RewireSchedule{.period = 0}.validate()), ConfigError);
}

TEST(MaskBits, RoundTrip) {
  const auto m = init_mask(37, 11, 0.2, 9);
  const auto bits = m.pack_bits();
  EXPECT_EQ(bits.size(), (37u * 11u + 7u) / 8u);
  EXPECT_EQ(ConnectivityMask::unpack_bits(37, 11, m.k(), bits), m);
}
