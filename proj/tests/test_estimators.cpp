#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mwsim/estimators.hpp"
#include "test_support.hpp"

using namespace mwsim;

namespace {

double ks_bruteforce(const Vec& a, const Vec& b) {
  double d = 0.0;
  auto cdf = [](const Vec& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) / s.size();
  };
  for (const Vec* s : {&a, &b})
    for (double x : *s) d = std::max(d, std::abs(cdf(a, x) - cdf(b, x)));
  return d;
}

double energy_bruteforce(const Vec& a, const Vec& b) {
  auto mean_abs = [](const Vec& x, const Vec& y) {
    double s = 0.0;
    for (double u : x)
      for (double v : y) s += std::abs(u - v);
    return s / (x.size() * y.size());
  };
  return 2.0 * mean_abs(a, b) - mean_abs(a, a) - mean_abs(b, b);
}

EmpiricalDistribution dist_1d(const Vec& v) {
  EmpiricalDistribution d(1);
  for (double x : v) d.add(Vec{x});
  return d;
}

struct ServiceOnly {
  Vec service;
};

}  // namespace

TEST(EstimateStationary, ConstantStream) {
  std::vector<Vec> s(1000, Vec{3, 4});
  const auto e = estimate_stationary(s, 100, 7);
  EXPECT_EQ(e.n_samples, 129u);
  EXPECT_EQ(e.mean_norm.mean, 5.0);
  EXPECT_EQ(e.mean_norm.se, 0.0);
  for (std::size_t i = 0; i < e.distribution.size(); ++i) EXPECT_EQ(Vec(e.distribution.sample(i).begin(), e.distribution.sample(i).end()), (Vec{3, 4}));
}

TEST(EstimateStationary, BurnInTooLong) {
  std::vector<Vec> s(10, Vec{1});
  try {
    estimate_stationary(s, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(EstimateStationary, GaussianAbsoluteMoment) {
  RandomStream rng(1, 0);
  std::vector<Vec> s;
  for (int i = 0; i < 200000; ++i) s.push_back({rng.normal()});
  const auto e = estimate_stationary(s, 0, 1);
  const double target = std::sqrt(2.0 / std::numbers::pi);
  const double sd = std::sqrt(1.0 - 2.0 / std::numbers::pi);
  EXPECT_NEAR(e.mean_norm.mean, target, 3.0 * sd / std::sqrt(200000.0));
  EXPECT_NEAR(e.mean_norm.se, sd / std::sqrt(200000.0), 0.3 * sd / std::sqrt(200000.0));
}

TEST(EstimateStationary, NoThinningReproducesRawStream) {
  RandomStream rng(2, 0);
  std::vector<Vec> s;
  for (int i = 0; i < 5000; ++i) s.push_back({rng.normal(), rng.uniform()});
  const auto e = estimate_stationary(s, 0, 1);
  ASSERT_EQ(e.n_samples, s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(e.distribution.sample(i)[0], s[i][0]);
    EXPECT_EQ(e.distribution.sample(i)[1], s[i][1]);
    total += norm(s[i]);
  }
  EXPECT_NEAR(e.mean_norm.mean, total / s.size(), 1e-14);
}

TEST(EstimateStationary, FieldSelector) {
  struct Rec {
    Vec y;
  };
  std::vector<Rec> s{{{1}}, {{2}}, {{3}}, {{4}}};
  const auto e = estimate_stationary(s, 1, 2, &Rec::y);
  ASSERT_EQ(e.n_samples, 2u);
  EXPECT_EQ(e.distribution.sample(0)[0], 2.0);
  EXPECT_EQ(e.distribution.sample(1)[0], 4.0);
}

TEST(KsDistance, IdenticalSamplesGiveZero) {
  RandomStream rng(3, 0);
  EmpiricalDistribution p(2);
  for (int i = 0; i < 1000; ++i) p.add(Vec{rng.normal(), rng.normal()});
  EXPECT_EQ(ks_distance(p, p), 0.0);
}

TEST(KsDistance, DisjointSupportsGiveOne) {
  EXPECT_EQ(ks_distance(dist_1d({0, 1, 2}), dist_1d({5, 6})), 1.0);
}

TEST(KsDistance, MatchesBruteForceIncludingTies) {
  RandomStream rng(4, 0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec a, b;
    for (int i = 0; i < 40 + trial; ++i) a.push_back(std::floor(10 * rng.uniform()));
    for (int i = 0; i < 30; ++i) b.push_back(std::floor(10 * rng.uniform() + 1));
    const double ks = ks_statistic(a, b);
    EXPECT_NEAR(ks, ks_bruteforce(a, b), 1e-15);
    EXPECT_GE(ks, 0.0);
    EXPECT_LE(ks, 1.0);
  }
}

TEST(KsDistance, DimensionMismatch) {
  EmpiricalDistribution p(1), q(2);
  p.add(Vec{1});
  q.add(Vec{1, 2});
  try {
    ks_distance(p, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(KsDistance, DirectionsDefault) {
  EXPECT_EQ(default_directions(1).size(), 1u);
  const auto d = default_directions(2);
  ASSERT_EQ(d.size(), 10u);
  for (const auto& v : d) EXPECT_NEAR(norm(v), 1.0, 1e-12);
  EXPECT_EQ(default_directions(2), d);
}

TEST(KsDistance, ByDirectionReportsArgmax) {
  EmpiricalDistribution p(2), q(2);
  RandomStream rng(5, 0);
  for (int i = 0; i < 2000; ++i) {
    p.add(Vec{rng.normal(), rng.normal()});
    q.add(Vec{rng.normal(), rng.normal() + 3.0});
  }
  const auto r = ks_by_direction(p, q, default_directions(2, 0));
  EXPECT_EQ(r.argmax, 1u);
  EXPECT_EQ(r.statistic, r.per_direction[1]);
}

TEST(EnergyDistance, MatchesPairwiseFormula) {
  RandomStream rng(6, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec a, b;
    for (int i = 0; i < 60; ++i) a.push_back(rng.normal());
    for (int i = 0; i < 45; ++i) b.push_back(rng.normal() + 0.5 * trial / 20.0);
    EXPECT_NEAR(energy_distance_1d(a, b), energy_bruteforce(a, b), 1e-12);
  }
  EXPECT_EQ(energy_distance_1d({1, 2, 3}, {1, 2, 3}), 0.0);
}

TEST(KsStandardError, EffectiveSampleSizeOfIidSeries) {
  RandomStream rng(7, 0);
  Vec s;
  for (int i = 0; i < 100000; ++i) s.push_back(rng.normal());
  const double n_eff = effective_sample_size(s);
  EXPECT_GT(n_eff, 50000);
  EXPECT_LE(n_eff, 100000);
  EXPECT_NEAR(ks_standard_error(1e4, 1e4), 0.2603 * std::sqrt(2e-4), 1e-15);
}

TEST(BatchMeans, SeMatchesIidTheory) {
  RandomStream rng(8, 0);
  Vec s;
  for (int i = 0; i < 320000; ++i) s.push_back(rng.uniform());
  const auto e = batch_means(s);
  const double sd = std::sqrt(1.0 / 12.0 / s.size());
  EXPECT_NEAR(e.mean, 0.5, 3 * sd);
  EXPECT_NEAR(e.se, sd, 0.35 * sd);
  OnlineBatchMeans online(1000);
  for (double x : s) online.add(x);
  EXPECT_NEAR(online.finish().mean, e.mean, 1e-12);
  EXPECT_NEAR(online.finish().se, sd, 0.35 * sd);
}

TEST(SmoothnessGap, Examples) {
  std::vector<ServiceOnly> always(100, {{1, 0}});
  const Vec g = smoothness_gap(always, 5);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
  std::vector<ServiceOnly> alt;
  for (int t = 0; t < 100; ++t) alt.push_back({{t % 2 ? 0.0 : 1.0}});
  EXPECT_EQ(smoothness_gap(alt, 2)[0], 0.0);
  EXPECT_EQ(smoothness_gap(alt, 1)[0], 0.5);
}

TEST(SmoothnessGap, NoCompleteWindow) {
  std::vector<ServiceOnly> s(3, {{1}});
  EXPECT_THROW(smoothness_gap(s, 5), Error);
}

TEST(SmoothnessGap, AntitoneForNestedWindows) {
  RandomStream rng(9, 0);
  std::vector<ServiceOnly> s;
  for (int t = 0; t < 400000; ++t) s.push_back({{rng.uniform() < 0.15 ? 1.0 : 0.0, rng.uniform() < 0.05 ? 1.0 : 0.0}});
  SmoothnessGapAccumulator acc(2, {5, 10, 20, 40});
  for (std::size_t t = 0; t < s.size(); ++t) acc.feed(t, s[t].service);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t w = 1; w < 4; ++w) EXPECT_LE(acc.result(w)[i], acc.result(w - 1)[i]);
  // Exact check: a nested window that is all-zero has all-zero halves.
  for (std::size_t start = 0; start + 40 <= s.size(); start += 40) {
    bool long_zero = true;
    for (std::size_t t = start; t < start + 40; ++t) long_zero &= s[t].service[1] == 0.0;
    if (!long_zero) continue;
    for (std::size_t t = start; t < start + 20; ++t) ASSERT_EQ(s[t].service[1], 0.0);
  }
}

TEST(DriftCheck, TelescopesToZeroOnStationarySeries) {
  RandomStream rng(10, 0);
  Vec s{0.0};
  for (int i = 0; i < 500000; ++i) s.push_back(0.9 * s.back() + rng.normal());
  const auto b = drift_check(s, {-std::numeric_limits<double>::infinity()});
  ASSERT_EQ(b.size(), 1u);
  EXPECT_NEAR(b[0].mean, 0.0, 3.0 * b[0].se);
  EXPECT_NEAR(b[0].mean, (s.back() - s.front()) / (s.size() - 1), 1e-12);
}

TEST(DriftCheck, HighLevelsDriftDown) {
  RandomStream rng(11, 0);
  Vec s{0.0};
  for (int i = 0; i < 500000; ++i) s.push_back(0.9 * s.back() + rng.normal());
  const auto b = drift_check(s, {1.0, 2.0, 4.0, 100.0});
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_FALSE(b[k].dropped);
    EXPECT_LT(b[k].mean, -3.0 * b[k].se);
  }
  EXPECT_TRUE(b[3].dropped);
  EXPECT_THROW(drift_check(s, {2.0, 1.0}), Error);
}

TEST(TailFit, ExponentialSlope) {
  RandomStream rng(12, 0);
  Vec s;
  for (int i = 0; i < 400000; ++i) s.push_back(-std::log(1.0 - rng.uniform()) / 2.0);
  const auto f = tail_fit(s);
  EXPECT_NEAR(f.slope, -2.0, 0.1);
  EXPECT_GE(f.r_squared, kTailFitMinR2);
  EXPECT_FALSE(f.poor_fit);
}

TEST(TailFit, PointMassIsDegenerate) {
  const auto f = tail_fit(Vec(1000, 1.0));
  EXPECT_TRUE(f.degenerate);
  EXPECT_THROW(tail_fit(Vec(10, 1.0)), Error);
}

TEST(Quantiles, TypeSevenInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.9), 4.6);
  const auto s = summarize({1, 2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(s.p50, 3.0);
}

TEST(LogLogSlope, PowerLaw) {
  const Vec x{20, 50, 100, 200};
  Vec y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 0.8));
  EXPECT_NEAR(log_log_slope(x, y), 0.8, 1e-12);
}

TEST(HDiagnostic, CrpReducesToConeNorm) {
  const auto g = mwsim::testing::fixture_geometry("crp2");
  EmpiricalDistribution wq(2);
  wq.add(Vec{2, 0});
  wq.add(Vec{1, 1});
  wq.add(Vec{0, 3});
  const auto h = h_diagnostic(wq, g);
  EXPECT_NEAR(h.p50, std::numbers::sqrt2, 1e-12);
}

TEST(FaceFraction, CountsOffFaceDecisions) {
  const auto g = mwsim::testing::fixture_geometry("face2");
  struct Rec {
    std::size_t decision;
  };
  std::vector<Rec> s{{0}, {1}, {2}, {2}, {0}, {1}, {0}, {2}};
  EXPECT_DOUBLE_EQ(face_fraction(s, g), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(face_fraction(s, g, 4), 1.0 / 4.0);
}
