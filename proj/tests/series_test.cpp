#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "txsentry/series.hpp"

namespace txsentry {
namespace {

using testing::sine;
using testing::white_noise;

TimeSeries samples(std::vector<Point> pts) { return {std::move(pts), Domain::sample()}; }

TimeSeries grid(const std::vector<double>& values, std::int64_t step = 60, std::int64_t t0 = 0) {
  TimeSeries s{{}, Domain::time(step)};
  for (std::size_t i = 0; i < values.size(); ++i) s.points.push_back({t0 + static_cast<std::int64_t>(i) * step, values[i]});
  return s;
}

double total(const TimeSeries& s) {
  double sum = 0.0;
  for (const auto& p : s.points) sum += p.value;
  return sum;
}

// r(k) by the textbook double sum.
double naive_acf(const std::vector<double>& x, int k) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    den += (x[t] - m) * (x[t] - m);
    if (t + static_cast<std::size_t>(k) < x.size()) num += (x[t] - m) * (x[t + static_cast<std::size_t>(k)] - m);
  }
  return num / den;
}

TEST(Merge, SumsCoincidentPoints) {
  EXPECT_EQ(merge_cooccurring(samples({{10, 5}, {10, 3}, {12, 1}})).points, (std::vector<Point>{{10, 8}, {12, 1}}));
  EXPECT_EQ(merge_cooccurring(samples({{7, 2}, {7, 2}, {7, 2}})).points, (std::vector<Point>{{7, 6}}));
  const auto distinct = samples({{1, 1}, {2, 2}, {5, 3}});
  EXPECT_EQ(merge_cooccurring(distinct), distinct);
}

TEST(Resample, BinsBySum) {
  const auto merged = samples({{10, 8}, {12, 1}});
  const auto fine = resample(merged, 1);
  EXPECT_EQ(fine.points, (std::vector<Point>{{10, 8}, {11, 0}, {12, 1}}));
  EXPECT_EQ(fine.domain, Domain::time(1));
  EXPECT_EQ(resample(merged, 5).points, (std::vector<Point>{{10, 9}}));
  EXPECT_EQ(resample(samples({{123, 4}}), 60).size(), 1u);
  EXPECT_THROW(resample(samples({}), 60), std::invalid_argument);
}

TEST(Resample, PreservesTotals) {
  std::mt19937_64 rng(11);
  std::vector<Point> pts;
  std::int64_t t = 1000;
  for (int i = 0; i < 300; ++i) {
    t += static_cast<std::int64_t>(rng() % 90);
    pts.push_back({t, static_cast<double>(rng() % 1000) / 7.0});
  }
  const auto merged = merge_cooccurring(samples(pts));
  EXPECT_NEAR(total(merged), total(samples(pts)), 1e-9);
  for (std::int64_t step : {1, 7, 60, 3600}) EXPECT_NEAR(total(resample(merged, step)), total(merged), 1e-9);
}

TEST(SlidingWindows, CountsAndSlices) {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 0.0);
  const auto g = grid(v);
  const auto w = sliding_windows(g, 300, 60);
  ASSERT_EQ(w.size(), 6u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].start, g.points[i].ts);
    EXPECT_EQ(w[i].values, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(i),
                                               v.begin() + static_cast<std::ptrdiff_t>(i + 5)));
  }
  EXPECT_EQ(sliding_windows(g, 600, 60).size(), 1u);
  const auto tiles = sliding_windows(g, 120, 120);
  ASSERT_EQ(tiles.size(), 5u);
  EXPECT_EQ(tiles[1].values, (std::vector<double>{2, 3}));
  EXPECT_TRUE(sliding_windows(g, 660, 60).empty());
  EXPECT_THROW(sliding_windows(g, 90, 60), std::invalid_argument);
}

TEST(SlidingWindows, CountFormula) {
  for (std::size_t n : {5u, 17u, 40u})
    for (int width : {1, 3, 5})
      for (int hop : {1, 2, 5}) {
        const auto g = grid(std::vector<double>(n, 1.0));
        const std::size_t expect = n >= static_cast<std::size_t>(width) ? (n - width) / hop + 1 : 0;
        EXPECT_EQ(sliding_windows(g, 60 * width, 60 * hop).size(), expect);
      }
}

TEST(Split, RoundsAndClamps) {
  auto sizes = [](std::size_t n, double r) {
    const auto [a, b] = split_train_test(grid(std::vector<double>(n, 0.0)), r);
    return std::pair{a.size(), b.size()};
  };
  EXPECT_EQ(sizes(10, 0.7), (std::pair<std::size_t, std::size_t>{7, 3}));
  EXPECT_EQ(sizes(3, 0.7), (std::pair<std::size_t, std::size_t>{2, 1}));
  EXPECT_EQ(sizes(2, 0.5), (std::pair<std::size_t, std::size_t>{1, 1}));
  EXPECT_THROW(sizes(1, 0.5), std::invalid_argument);
  EXPECT_THROW(sizes(10, 1.0), std::invalid_argument);
  const auto [train, test] = split_train_test(grid({1, 2, 3, 4}), 0.5);
  EXPECT_EQ(train.points.back().value, 2);
  EXPECT_EQ(test.points.front().value, 3);
}

TEST(Difference, Definition) {
  EXPECT_EQ(difference(std::vector<double>{1, 3, 6}, 1), (std::vector<double>{2, 3}));
  EXPECT_EQ(difference(std::vector<double>{1, 3, 6, 10}, 2), (std::vector<double>{1, 1}));
  EXPECT_EQ(difference(std::vector<double>{4, 5}, 0), (std::vector<double>{4, 5}));
  EXPECT_THROW(difference(std::vector<double>{1, 2}, 2), std::invalid_argument);
  EXPECT_EQ(seasonal_difference(std::vector<double>{1, 2, 4, 7}, 2, 1), (std::vector<double>{3, 5}));
}

TEST(Difference, InvertsCumulativeSum) {
  const auto x = white_noise(200, 5);
  std::vector<double> c(x.size());
  std::partial_sum(x.begin(), x.end(), c.begin());
  const auto d = difference(c, 1);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d[i], x[i + 1], 1e-12);
}

TEST(Acf, MatchesDirectSummation) {
  const auto s = sine(64, 8.0);
  const auto r = acf(s, 32);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  for (int k = 0; k <= 32; ++k) EXPECT_NEAR(r[static_cast<std::size_t>(k)], naive_acf(s, k), 1e-12);
  const auto best = std::max_element(r.begin() + 2, r.end()) - r.begin();
  EXPECT_EQ(best, 8);
}

TEST(Acf, WhiteNoiseIsSmall) {
  const auto x = white_noise(1000, 99);
  const auto r = acf(x, 20);
  for (int k = 1; k <= 20; ++k) {
    EXPECT_LT(std::abs(r[static_cast<std::size_t>(k)]), 0.1);
    EXPECT_NEAR(r[static_cast<std::size_t>(k)], naive_acf(x, k), 1e-12);
  }
}

TEST(Acf, AffineInvariantAndRejectsConstant) {
  const auto x = white_noise(300, 4);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 3.5 * x[i] - 12.0;
  const auto rx = acf(x, 15), ry = acf(y, 15);
  for (std::size_t k = 0; k < rx.size(); ++k) EXPECT_NEAR(rx[k], ry[k], 1e-12);
  EXPECT_THROW(acf(std::vector<double>(10, 2.0), 3), std::invalid_argument);
}

TEST(EstimatePeriod, Sine) {
  const auto s = sine(64, 8.0);
  EXPECT_EQ(estimate_period(s, PeriodMethod::Acf), 8);
  EXPECT_EQ(estimate_period(s, PeriodMethod::Periodogram), 8);
}

TEST(EstimatePeriod, WhiteNoiseHasNoPeriod) {
  int acf_hits = 0, dft_hits = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto x = white_noise(256, seed);
    acf_hits += estimate_period(x, PeriodMethod::Acf) != 0;
    dft_hits += estimate_period(x, PeriodMethod::Periodogram) != 0;
  }
  // Both tests run at a 5% family-wise level.
  EXPECT_LE(acf_hits, 3);
  EXPECT_LE(dft_hits, 3);
}

TEST(EstimatePeriod, DominantComponentWins) {
  const auto slow = sine(600, 60.0, 10.0);
  const auto fast = sine(600, 6.0, 1.0);
  std::vector<double> x(600);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = slow[i] + fast[i];
  EXPECT_EQ(estimate_period(x, PeriodMethod::Periodogram), 60);
}

TEST(Periodogram, MatchesDirectDft) {
  const auto x = white_noise(50, 8);
  const auto p = periodogram(x);
  ASSERT_EQ(p.size(), 26u);
  for (std::size_t k = 0; k < p.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double a = 2.0 * M_PI * static_cast<double>(k * t) / 50.0;
      re += x[t] * std::cos(a);
      im -= x[t] * std::sin(a);
    }
    EXPECT_NEAR(p[k], re * re + im * im, 1e-9 * (1.0 + p[k]));
  }
}

TEST(Rms, Values) {
  EXPECT_NEAR(rms(std::vector<double>{3, 4}), std::sqrt(12.5), 1e-15);
  EXPECT_EQ(rms(std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(rms(std::vector<double>{-2.5, -2.5, -2.5}), 2.5);
  EXPECT_THROW(rms(std::vector<double>{}), std::invalid_argument);
}

TEST(Standardize, Conventions) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 5, 3, 5;
  const auto [z, st] = standardize(m);
  EXPECT_DOUBLE_EQ(z(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(z(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(z(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(st.scale(1), 1.0);
  const auto [zz, st2] = standardize(z);
  EXPECT_LT((zz - z).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, InverseRoundTrip) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Random(40, 4) * 100.0;
  m.col(2).setConstant(7.0);
  const auto [z, st] = standardize(m);
  EXPECT_LT((st.invert(z) - m).cwiseAbs().maxCoeff(), 1e-12 * 100.0);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.99), 9.9);
}

}  // namespace
}  // namespace txsentry
