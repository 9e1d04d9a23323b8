#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "txsentry/kernels.hpp"

namespace txsentry {
namespace {

using testing::gaussian_rows;

double dual_objective(const Eigen::MatrixXd& g, const std::vector<double>& a) {
  const Eigen::Map<const Eigen::VectorXd> v(a.data(), static_cast<Eigen::Index>(a.size()));
  return 0.5 * v.dot(g * v);
}

TEST(KernelEval, Definitions) {
  Eigen::RowVectorXd x(2), y(2);
  x << 1, 2;
  y << 3, 4;
  EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::linear(), x, y), 11.0);
  EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::rbf(0.7), x, x), 1.0);
  EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::rbf(0.5), x, y), std::exp(-0.5 * 8.0));
  Eigen::RowVectorXd one(1);
  one << 1;
  EXPECT_DOUBLE_EQ(kernel_eval(KernelSpec::polynomial(2, 1.0), one, one), 4.0);
  EXPECT_THROW(kernel_eval(KernelSpec::linear(), x, one), std::invalid_argument);
  EXPECT_THROW(KernelSpec::rbf(0.0), std::invalid_argument);
  EXPECT_THROW(KernelSpec::polynomial(0, 1.0), std::invalid_argument);
}

TEST(Gram, SymmetricAndPositiveSemidefinite) {
  const auto x = gaussian_rows(5, 3, 21);
  for (const auto& spec : {KernelSpec::rbf(0.8), KernelSpec::linear()}) {
    const auto g = gram(spec, x);
    EXPECT_EQ(g, g.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  }
  const auto g = gram(KernelSpec::rbf(2.0), x);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g(i, i), 1.0);
  EXPECT_EQ(gram(KernelSpec::linear(), x.topRows(1)).size(), 1);
}

TEST(KernelRidge, InterpolatesInTheSmallLambdaLimit) {
  const auto x = gaussian_rows(8, 2, 5);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(8, -1.0, 3.0);
  const auto model = kernel_ridge_fit(x, y, KernelSpec::rbf(1.0), 1e-10);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(model.predict(x.row(i)), y(i), 1e-6);
  const auto zero = kernel_ridge_fit(x, Eigen::VectorXd::Zero(8), KernelSpec::rbf(1.0), 1.0);
  EXPECT_EQ(zero.predict(x.row(3)), 0.0);
}

TEST(KernelRidge, LinearKernelExtrapolates) {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  Eigen::VectorXd y(3);
  y << 2, 4, 6;
  const auto model = kernel_ridge_fit(x, y, KernelSpec::linear(), 1e-9);
  Eigen::RowVectorXd q(1);
  q << 4;
  // Dual solve by hand: G = x x', a = (G + lI)^-1 y ~ y / (14 + l) x; prediction 4 * 28 / 14.
  EXPECT_NEAR(model.predict(q), 8.0, 1e-3);
}

TEST(KernelRidge, RbfTranslationInvariance) {
  const auto x = gaussian_rows(30, 3, 8);
  const Eigen::VectorXd y = x.col(0) + 0.5 * x.col(1);
  Eigen::RowVectorXd shift(3);
  shift << 5, -2, 11;
  const Eigen::MatrixXd xs = x.rowwise() + shift;
  const auto a = kernel_ridge_fit(x, y, KernelSpec::rbf(0.4), 0.5);
  const auto b = kernel_ridge_fit(xs, y, KernelSpec::rbf(0.4), 0.5);
  const auto q = gaussian_rows(5, 3, 9);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(a.predict(q.row(i)), b.predict(q.row(i) + shift), 1e-9);
}

TEST(OneClass, IdenticalPairSplitsEvenly) {
  Eigen::MatrixXd x(2, 2);
  x << 1, 1, 1, 1;
  const auto fit = one_class_solve(x, KernelSpec::rbf(1.0), 1.0);
  EXPECT_DOUBLE_EQ(fit.alphas[0], 0.5);
  EXPECT_DOUBLE_EQ(fit.alphas[1], 0.5);
}

TEST(OneClass, MatchesGridSearchOracleOnThreePoints) {
  // Sum constraint leaves two free variables; scan them on a fine grid.
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.3, 4.0;
  const auto spec = KernelSpec::rbf(0.5);
  const double nu = 0.9, bound = 1.0 / (nu * 3.0);
  const auto g = gram(spec, x);
  const auto fit = one_class_solve(x, spec, nu, {1e-10, 100000});
  double best = std::numeric_limits<double>::infinity();
  const int steps = 2000;
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j) {
      const double a1 = bound * i / steps, a2 = bound * j / steps, a3 = 1.0 - a1 - a2;
      if (a3 < -1e-12 || a3 > bound + 1e-12) continue;
      best = std::min(best, dual_objective(g, {a1, a2, a3}));
    }
  const double obj = dual_objective(g, fit.alphas);
  EXPECT_LE(obj, best + 1e-12);
  EXPECT_GE(obj, best - 1e-3);
  EXPECT_LT(fit.model.decision(x.row(2)), std::min(fit.model.decision(x.row(0)), fit.model.decision(x.row(1))));
}

TEST(OneClass, FarOutlierScoresLowest) {
  Eigen::MatrixXd x = gaussian_rows(30, 2, 17, 0.1);
  x.row(29) << 8.0, 8.0;
  const auto model = one_class_fit(x, KernelSpec::rbf(0.5), 0.2);
  double cluster_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 29; ++i) cluster_min = std::min(cluster_min, model.decision(x.row(i)));
  EXPECT_LT(model.decision(x.row(29)), cluster_min);
  EXPECT_LT(model.decision(x.row(29)), 0.0);
}

TEST(OneClass, FeasibilityAndNuProperty) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto x = gaussian_rows(150, 2, seed);
    for (double nu : {0.05, 0.1, 0.3}) {
      const auto fit = one_class_solve(x, KernelSpec::rbf(default_rbf_gamma(x)), nu);
      const double bound = 1.0 / (nu * 150.0);
      double sum = 0.0;
      std::size_t sv = 0, outside = 0;
      for (int i = 0; i < 150; ++i) {
        const double a = fit.alphas[static_cast<std::size_t>(i)];
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, bound);
        sum += a;
        sv += a > 0.0;
        outside += fit.model.decision(x.row(i)) < 0.0;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_TRUE(fit.model.converged);
      EXPECT_LE(static_cast<double>(outside), nu * 150.0 + 2.0 + 1e-9);
      EXPECT_GE(static_cast<double>(sv), nu * 150.0 - 2.0 - 1e-9);
    }
  }
}

TEST(OneClass, DualObjectiveNeverIncreases) {
  const auto x = gaussian_rows(80, 3, 33);
  const auto fit = one_class_solve(x, KernelSpec::rbf(0.3), 0.1, {}, true);
  ASSERT_GT(fit.objective.size(), 1u);
  for (std::size_t i = 1; i < fit.objective.size(); ++i)
    EXPECT_LE(fit.objective[i], fit.objective[i - 1] + 1e-12);
}

TEST(OneClass, MarginSupportVectorSitsOnTheBoundary) {
  const auto x = gaussian_rows(60, 2, 4);
  const auto fit = one_class_solve(x, KernelSpec::rbf(0.5), 0.1);
  const double bound = 1.0 / (0.1 * 60.0);
  for (int i = 0; i < 60; ++i) {
    const double a = fit.alphas[static_cast<std::size_t>(i)];
    if (a > 1e-9 && a < bound - 1e-9) EXPECT_NEAR(fit.model.decision(x.row(i)), 0.0, 1e-3);
  }
}

TEST(OneClass, GammaSearchStaysOnGrid) {
  const auto x = gaussian_rows(60, 2, 12);
  const auto grid = power_of_two_grid(-5, 3);
  EXPECT_EQ(grid, (std::vector<double>{1.0 / 32, 1.0 / 8, 0.5, 2.0, 8.0}));
  const auto found = cross_validate_gamma(x, 0.1, grid, 3);
  EXPECT_NE(std::find(grid.begin(), grid.end(), found.gamma), grid.end());
  EXPECT_GE(found.held_out_outlier_fraction, 0.0);
}

TEST(DefaultGamma, Heuristic) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 2, 0, 0, 2, 2, 2;
  // Column variances are both 1.
  EXPECT_DOUBLE_EQ(default_rbf_gamma(x), 0.5);
}

}  // namespace
}  // namespace txsentry
