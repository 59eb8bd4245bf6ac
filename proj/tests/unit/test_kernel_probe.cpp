#include <gtest/gtest.h>

#include <cmath>

#include "shiftaudit/error.hpp"
#include "shiftaudit/kernel_probe.hpp"
#include "shiftaudit/synth.hpp"
#include "test_util.hpp"

using namespace shiftaudit;

namespace {

struct Problem {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::vector<double> t;
};

Problem make_problem(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Problem p;
  p.x = testutil::gaussian_matrix(n, d, seed);
  Rng rng(seed + 1000);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = p.x(i, 0) + 0.5 * p.x(i, 1) + 0.3 * rng.normal();
    p.y.push_back(s >= 0.0 ? 1 : -1);
    p.t.push_back(std::sin(p.x(i, 0)) + 0.1 * rng.normal());
  }
  if (std::count(p.y.begin(), p.y.end(), 1) == 0) p.y[0] = 1;
  if (std::count(p.y.begin(), p.y.end(), -1) == 0) p.y[0] = -1;
  return p;
}

std::span<const double> row_span(const Eigen::MatrixXd& rows_major_copy, Eigen::Index i) {
  return {rows_major_copy.col(i).data(), static_cast<std::size_t>(rows_major_copy.rows())};
}

}  // namespace

TEST(KernelProbe, RbfDefinition) {
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{2.0, 0.0};
  EXPECT_DOUBLE_EQ(rbf(a, b, {0.5}), std::exp(-0.5 * 5.0));
  EXPECT_THROW(rbf(a, std::vector<double>{1.0}, {0.5}), std::invalid_argument);
  EXPECT_THROW(rbf(a, b, {0.0}), std::invalid_argument);
}

TEST(KernelProbe, ScaleGammaUsesMeanFeatureVariance) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 2, 0, 0, 4, 2, 4;  // population variances 1 and 4
  EXPECT_DOUBLE_EQ(resolve_gamma(GammaMode::scale(), x), 1.0 / (2 * 2.5));
  EXPECT_DOUBLE_EQ(resolve_gamma(GammaMode::scale(3.0), x), 3.0 / (2 * 2.5));
  EXPECT_DOUBLE_EQ(resolve_gamma(GammaMode::fixed_value(0.7), x), 0.7);
}

TEST(KernelProbe, SvcMatchesQpOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = make_problem(20, 3, seed);
    TrainConfig cfg;
    cfg.c = 1.0;
    cfg.tol = 1e-6;
    cfg.gamma = GammaMode::fixed_value(0.5);
    const auto m = train_svc(p.x, p.y, cfg);
    ASSERT_TRUE(m.converged);
    const auto q = qp_oracle_svc(p.x, p.y, 1.0, 0.5);
    EXPECT_NEAR(m.dual_objective, q.objective, 2e-3) << "seed " << seed;
    for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
      const Eigen::VectorXd pt = p.x.row(i).transpose();
      const auto ours = predict_class(m, std::span<const double>(pt.data(), 3));
      const double oracle = oracle_predict(q, p.x, pt);
      if (std::abs(oracle) > 1e-3) EXPECT_EQ(ours.decision_value >= 0.0, oracle >= 0.0);
    }
  }
}

TEST(KernelProbe, SvrMatchesQpOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = make_problem(20, 2, 50 + seed);
    TrainConfig cfg;
    cfg.c = 1.0;
    cfg.epsilon = 0.1;
    cfg.tol = 1e-6;
    cfg.gamma = GammaMode::fixed_value(0.8);
    const auto m = train_svr(p.x, p.t, cfg);
    ASSERT_TRUE(m.converged);
    const auto q = qp_oracle_svr(p.x, p.t, 1.0, 0.1, 0.8);
    EXPECT_NEAR(m.dual_objective, q.objective, 2e-3) << "seed " << seed;
    const Eigen::VectorXd pt = Eigen::VectorXd::Constant(2, 0.3);
    EXPECT_NEAR(predict_value(m, std::span<const double>(pt.data(), 2)), oracle_predict(q, p.x, pt), 1e-3);
  }
}

TEST(KernelProbe, SvcSeparatesSeparableData) {
  Eigen::MatrixXd x(40, 2);
  x.topRows(20) = testutil::gaussian_matrix(20, 2, 3, 0.3, -2.0);
  x.bottomRows(20) = testutil::gaussian_matrix(20, 2, 4, 0.3, 2.0);
  std::vector<int> y(40, -1);
  std::fill(y.begin() + 20, y.end(), 1);
  const auto m = train_svc(x, y, {});
  const auto dv = decision_values(m, x);
  for (Eigen::Index i = 0; i < 40; ++i) EXPECT_EQ(dv[i] >= 0.0, y[static_cast<std::size_t>(i)] == 1);
  // Dual feasibility: |coef| <= C and sum of coefs = 0.
  EXPECT_NEAR(m.dual_coefs.sum(), 0.0, 1e-9);
  EXPECT_LE(m.dual_coefs.cwiseAbs().maxCoeff(), m.c + 1e-12);
}

TEST(KernelProbe, SingleClassIsADataError) {
  const auto x = testutil::gaussian_matrix(5, 2, 1);
  const std::vector<int> y(5, 1);
  EXPECT_THROW(train_svc(x, y, {}), DataError);
  EXPECT_THROW(train_svc(x, std::vector<int>{1, -1, 2, 1, 1}, {}), std::invalid_argument);
}

TEST(KernelProbe, BatchPredictionsEqualSinglePredictionsBitwise) {
  const auto p = make_problem(60, 4, 9);
  const auto m = train_svc(p.x, p.y, {});
  const auto s = train_svr(p.x, p.t, {});
  const Eigen::MatrixXd xt = p.x.transpose();
  const auto dv = decision_values(m, p.x, Execution::parallel);
  const auto pv = predict_values(s, p.x, Execution::serial);
  for (Eigen::Index i = 0; i < 60; ++i) {
    EXPECT_EQ(dv[i], predict_class(m, row_span(xt, i)).decision_value);
    EXPECT_EQ(pv[i], predict_value(s, row_span(xt, i)));
  }
  EXPECT_EQ(predict_class(m, row_span(xt, 0)).label, dv[0] >= 0.0 ? "+1" : "-1");
}

TEST(KernelProbe, TrainingIsDeterministicAcrossExecutionAndCacheMode) {
  const auto p = make_problem(120, 5, 10);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.execution = Execution::serial;
  const auto a = train_svc(p.x, p.y, cfg);
  cfg.execution = Execution::parallel;
  const auto b = train_svc(p.x, p.y, cfg);
  cfg.full_cache_limit = 10;  // force the LRU row cache
  cfg.cache_rows = 7;
  const auto c = train_svc(p.x, p.y, cfg);
  EXPECT_TRUE(testutil::bit_identical(a.dual_coefs, b.dual_coefs));
  EXPECT_TRUE(testutil::bit_identical(a.dual_coefs, c.dual_coefs));
  EXPECT_EQ(a.bias, c.bias);
  EXPECT_EQ(a.iterations, c.iterations);
}

TEST(KernelProbe, KernelCacheRowsMatchGram) {
  const auto x = testutil::gaussian_matrix(30, 3, 11);
  KernelCache full(x, 0.4, 100, 4, Execution::serial);
  KernelCache lru(x, 0.4, 10, 4, Execution::serial);
  EXPECT_TRUE(full.is_full());
  EXPECT_FALSE(lru.is_full());
  for (Eigen::Index i : {0, 5, 7, 0, 29, 5, 13}) {
    const auto a = full.row(i);
    const auto b = lru.row(i);
    for (std::size_t j = 0; j < 30; ++j) EXPECT_EQ(a[j], b[j]);
  }
  EXPECT_LE(lru.computed_rows(), 7u);
}

TEST(KernelProbe, IterationCapReportsNonConvergence) {
  const auto p = make_problem(80, 3, 12);
  TrainConfig cfg;
  cfg.max_iter = 3;
  const auto m = train_svc(p.x, p.y, cfg);
  EXPECT_FALSE(m.converged);
  EXPECT_EQ(m.iterations, 3u);
}

TEST(KernelProbe, GridSearchIsDeterministic) {
  const auto p = make_problem(60, 3, 13);
  const auto a = grid_search_svc(p.x, p.y, {}, 3);
  const auto b = grid_search_svc(p.x, p.y, {}, 3);
  ASSERT_EQ(a.cells.size(), 9u);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(a.cells[k].score, b.cells[k].score);
  EXPECT_EQ(a.best.c, b.best.c);
  const auto r = grid_search_svr(p.x, p.t, {}, 3);
  EXPECT_EQ(r.cells.size(), 9u);
  double best = -1e300;
  for (const auto& cell : r.cells) best = std::max(best, cell.score);
  bool found = false;
  for (const auto& cell : r.cells) {
    if (cell.score == best && cell.c == r.best.c && r.best.gamma.value == cell.gamma_multiplier) found = true;
  }
  EXPECT_TRUE(found);
}
