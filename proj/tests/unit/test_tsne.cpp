#include <gtest/gtest.h>

#include <cmath>

#include "shiftaudit/kernels.hpp"
#include "shiftaudit/tsne.hpp"
#include "test_util.hpp"

using namespace shiftaudit;
using namespace shiftaudit::kernels;

namespace {

// Perplexity of a distribution computed directly from its entropy in bits.
double perplexity_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return std::exp2(h);
}

// KL(P||Q) straight from the definition, used for finite differences.
double naive_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  const Eigen::Index n = y.rows();
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) z += 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
    }
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm()) / z;
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  }
  return kl;
}

}  // namespace

TEST(Tsne, CalibrateRowHitsTargetPerplexity) {
  const auto x = testutil::gaussian_matrix(80, 5, 1);
  const auto d = squared_distances(x, Execution::serial);
  for (Eigen::Index i = 0; i < 80; ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < 80; ++j) {
      if (j != i) row.push_back(d(i, j));
    }
    const auto cal = calibrate_row(row, 15.0, 1e-5, 200);
    ASSERT_TRUE(cal.converged);
    EXPECT_NEAR(perplexity_of(cal.p), 15.0, 15.0 * 1e-5);
    EXPECT_NEAR(cal.perplexity, perplexity_of(cal.p), 1e-9);
    double sum = 0.0;
    for (double v : cal.p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Tsne, CalibrateRowEdgeCases) {
  const std::vector<double> equal(10, 2.5);
  const auto cal = calibrate_row(equal, 10.0, 1e-5, 50);
  EXPECT_TRUE(cal.converged);
  for (double v : cal.p) EXPECT_NEAR(v, 0.1, 1e-12);
  EXPECT_THROW(calibrate_row(equal, 11.0, 1e-5, 50), std::invalid_argument);
  EXPECT_THROW(calibrate_row(std::vector<double>{1.0}, 1.0, 1e-5, 50), std::invalid_argument);
  EXPECT_THROW(calibrate_row(std::vector<double>{1.0, -1.0}, 1.0, 1e-5, 50), std::invalid_argument);
  // Large distance scale must not underflow every affinity.
  std::vector<double> big{1e6, 1e6 + 1, 1e6 + 2, 1e6 + 3, 1e6 + 4};
  const auto b = calibrate_row(big, 3.0, 1e-5, 200);
  EXPECT_TRUE(b.converged);
  EXPECT_NEAR(perplexity_of(b.p), 3.0, 3e-5);
}

TEST(Tsne, JointAffinitiesAreSymmetricAndNormalized) {
  const auto x = testutil::gaussian_matrix(40, 3, 2);
  TsneConfig cfg;
  cfg.perplexity = 8.0;
  const auto j = joint_affinities(x, cfg);
  EXPECT_NEAR(j.p.sum(), 1.0, 1e-12);
  EXPECT_LT((j.p - j.p.transpose()).cwiseAbs().maxCoeff(), 1e-18);
  for (Eigen::Index i = 0; i < 40; ++i) EXPECT_EQ(j.p(i, i), 0.0);
  cfg.perplexity = 39.0;
  EXPECT_THROW(joint_affinities(x, cfg), std::invalid_argument);
}

TEST(Tsne, GradientMatchesCentralDifferences) {
  const auto x = testutil::gaussian_matrix(30, 4, 3);
  TsneConfig cfg;
  cfg.perplexity = 6.0;
  const auto p = joint_affinities(x, cfg).p;
  Eigen::MatrixXd y = testutil::gaussian_matrix(30, 2, 4);
  const auto g = kl_and_gradient(p, y, Execution::serial);
  EXPECT_NEAR(g.kl, naive_kl(p, y), 1e-12);
  const double h = 1e-5;
  double max_rel = 0.0;
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) {
      Eigen::MatrixXd yp = y;
      Eigen::MatrixXd ym = y;
      yp(i, k) += h;
      ym(i, k) -= h;
      const double fd = (naive_kl(p, yp) - naive_kl(p, ym)) / (2 * h);
      max_rel = std::max(max_rel, std::abs(fd - g.gradient(i, k)) / std::max(1e-8, std::abs(fd)));
    }
  }
  EXPECT_LT(max_rel, 1e-4);
}

TEST(Tsne, KlGradientRejectsBadInput) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 4, 1.0 / 12);
  p.diagonal().setZero();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(4, 2);
  y(0, 0) = std::nan("");
  EXPECT_THROW(kl_and_gradient(p, y), std::invalid_argument);
  y(0, 0) = 0.0;
  p(0, 1) += 0.1;
  EXPECT_THROW(kl_and_gradient(p, y), std::invalid_argument);
}

TEST(Tsne, EmbedIsDeterministicAndExecutionIndependent) {
  const auto x = testutil::gaussian_matrix(60, 5, 5);
  std::vector<std::string> ids;
  for (int i = 0; i < 60; ++i) ids.push_back("p" + std::to_string(i));
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  cfg.iterations = 300;
  cfg.seed = 7;
  cfg.execution = Execution::serial;
  const auto a = tsne_embed(x, ids, cfg);
  const auto b = tsne_embed(x, ids, cfg);
  cfg.execution = Execution::parallel;
  const auto c = tsne_embed(x, ids, cfg);
  EXPECT_TRUE(testutil::bit_identical(a.coords, b.coords));
  EXPECT_TRUE(testutil::bit_identical(a.coords, c.coords));
  EXPECT_EQ(a.final_kl, c.final_kl);
  EXPECT_EQ(a.ids, ids);
  cfg.seed = 8;
  EXPECT_FALSE(testutil::bit_identical(a.coords, tsne_embed(x, ids, cfg).coords));
}

TEST(Tsne, KlTraceIsNonIncreasingAfterExaggeration) {
  Eigen::MatrixXd x(200, 4);
  x.topRows(100) = testutil::gaussian_matrix(100, 4, 6);
  x.bottomRows(100) = testutil::gaussian_matrix(100, 4, 7, 1.0, 6.0);
  std::vector<std::string> ids(200, "");
  for (int i = 0; i < 200; ++i) ids[static_cast<std::size_t>(i)] = std::to_string(i);
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  const auto proj = tsne_embed(x, ids, cfg);
  ASSERT_GE(proj.kl_trace.size(), 10u);
  EXPECT_GE(proj.kl_trace.front().iteration, cfg.exaggeration_iters);
  for (std::size_t k = 1; k < proj.kl_trace.size(); ++k) {
    EXPECT_LE(proj.kl_trace[k].kl, proj.kl_trace[k - 1].kl + 1e-6) << "checkpoint " << k;
  }
  EXPECT_LE(proj.final_kl, proj.kl_trace.back().kl + 1e-3);
}
