#include <gtest/gtest.h>

#include <cmath>

#include "shiftaudit/frechet.hpp"
#include "shiftaudit/synth.hpp"
#include "test_util.hpp"

using namespace shiftaudit;

namespace {

GaussianSummary summary(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  GaussianSummary s;
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  s.n = 100;
  return s;
}

CohortSpec cohort(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  CohortSpec c;
  c.mean = std::move(mean);
  c.covariance = std::move(cov);
  return c;
}

Eigen::MatrixXd random_spd(Eigen::Index d, std::uint64_t seed) {
  const auto a = testutil::gaussian_matrix(d, d, seed);
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST(Frechet, IdenticalSummariesGiveExactZero) {
  const auto cov = random_spd(6, 1);
  const auto s = summary(Eigen::VectorXd::Ones(6), cov);
  EXPECT_EQ(frechet_distance(s, s), 0.0);
}

TEST(Frechet, OneDimensionalMeanShift) {
  const auto a = summary(Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Identity(1, 1));
  const auto b = summary(Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_NEAR(frechet_distance(a, b), 9.0, 1e-9);
}

TEST(Frechet, SwappedDiagonalCovariances) {
  // (1 - 2)^2 + (2 - 1)^2 = 2 for sqrt-diagonals (1, 2) and (2, 1).
  const auto a = summary(Eigen::VectorXd::Zero(2), Eigen::Vector2d(1, 4).asDiagonal());
  const auto b = summary(Eigen::VectorXd::Zero(2), Eigen::Vector2d(4, 1).asDiagonal());
  EXPECT_NEAR(frechet_distance(a, b), 2.0, 1e-9);
}

TEST(Frechet, AgreesWithNonSymmetricEigenRoute) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(seed % 7);
    const auto ca = random_spd(d, 100 + seed);
    const auto cb = random_spd(d, 200 + seed);
    const Eigen::VectorXd ma = testutil::gaussian_matrix(d, 1, 300 + seed);
    const Eigen::VectorXd mb = testutil::gaussian_matrix(d, 1, 400 + seed);
    const double ours = frechet_distance(summary(ma, ca), summary(mb, cb));
    const double oracle = closed_form_fd(cohort(ma, ca), cohort(mb, cb));
    EXPECT_NEAR(ours, oracle, 1e-8 * std::max(1.0, oracle)) << "seed " << seed;
  }
}

TEST(Frechet, SymmetricInArguments) {
  const auto a = summary(Eigen::VectorXd::Zero(4), random_spd(4, 7));
  const auto b = summary(Eigen::VectorXd::Ones(4), random_spd(4, 8));
  EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-10);
}

TEST(Frechet, SqrtmSquaresBack) {
  const auto m = random_spd(8, 9);
  const auto r = sqrtm_psd(m);
  EXPECT_LT((r * r - m).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((r - r.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::MatrixXd asym = m;
  asym(0, 1) += 1.0;
  EXPECT_THROW(sqrtm_psd(asym), std::invalid_argument);
}

TEST(Frechet, FitGaussianAddsRidge) {
  const auto x = testutil::gaussian_matrix(50, 3, 10);
  const auto s = fit_gaussian(x, 1e-3);
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / 49.0;
  const double ridge = 1e-3 * cov.trace() / 3.0;
  EXPECT_NEAR(s.ridge, ridge, 1e-15);
  EXPECT_LT((s.covariance - cov - ridge * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(fit_gaussian(x.topRows(1)), std::invalid_argument);
}

TEST(Frechet, BootstrapDeterministicAcrossExecution) {
  const auto a = testutil::gaussian_matrix(200, 4, 11);
  const auto b = testutil::gaussian_matrix(150, 4, 12, 1.0, 0.5);
  BootstrapOptions opts;
  opts.resamples = 64;
  opts.seed = 5;
  opts.execution = Execution::serial;
  const auto s = bootstrap_frechet(a, b, opts);
  opts.execution = Execution::parallel;
  const auto p = bootstrap_frechet(a, b, opts);
  EXPECT_EQ(s.boot, p.boot);
  EXPECT_EQ(s.point, p.point);
  EXPECT_LE(s.ci_lo, s.ci_hi);
  EXPECT_EQ(s.boot.size(), 64u);
}

TEST(Frechet, BootstrapRejectsTooFewResamplesAndWarnsOnSmallCohorts) {
  const auto a = testutil::gaussian_matrix(20, 4, 13);
  BootstrapOptions opts;
  opts.resamples = 1;
  EXPECT_THROW(bootstrap_frechet(a, a, opts), std::invalid_argument);
  opts.resamples = 10;
  const auto small = testutil::gaussian_matrix(3, 4, 14);
  EXPECT_FALSE(bootstrap_frechet(a, small, opts).warnings.empty());
}

TEST(Frechet, ZTestMatchesFormula) {
  FrechetReport r1;
  FrechetReport r2;
  r1.cohort = "near";
  r2.cohort = "far";
  r1.boot = {1.0, 1.2, 0.9, 1.1};
  r2.boot = {3.0, 3.5, 2.5, 3.1};
  const double m1 = 4.2 / 4;
  const double m2 = 12.1 / 4;
  double v1 = 0.0;
  double v2 = 0.0;
  for (double x : r1.boot) v1 += (x - m1) * (x - m1);
  for (double x : r2.boot) v2 += (x - m2) * (x - m2);
  const double z = (m1 - m2) / std::sqrt(v1 / 3 + v2 / 3);
  const auto t = shift_z_test(r1, r2);
  EXPECT_NEAR(t.z, z, 1e-12);
  EXPECT_NEAR(t.p, std::erfc(std::abs(z) / std::sqrt(2.0)), 1e-15);
  EXPECT_EQ(t.pair_a, "near");
  EXPECT_EQ(t.pair_b, "far");
  r2.boot = {2.0, 2.0};
  r1.boot = {1.0, 1.0};
  EXPECT_THROW(shift_z_test(r1, r2), std::invalid_argument);
}
