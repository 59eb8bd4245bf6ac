#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shiftaudit/execution.hpp"

// Fréchet distance between Gaussian fits of embedding cohorts.
//
// Convention: every distance returned here is the *squared* Fréchet distance
//   d^2 = |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2),
// the same quantity FID reports. Take the square root yourself if you need
// the metric form.

namespace shiftaudit {

inline constexpr double kDefaultRidgeScale = 1e-6;

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // symmetric, ridge already on the diagonal
  std::size_t n = 0;
  double ridge = 0.0;  // value actually added to the diagonal
};

/// Column means and unbiased covariance of `points` (n x D, n >= 2). The
/// covariance is symmetrized, then ridge_scale * trace / D is added to its
/// diagonal.
GaussianSummary fit_gaussian(const Eigen::MatrixXd& points, double ridge_scale = kDefaultRidgeScale);

/// Principal square root of a symmetric PSD matrix through its
/// eigendecomposition; negative eigenvalues from round-off are clamped to 0.
/// Throws std::invalid_argument if `m` is asymmetric beyond 1e-10 (relative
/// to its largest entry).
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

/// Squared Fréchet distance, clamped at 0. Exactly 0 when both summaries are
/// identical.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

struct FrechetReport {
  std::string reference;  // cohort names, informational
  std::string cohort;
  double point = 0.0;             // distance between the full cohorts
  std::vector<double> boot;       // one distance per resample
  double ci_lo = 0.0;             // 2.5th percentile of boot
  double ci_hi = 0.0;             // 97.5th percentile of boot
  int resamples = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

struct BootstrapOptions {
  int resamples = 1000;
  std::uint64_t seed = 0;
  double ridge_scale = kDefaultRidgeScale;
  Execution execution = Execution::parallel;
};

/// Percentile bootstrap of the distance between two cohorts (rows are
/// samples). Resample r draws n_a rows of `a` then n_b rows of `b` with
/// replacement from stream (seed, r), so the result does not depend on how
/// resamples are scheduled.
FrechetReport bootstrap_frechet(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const BootstrapOptions& options = {});

struct ShiftTest {
  double z = 0.0;
  double p = 1.0;
  std::string pair_a;
  std::string pair_b;
};

/// Two-sided z-test on the difference of bootstrap means:
///   z = (mean(r1.boot) - mean(r2.boot)) / sqrt(var(r1.boot) + var(r2.boot)).
/// Negative z means r1's distance is smaller. Throws std::invalid_argument
/// for fewer than two resamples or zero pooled variance.
ShiftTest shift_z_test(const FrechetReport& r1, const FrechetReport& r2);

}  // namespace shiftaudit
