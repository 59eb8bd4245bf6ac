#include "shiftaudit/frechet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "shiftaudit/rng.hpp"
#include "shiftaudit/stats.hpp"

namespace shiftaudit {
namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, Rng& rng) {
  const auto n = static_cast<std::size_t>(m.rows());
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(static_cast<Eigen::Index>(rng.index(n)));
  return out;
}

}  // namespace

GaussianSummary fit_gaussian(const Eigen::MatrixXd& points, double ridge_scale) {
  if (points.rows() < 2) throw std::invalid_argument("fit_gaussian needs at least two points");
  if (!(ridge_scale >= 0.0)) throw std::invalid_argument("ridge_scale must be nonnegative");
  GaussianSummary s;
  s.n = static_cast<std::size_t>(points.rows());
  s.mean = points.colwise().mean().transpose();
  const Eigen::MatrixXd centered = points.rowwise() - s.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(points.rows() - 1);
  s.covariance = 0.5 * (cov + cov.transpose());
  const auto d = static_cast<double>(points.cols());
  s.ridge = d > 0 ? ridge_scale * s.covariance.trace() / d : 0.0;
  s.covariance.diagonal().array() += s.ridge;
  return s;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sqrtm_psd: matrix is not square");
  if (m.size() == 0) return m;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("sqrtm_psd: matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("sqrtm_psd: eigendecomposition failed");
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  Eigen::MatrixXd out = v * roots.asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows()) {
    throw std::invalid_argument("frechet_distance: dimension mismatch");
  }
  if (a.mean == b.mean && a.covariance == b.covariance) return 0.0;

  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd root_a = sqrtm_psd(a.covariance);
  Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigendecomposition failed");
  const double trace_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d2 = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_sqrt;
  return std::max(d2, 0.0);
}

FrechetReport bootstrap_frechet(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const BootstrapOptions& options) {
  if (options.resamples < 2) throw std::invalid_argument("bootstrap needs at least 2 resamples");
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("bootstrap_frechet: empty cohort");
  if (a.cols() != b.cols()) throw std::invalid_argument("bootstrap_frechet: dimension mismatch");

  FrechetReport report;
  report.resamples = options.resamples;
  report.seed = options.seed;
  const auto d = a.cols();
  if (a.rows() < d || b.rows() < d) {
    report.warnings.push_back("cohort smaller than dimension " + std::to_string(d) +
                              "; covariance is rank-deficient and relies on the ridge");
  }
  report.point = frechet_distance(fit_gaussian(a, options.ridge_scale), fit_gaussian(b, options.ridge_scale));

  report.boot.assign(static_cast<std::size_t>(options.resamples), 0.0);
  auto one = [&](int r) {
    Rng rng = Rng::stream(options.seed, static_cast<std::uint64_t>(r));
    const Eigen::MatrixXd ra = gather_rows(a, rng);
    const Eigen::MatrixXd rb = gather_rows(b, rng);
    report.boot[static_cast<std::size_t>(r)] =
        frechet_distance(fit_gaussian(ra, options.ridge_scale), fit_gaussian(rb, options.ridge_scale));
  };
  if (options.execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < options.resamples; ++r) one(r);
  } else {
    for (int r = 0; r < options.resamples; ++r) one(r);
  }
  const auto ci = stats::percentile_ci95(report.boot);
  report.ci_lo = ci.lo;
  report.ci_hi = ci.hi;
  return report;
}

ShiftTest shift_z_test(const FrechetReport& r1, const FrechetReport& r2) {
  if (r1.boot.size() < 2 || r2.boot.size() < 2) {
    throw std::invalid_argument("shift_z_test needs at least 2 resamples per report");
  }
  ShiftTest t;
  t.pair_a = r1.cohort;
  t.pair_b = r2.cohort;
  const double pooled = stats::sample_variance(r1.boot) + stats::sample_variance(r2.boot);
  if (!(pooled > 0.0)) throw std::invalid_argument("zero pooled variance");
  t.z = (stats::mean(r1.boot) - stats::mean(r2.boot)) / std::sqrt(pooled);
  t.p = stats::two_sided_p(t.z);
  return t;
}

}  // namespace shiftaudit
