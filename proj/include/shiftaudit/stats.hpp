#pragma once

#include <span>
#include <vector>

namespace shiftaudit::stats {

double mean(std::span<const double> values);

/// Unbiased sample variance (divisor n-1). Requires at least two values.
double sample_variance(std::span<const double> values);

/// Linear-interpolation percentile (q in [0,100]) of unsorted values.
double percentile(std::vector<double> values, double q);

/// Median via percentile(values, 50).
double median(std::vector<double> values);

/// Standard normal CDF.
double normal_cdf(double z);

/// 2 * (1 - Phi(|z|)), computed through erfc to keep precision in the tail.
double two_sided_p(double z);

struct PercentileInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// 2.5 / 97.5 percentile interval.
PercentileInterval percentile_ci95(const std::vector<double>& values);

}  // namespace shiftaudit::stats
