#include "shiftaudit/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "shiftaudit/kernels.hpp"
#include "shiftaudit/rng.hpp"

namespace shiftaudit {
namespace {

constexpr double kAffinityFloor = 1e-12;

// Row entropy (bits) and normalized probabilities for bandwidth exp(log_sigma),
// over distances already shifted so that their minimum is 0.
double row_entropy(std::span<const double> shifted, double log_sigma, std::vector<double>& p) {
  const double beta = 0.5 * std::exp(-2.0 * log_sigma);
  double sum = 0.0;
  double weighted = 0.0;
  for (std::size_t j = 0; j < shifted.size(); ++j) {
    p[j] = std::exp(-beta * shifted[j]);
    sum += p[j];
    weighted += shifted[j] * p[j];
  }
  for (double& v : p) v /= sum;
  const double nats = std::log(sum) + beta * weighted / sum;
  return nats / std::numbers::ln2;
}

}  // namespace

RowCalibration calibrate_row(std::span<const double> sq_dists, double perplexity, double tol,
                             int max_steps) {
  const std::size_t m = sq_dists.size();
  if (m < 2) throw std::invalid_argument("calibrate_row needs at least two distances");
  if (!(perplexity >= 1.0) || perplexity > static_cast<double>(m)) {
    throw std::invalid_argument("calibrate_row: perplexity must lie in [1, number of neighbours]");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("calibrate_row: tol must be positive");
  double dmin = std::numeric_limits<double>::infinity();
  for (double d : sq_dists) {
    if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("calibrate_row: distances must be finite and nonnegative");
    dmin = std::min(dmin, d);
  }
  std::vector<double> shifted(m);
  double gap = std::numeric_limits<double>::infinity();
  double smax = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    shifted[j] = sq_dists[j] - dmin;
    if (shifted[j] > 0.0) gap = std::min(gap, shifted[j]);
    smax = std::max(smax, shifted[j]);
  }

  RowCalibration out;
  out.p.assign(m, 0.0);
  const double target = std::log2(perplexity);
  auto close_enough = [&](double achieved) { return std::abs(achieved - perplexity) <= tol * perplexity; };

  if (smax == 0.0) {
    // Equidistant neighbours: every bandwidth gives the uniform row.
    std::fill(out.p.begin(), out.p.end(), 1.0 / static_cast<double>(m));
    out.perplexity = static_cast<double>(m);
    out.converged = close_enough(out.perplexity);
    return out;
  }

  std::vector<double> p(m);
  double best_err = std::numeric_limits<double>::infinity();
  auto evaluate = [&](double log_sigma) {
    ++out.steps;
    const double h = row_entropy(shifted, log_sigma, p);
    const double achieved = std::exp2(h);
    const double err = std::abs(achieved - perplexity);
    if (err < best_err) {
      best_err = err;
      out.p = p;
      out.sigma = std::exp(log_sigma);
      out.perplexity = achieved;
      out.converged = close_enough(achieved);
    }
    return h;
  };

  // Lower end: the nearest non-tied neighbour weighs ~exp(-700).
  double lo = 0.5 * std::log(gap / 1400.0);
  // Upper end: all weights within exp(-1/2000) of each other.
  double hi = 0.5 * std::log(smax * 1e3);
  if (evaluate(lo) > target) return out;  // ties at the minimum already exceed the target
  if (out.converged) return out;
  while (evaluate(hi) < target && !out.converged) {
    if (out.steps >= max_steps) return out;
    lo = hi;
    hi += 2.0;
  }
  while (!out.converged && out.steps < max_steps) {
    const double mid = 0.5 * (lo + hi);
    if (evaluate(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return out;
}

JointAffinities joint_affinities(const Eigen::MatrixXd& vectors, const TsneConfig& config) {
  const Eigen::Index n = vectors.rows();
  if (n < 4) throw std::invalid_argument("t-SNE needs at least 4 points");
  if (!(config.perplexity < static_cast<double>(n - 1))) {
    throw std::invalid_argument("perplexity must be smaller than n - 1");
  }
  const Eigen::MatrixXd sq = kernels::squared_distances(vectors, config.execution);

  JointAffinities out;
  out.sigmas.assign(static_cast<std::size_t>(n), 0.0);
  out.achieved_perplexity.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<char> converged(static_cast<std::size_t>(n), 0);
  Eigen::MatrixXd cond = Eigen::MatrixXd::Zero(n, n);

  auto row = [&](Eigen::Index i) {
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d.push_back(sq(j, i));
    }
    const auto cal = calibrate_row(d, config.perplexity, config.entropy_tol, config.max_bisection_steps);
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) cond(i, j) = cal.p[k++];
    }
    out.sigmas[static_cast<std::size_t>(i)] = cal.sigma;
    out.achieved_perplexity[static_cast<std::size_t>(i)] = cal.perplexity;
    converged[static_cast<std::size_t>(i)] = cal.converged ? 1 : 0;
  };
  if (config.execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index i = 0; i < n; ++i) row(i);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) row(i);
  }
  for (char c : converged) out.unconverged_rows += c ? 0 : 1;

  out.p = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out.p(i, j) = i == j ? 0.0 : std::max(out.p(i, j), kAffinityFloor);
    }
  }
  out.p /= out.p.sum();
  return out;
}

KlResult kl_and_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y, Execution exec) {
  if (p.rows() != p.cols() || p.rows() != y.rows() || y.cols() != 2) {
    throw std::invalid_argument("kl_and_gradient: expected n x n affinities and n x 2 layout");
  }
  if (!y.allFinite()) throw std::invalid_argument("kl_and_gradient: layout contains non-finite values");
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("kl_and_gradient: affinities must be symmetric");
  }
  auto r = kernels::student_t_kl_gradient(p, y, 1.0, exec);
  return {r.kl, std::move(r.gradient)};
}

Projection tsne_embed(const Eigen::MatrixXd& vectors, std::vector<std::string> ids,
                      const TsneConfig& config) {
  const Eigen::Index n = vectors.rows();
  if (static_cast<Eigen::Index>(ids.size()) != n) throw std::invalid_argument("tsne_embed: one id per row required");
  if (config.iterations < 1 || !(config.learning_rate > 0.0) || config.checkpoint_every < 1) {
    throw std::invalid_argument("tsne_embed: invalid iteration settings");
  }
  const auto aff = joint_affinities(vectors, config);

  Projection proj;
  proj.ids = std::move(ids);
  proj.config = config;
  proj.unconverged_rows = aff.unconverged_rows;

  Rng rng(config.seed);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = config.init_std * rng.normal();
    y(i, 1) = config.init_std * rng.normal();
  }
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);

  for (int iter = 0; iter < config.iterations; ++iter) {
    const bool exaggerate = iter < config.exaggeration_iters;
    const auto step = kernels::student_t_kl_gradient(aff.p, y, exaggerate ? config.exaggeration_factor : 1.0,
                                                     config.execution);
    if (!exaggerate && iter % config.checkpoint_every == 0) proj.kl_trace.push_back({iter, step.kl});
    const double momentum = iter < config.momentum_switch_iter ? config.momentum_early : config.momentum_late;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < 2; ++c) {
        const double g = step.gradient(i, c);
        double& gain = gains(i, c);
        gain = (g > 0.0) != (velocity(i, c) > 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, 0.01);
        velocity(i, c) = momentum * velocity(i, c) - config.learning_rate * gain * g;
        y(i, c) += velocity(i, c);
      }
    }
    const Eigen::RowVector2d centre = y.colwise().mean();
    y.rowwise() -= centre;
  }
  proj.final_kl = std::max(0.0, kernels::student_t_kl_gradient(aff.p, y, 1.0, config.execution).kl);
  proj.coords = std::move(y);
  return proj;
}

}  // namespace shiftaudit
