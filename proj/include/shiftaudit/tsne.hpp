#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shiftaudit/execution.hpp"

namespace shiftaudit {

/// Exact (O(n^2)) t-SNE settings. Defaults are the customary ones from the
/// original t-SNE description: perplexity 30, 1000 iterations, exaggeration
/// 12 for 250 iterations, learning rate 200, momentum 0.5 -> 0.8 at 250.
struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double exaggeration_factor = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double momentum_early = 0.5;
  double momentum_late = 0.8;
  int momentum_switch_iter = 250;
  std::uint64_t seed = 0;
  double entropy_tol = 1e-5;
  int max_bisection_steps = 50;
  double init_std = 1e-4;
  int checkpoint_every = 50;
  Execution execution = Execution::parallel;
};

struct RowCalibration {
  double sigma = 1.0;
  std::vector<double> p;  // normalized conditional probabilities
  double perplexity = 0.0;  // 2^H achieved
  bool converged = false;
  int steps = 0;
};

/// Finds the Gaussian bandwidth for one point by bisection on log(sigma) so
/// that 2^H(p) matches `perplexity` within tol * perplexity.
/// Requires at least two finite nonnegative distances and perplexity no
/// larger than their count. When the bracket cannot be closed within
/// `max_steps` the best row found is returned with converged = false.
RowCalibration calibrate_row(std::span<const double> sq_dists, double perplexity, double tol,
                             int max_steps);

struct JointAffinities {
  Eigen::MatrixXd p;           // symmetric, zero diagonal, sums to 1
  std::vector<double> sigmas;  // per-row bandwidths
  std::vector<double> achieved_perplexity;
  std::size_t unconverged_rows = 0;
};

/// Symmetrized affinities P = (P_cond + P_cond^T) / 2n with off-diagonal
/// entries floored at 1e-12 before renormalization. Requires n >= 4 and
/// perplexity < n - 1.
JointAffinities joint_affinities(const Eigen::MatrixXd& vectors, const TsneConfig& config);

struct KlResult {
  double kl = 0.0;
  Eigen::MatrixXd gradient;  // n x 2
};

/// KL(P || Q) with Student-t (one degree of freedom) Q and its gradient
/// 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1.
/// P must be symmetric; Y is n x 2 and finite.
KlResult kl_and_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                         Execution exec = Execution::parallel);

struct KlCheckpoint {
  int iteration = 0;
  double kl = 0.0;
};

struct Projection {
  std::vector<std::string> ids;
  Eigen::MatrixXd coords;  // n x 2, row i belongs to ids[i]
  double final_kl = 0.0;
  TsneConfig config;
  std::vector<KlCheckpoint> kl_trace;  // post-exaggeration checkpoints
  std::size_t unconverged_rows = 0;
};

/// Runs gradient descent with momentum, per-coordinate gains and early
/// exaggeration from a seeded N(0, init_std^2) start. Deterministic for a
/// given config.
Projection tsne_embed(const Eigen::MatrixXd& vectors, std::vector<std::string> ids,
                      const TsneConfig& config = {});

}  // namespace shiftaudit
