#pragma once

#include <span>

#include <Eigen/Dense>

#include "shiftaudit/execution.hpp"

// Data-parallel inner loops shared by the t-SNE, kernel-probe and Fréchet
// modules. Every kernel exists twice: `serial::` is the reference and
// `parallel::` distributes rows over OpenMP threads. Each output element is
// produced by the same scalar code in both, and cross-row reductions are
// summed in row order afterwards, so the two agree bit for bit.

namespace shiftaudit::kernels {

/// Squared Euclidean distance between two length-d arrays.
inline double squared_distance(const double* a, const double* b, Eigen::Index d) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

/// Result of one Student-t KL evaluation.
struct KlGradient {
  double kl = 0.0;
  Eigen::MatrixXd gradient;  // n x 2
};

namespace serial {

/// n x n matrix of squared distances between rows of `points` (n x D).
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points);

/// n x n RBF Gram matrix exp(-gamma * |xi - xj|^2).
Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double gamma);

/// Row `row` of the RBF Gram matrix written into `out` (length n).
void rbf_row(const Eigen::MatrixXd& points_by_column, Eigen::Index row, double gamma,
             std::span<double> out);

/// t-SNE objective and gradient for symmetric joint affinities `p` (n x n)
/// and a 2-d layout `y` (n x 2). `p_scale` multiplies every p_ij (early
/// exaggeration) without copying the matrix.
KlGradient student_t_kl_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                 double p_scale = 1.0);

}  // namespace serial

namespace parallel {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points);
Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double gamma);
void rbf_row(const Eigen::MatrixXd& points_by_column, Eigen::Index row, double gamma,
             std::span<double> out);
KlGradient student_t_kl_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                 double p_scale = 1.0);

}  // namespace parallel

// Dispatchers used by the modules.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points, Execution exec);
Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double gamma, Execution exec);
KlGradient student_t_kl_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                 double p_scale, Execution exec);

}  // namespace shiftaudit::kernels
