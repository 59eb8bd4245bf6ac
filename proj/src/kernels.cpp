#include "shiftaudit/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace shiftaudit {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace kernels {
namespace {

using Index = Eigen::Index;

// Guard for log(p/q) when the Student-t kernel underflows.
constexpr double kMinQ = 1e-300;

void check_layout(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  if (p.rows() != p.cols() || p.rows() != y.rows() || y.cols() != 2) {
    throw std::invalid_argument("student_t_kl_gradient: expected n x n affinities and n x 2 layout");
  }
}

inline double student_t(const Eigen::MatrixXd& y, Index i, Index j) {
  const double dx = y(i, 0) - y(j, 0);
  const double dy = y(i, 1) - y(j, 1);
  return 1.0 / (1.0 + dx * dx + dy * dy);
}

// Sum of the unnormalized Student-t kernel over row i (diagonal excluded).
inline double student_t_row_sum(const Eigen::MatrixXd& y, Index i) {
  double acc = 0.0;
  for (Index j = 0; j < y.rows(); ++j) {
    if (j != i) acc += student_t(y, i, j);
  }
  return acc;
}

// KL contribution and gradient of row i. Affinities are read from column i,
// which equals row i for symmetric P and is contiguous in memory.
inline double student_t_row_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                     double p_scale, double inv_z, Index i, double* grad) {
  double kl = 0.0;
  double gx = 0.0;
  double gy = 0.0;
  const double* p_col = p.col(i).data();
  for (Index j = 0; j < y.rows(); ++j) {
    if (j == i) continue;
    const double num = student_t(y, i, j);
    const double q = num * inv_z;
    const double pij = p_scale * p_col[j];
    if (pij > 0.0) kl += pij * std::log(pij / std::max(q, kMinQ));
    const double w = (pij - q) * num;
    gx += w * (y(i, 0) - y(j, 0));
    gy += w * (y(i, 1) - y(j, 1));
  }
  grad[0] = 4.0 * gx;
  grad[1] = 4.0 * gy;
  return kl;
}

}  // namespace

namespace serial {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd cols = points.transpose();
  const Index n = cols.cols();
  const Index d = cols.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double v = squared_distance(cols.col(i).data(), cols.col(j).data(), d);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double gamma) {
  const Eigen::MatrixXd cols = points.transpose();
  const Index n = cols.cols();
  const Index d = cols.rows();
  Eigen::MatrixXd out(n, n);
  for (Index i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v =
          std::exp(-gamma * squared_distance(cols.col(i).data(), cols.col(j).data(), d));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

void rbf_row(const Eigen::MatrixXd& points_by_column, Index row, double gamma,
             std::span<double> out) {
  const Index d = points_by_column.rows();
  const double* xi = points_by_column.col(row).data();
  for (Index j = 0; j < points_by_column.cols(); ++j) {
    out[static_cast<std::size_t>(j)] =
        j == row ? 1.0 : std::exp(-gamma * squared_distance(xi, points_by_column.col(j).data(), d));
  }
}

KlGradient student_t_kl_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                 double p_scale) {
  check_layout(p, y);
  const Index n = y.rows();
  double z = 0.0;
  for (Index i = 0; i < n; ++i) z += student_t_row_sum(y, i);
  const double inv_z = 1.0 / z;

  KlGradient result;
  result.gradient.resize(n, 2);
  std::vector<double> g(2);
  for (Index i = 0; i < n; ++i) {
    result.kl += student_t_row_gradient(p, y, p_scale, inv_z, i, g.data());
    result.gradient(i, 0) = g[0];
    result.gradient(i, 1) = g[1];
  }
  return result;
}

}  // namespace serial

namespace parallel {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd cols = points.transpose();
  const Index n = cols.cols();
  const Index d = cols.rows();
  Eigen::MatrixXd out(n, n);
  // Column j owns the pairs (i, j) with i < j, so the mirrored writes never
  // collide. Columns grow in length, hence the dynamic schedule.
#pragma omp parallel for schedule(dynamic, 16)
  for (Index j = 0; j < n; ++j) {
    const double* xj = cols.col(j).data();
    out(j, j) = 0.0;
    for (Index i = 0; i < j; ++i) {
      const double v = squared_distance(cols.col(i).data(), xj, d);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double gamma) {
  const Eigen::MatrixXd cols = points.transpose();
  const Index n = cols.cols();
  const Index d = cols.rows();
  Eigen::MatrixXd out(n, n);
#pragma omp parallel for schedule(dynamic, 16)
  for (Index j = 0; j < n; ++j) {
    const double* xj = cols.col(j).data();
    out(j, j) = 1.0;
    for (Index i = 0; i < j; ++i) {
      const double v = std::exp(-gamma * squared_distance(cols.col(i).data(), xj, d));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

void rbf_row(const Eigen::MatrixXd& points_by_column, Index row, double gamma,
             std::span<double> out) {
  const Index d = points_by_column.rows();
  const Index n = points_by_column.cols();
  const double* xi = points_by_column.col(row).data();
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < n; ++j) {
    out[static_cast<std::size_t>(j)] =
        j == row ? 1.0 : std::exp(-gamma * squared_distance(xi, points_by_column.col(j).data(), d));
  }
}

KlGradient student_t_kl_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                 double p_scale) {
  check_layout(p, y);
  const Index n = y.rows();
  std::vector<double> row_sums(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) row_sums[static_cast<std::size_t>(i)] = student_t_row_sum(y, i);
  double z = 0.0;
  for (double s : row_sums) z += s;
  const double inv_z = 1.0 / z;

  KlGradient result;
  result.gradient.resize(n, 2);
  std::vector<double> row_kl(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    double g[2];
    row_kl[static_cast<std::size_t>(i)] = student_t_row_gradient(p, y, p_scale, inv_z, i, g);
    result.gradient(i, 0) = g[0];
    result.gradient(i, 1) = g[1];
  }
  for (double v : row_kl) result.kl += v;
  return result;
}

}  // namespace parallel

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points, Execution exec) {
  return exec == Execution::parallel ? parallel::squared_distances(points)
                                     : serial::squared_distances(points);
}

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double gamma, Execution exec) {
  return exec == Execution::parallel ? parallel::rbf_gram(points, gamma)
                                     : serial::rbf_gram(points, gamma);
}

KlGradient student_t_kl_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y,
                                 double p_scale, Execution exec) {
  return exec == Execution::parallel ? parallel::student_t_kl_gradient(p, y, p_scale)
                                     : serial::student_t_kl_gradient(p, y, p_scale);
}

}  // namespace kernels
}  // namespace shiftaudit
