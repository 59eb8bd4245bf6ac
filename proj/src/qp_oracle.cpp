#include "shiftaudit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

// Reference solver for the SVC / SVR duals. Deliberately naive: dense Q,
// plain projected gradient, no working sets. It shares nothing with the SMO
// code path it is used to check.

namespace shiftaudit {
namespace {

constexpr std::size_t kMaxOraclePoints = 30;

Eigen::MatrixXd dense_rbf(const Eigen::MatrixXd& x, double gamma) {
  const auto n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
  }
  return k;
}

// Euclidean projection onto {0 <= a <= c, y^T a = 0} with y in {-1, +1}.
// The multiplier is bracketed by bisection, then solved exactly on the
// linear piece that contains it.
Eigen::VectorXd project(const Eigen::VectorXd& v, const Eigen::VectorXd& y, double c) {
  auto clip = [&](double lambda) {
    return (v - lambda * y).cwiseMax(0.0).cwiseMin(c).eval();
  };
  auto h = [&](double lambda) { return y.dot(clip(lambda)); };
  double lo = -(v.cwiseAbs().maxCoeff() + c) - 1.0;
  double hi = -lo;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) > 0.0 ? lo : hi) = mid;
  }
  const double mid = 0.5 * (lo + hi);
  double free_count = 0.0;
  double rhs = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double u = v[i] - mid * y[i];
    if (u >= c) {
      rhs += y[i] * c;
    } else if (u > 0.0) {
      free_count += 1.0;
      rhs += y[i] * v[i];
    }
  }
  const double lambda = free_count > 0.0 ? rhs / free_count : mid;
  Eigen::VectorXd a = clip(lambda);
  // Re-check in case the exact solve stepped off the piece.
  if (std::abs(y.dot(a)) > std::abs(h(mid))) a = clip(mid);
  return a;
}

// maximize -(1/2 a^T Q a + p^T a)  s.t.  y^T a = 0, 0 <= a <= c
QpSolution solve(const Eigen::MatrixXd& q, const Eigen::VectorXd& p, const Eigen::VectorXd& y, double c,
                 const QpOptions& options) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q, Eigen::EigenvaluesOnly);
  const double lmax = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / lmax;
  auto objective = [&](const Eigen::VectorXd& a) { return -(0.5 * a.dot(q * a) + p.dot(a)); };

  QpSolution sol;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(p.size());
  for (int it = 0; it < options.iterations; ++it) {
    if (options.trace_every > 0 && it % options.trace_every == 0) sol.objective_trace.push_back(objective(a));
    const Eigen::VectorXd ascent = -(q * a + p);
    a = project(a + step * ascent, y, c);
  }
  sol.objective = objective(a);
  sol.objective_trace.push_back(sol.objective);

  // KKT bias: average over free variables, else the middle of the bounds.
  const Eigen::VectorXd g = q * a + p;
  const double slack = 1e-8 * c;
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  int free = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double yg = y[i] * g[i];
    const bool at_upper = a[i] >= c - slack;
    const bool at_lower = a[i] <= slack;
    if (at_upper || at_lower) {
      // Upper-bounded negatives and lower-bounded positives cap rho from above.
      if ((at_upper && y[i] < 0) || (at_lower && y[i] > 0)) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      sum += yg;
      ++free;
    }
  }
  const double rho = free > 0 ? sum / free : 0.5 * (ub + lb);
  sol.bias = -rho;
  sol.alpha = std::move(a);
  return sol;
}

}  // namespace

QpSolution qp_oracle_svc(const Eigen::MatrixXd& x, const std::vector<int>& y, double c, double gamma,
                         const QpOptions& options) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n > kMaxOraclePoints) throw std::invalid_argument("qp_oracle_svc is limited to 30 points");
  if (y.size() != n || n < 2) throw std::invalid_argument("qp_oracle_svc: need one label per row and n >= 2");
  const Eigen::MatrixXd k = dense_rbf(x, gamma);
  Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) yv[static_cast<Eigen::Index>(i)] = y[i];
  const Eigen::MatrixXd q = yv.asDiagonal() * k * yv.asDiagonal();
  auto sol = solve(q, -Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)), yv, c, options);
  sol.coefs = sol.alpha.cwiseProduct(yv);
  sol.gamma = gamma;
  return sol;
}

QpSolution qp_oracle_svr(const Eigen::MatrixXd& x, const std::vector<double>& t, double c, double epsilon,
                         double gamma, const QpOptions& options) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  if (static_cast<std::size_t>(n) > kMaxOraclePoints) throw std::invalid_argument("qp_oracle_svr is limited to 30 points");
  if (static_cast<Eigen::Index>(t.size()) != n || n < 2) throw std::invalid_argument("qp_oracle_svr: need one target per row and n >= 2");
  const Eigen::MatrixXd k = dense_rbf(x, gamma);
  Eigen::MatrixXd q(2 * n, 2 * n);
  q << k, -k, -k, k;
  Eigen::VectorXd p(2 * n);
  Eigen::VectorXd y(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = epsilon - t[static_cast<std::size_t>(i)];
    p[i + n] = epsilon + t[static_cast<std::size_t>(i)];
    y[i] = 1.0;
    y[i + n] = -1.0;
  }
  auto sol = solve(q, p, y, c, options);
  sol.coefs = sol.alpha.head(n) - sol.alpha.tail(n);
  sol.gamma = gamma;
  return sol;
}

double oracle_predict(const QpSolution& sol, const Eigen::MatrixXd& x_train, const Eigen::VectorXd& point) {
  double acc = sol.bias;
  for (Eigen::Index i = 0; i < x_train.rows(); ++i) {
    acc += sol.coefs[i] * std::exp(-sol.gamma * (x_train.row(i).transpose() - point).squaredNorm());
  }
  return acc;
}

}  // namespace shiftaudit
