#include "shiftaudit/kernel_probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "shiftaudit/error.hpp"
#include "shiftaudit/kernels.hpp"
#include "shiftaudit/rng.hpp"

namespace shiftaudit {
namespace {

using Index = Eigen::Index;

// Curvature floor for degenerate pairs (identical points).
constexpr double kTau = 1e-12;

void check_config(const TrainConfig& cfg) {
  if (!(cfg.c > 0.0)) throw std::invalid_argument("C must be positive");
  if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("epsilon must be nonnegative");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!(cfg.gamma.value > 0.0)) throw std::invalid_argument("gamma must be positive");
}

// min 1/2 a^T Q a + p^T a  s.t.  y^T a = 0, 0 <= a <= c,
// with Q_st = y_s y_t K(point[s], point[t]).
struct DualProblem {
  std::vector<double> p;
  std::vector<signed char> y;
  std::vector<Index> point;
  double c = 1.0;

  std::size_t size() const { return p.size(); }
};

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;
  double objective = 0.0;  // maximization form
  bool converged = false;
  std::uint64_t iterations = 0;
};

DualSolution solve_smo(const DualProblem& prob, KernelCache& cache, double tol, std::uint64_t max_iter,
                       std::uint64_t seed) {
  const std::size_t l = prob.size();
  const double c = prob.c;
  DualSolution sol;
  sol.alpha.assign(l, 0.0);
  std::vector<double> grad = prob.p;
  auto& alpha = sol.alpha;
  const auto& y = prob.y;

  auto in_up = [&](std::size_t t) { return y[t] > 0 ? alpha[t] < c : alpha[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? alpha[t] > 0.0 : alpha[t] < c; };

  const auto order = Rng(seed).permutation(l);
  if (max_iter == 0) max_iter = 10 * static_cast<std::uint64_t>(l) * l;

  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = l;
    std::size_t j = l;
    for (std::size_t t : order) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == l || j == l || gmax - gmin < tol) {
      sol.converged = true;
      break;
    }
    if (sol.iterations >= max_iter) break;
    ++sol.iterations;

    const auto ki = cache.row(prob.point[i]);
    const auto kj = cache.row(prob.point[j]);
    const double yi = y[i];
    const double yj = y[j];
    const double qii = ki[static_cast<std::size_t>(prob.point[i])];
    const double qjj = kj[static_cast<std::size_t>(prob.point[j])];
    const double qij = yi * yj * ki[static_cast<std::size_t>(prob.point[j])];
    const double old_ai = alpha[i];
    const double old_aj = alpha[j];

    if (y[i] != y[j]) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }

    const double dai = (alpha[i] - old_ai) * yi;
    const double daj = (alpha[j] - old_aj) * yj;
    for (std::size_t t = 0; t < l; ++t) {
      const auto pt = static_cast<std::size_t>(prob.point[t]);
      grad[t] += y[t] * (ki[pt] * dai + kj[pt] * daj);
    }
  }

  // Bias from free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  double v = 0.0;
  for (std::size_t t = 0; t < l; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= c) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
    v += alpha[t] * (grad[t] + prob.p[t]);
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  sol.objective = -0.5 * v;
  return sol;
}

double decision(const Eigen::MatrixXd& sv_by_column, const Eigen::VectorXd& coefs, double bias, double gamma,
                const double* x) {
  double acc = 0.0;
  const Index d = sv_by_column.rows();
  for (Index j = 0; j < sv_by_column.cols(); ++j) {
    acc += coefs[j] * std::exp(-gamma * kernels::squared_distance(sv_by_column.col(j).data(), x, d));
  }
  return acc + bias;
}

Eigen::VectorXd batch_decision(const Eigen::MatrixXd& svs, const Eigen::VectorXd& coefs, double bias,
                               double gamma, const Eigen::MatrixXd& x, Execution exec) {
  if (svs.rows() > 0 && x.cols() != svs.cols()) throw std::invalid_argument("dimension mismatch");
  const Eigen::MatrixXd sv_cols = svs.transpose();
  const Eigen::MatrixXd x_cols = x.transpose();
  Eigen::VectorXd out(x.rows());
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < x.rows(); ++i) out[i] = decision(sv_cols, coefs, bias, gamma, x_cols.col(i).data());
  } else {
    for (Index i = 0; i < x.rows(); ++i) out[i] = decision(sv_cols, coefs, bias, gamma, x_cols.col(i).data());
  }
  return out;
}

std::uint64_t default_max_iter(const TrainConfig& cfg, std::size_t size) {
  return cfg.max_iter != 0 ? cfg.max_iter : 10 * static_cast<std::uint64_t>(size) * size;
}

// Fold id per sample: position in a seeded permutation modulo `folds`.
std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed) {
  const auto order = Rng::stream(seed, 0x6f6c64).permutation(n);
  std::vector<int> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[order[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  return fold;
}

template <typename Score>
GridSearchResult run_grid(std::size_t n, int folds, const TrainConfig& base, Score&& score_fold) {
  if (folds < 2 || static_cast<std::size_t>(folds) > n) throw std::invalid_argument("invalid fold count");
  const auto fold = assign_folds(n, folds, base.seed);
  GridSearchResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (double c : {0.1, 1.0, 10.0}) {
    for (double g : {0.1, 1.0, 10.0}) {
      TrainConfig cfg = base;
      cfg.c = c;
      cfg.gamma = GammaMode::scale(g);
      double total = 0.0;
      for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
        total += score_fold(cfg, train, test);
      }
      const double score = total / folds;
      result.cells.push_back({c, g, score});
      if (score > best) {
        best = score;
        result.best = cfg;
      }
    }
  }
  return result;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = x.row(static_cast<Index>(idx[k]));
  return out;
}

}  // namespace

double rbf(std::span<const double> x, std::span<const double> y, const RbfParams& params) {
  if (x.size() != y.size()) throw std::invalid_argument("rbf: dimension mismatch");
  if (!(params.gamma > 0.0)) throw std::invalid_argument("rbf: gamma must be positive");
  return std::exp(-params.gamma * kernels::squared_distance(x.data(), y.data(), static_cast<Index>(x.size())));
}

double resolve_gamma(const GammaMode& mode, const Eigen::MatrixXd& x) {
  if (!(mode.value > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (mode.kind == GammaMode::Kind::fixed) return mode.value;
  if (x.rows() == 0 || x.cols() == 0) throw std::invalid_argument("gamma=scale needs training data");
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::RowVectorXd var = (x.rowwise() - mu).array().square().colwise().mean();
  const double mean_var = var.mean();
  const double denom = static_cast<double>(x.cols()) * (mean_var > 0.0 ? mean_var : 1.0);
  return mode.value / denom;
}

KernelCache::KernelCache(const Eigen::MatrixXd& x, double gamma, std::size_t full_limit, std::size_t max_rows,
                         Execution exec)
    : points_by_column_(x.transpose()), gamma_(gamma), max_rows_(std::max<std::size_t>(max_rows, 2)), exec_(exec) {
  if (static_cast<std::size_t>(x.rows()) <= full_limit) {
    full_ = true;
    gram_ = kernels::rbf_gram(x, gamma, exec);
    computed_rows_ = static_cast<std::size_t>(x.rows());
  }
}

std::span<const double> KernelCache::row(Index i) {
  if (full_) return {gram_.col(i).data(), static_cast<std::size_t>(gram_.rows())};
  if (auto it = where_.find(i); it != where_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
  }
  std::vector<double> values;
  if (lru_.size() >= max_rows_) {
    auto last = std::prev(lru_.end());
    where_.erase(last->first);
    values = std::move(last->second);
    lru_.erase(last);
  }
  values.resize(static_cast<std::size_t>(points_by_column_.cols()));
  if (exec_ == Execution::parallel) {
    kernels::parallel::rbf_row(points_by_column_, i, gamma_, values);
  } else {
    kernels::serial::rbf_row(points_by_column_, i, gamma_, values);
  }
  ++computed_rows_;
  lru_.emplace_front(i, std::move(values));
  where_[i] = lru_.begin();
  return lru_.front().second;
}

SvcModel train_svc(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& cfg) {
  check_config(cfg);
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw std::invalid_argument("train_svc needs at least two samples");
  if (y.size() != n) throw std::invalid_argument("train_svc: one label per row required");
  bool has_pos = false;
  bool has_neg = false;
  for (int v : y) {
    if (v == 1) has_pos = true;
    else if (v == -1) has_neg = true;
    else throw std::invalid_argument("train_svc: labels must be -1 or +1");
  }
  if (!has_pos || !has_neg) throw DataError("single-class input");

  const double gamma = resolve_gamma(cfg.gamma, x);
  DualProblem prob;
  prob.c = cfg.c;
  prob.p.assign(n, -1.0);
  prob.y.resize(n);
  prob.point.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    prob.y[i] = static_cast<signed char>(y[i]);
    prob.point[i] = static_cast<Index>(i);
  }
  KernelCache cache(x, gamma, cfg.full_cache_limit, cfg.cache_rows, cfg.execution);
  const auto sol = solve_smo(prob, cache, cfg.tol, default_max_iter(cfg, n), cfg.seed);

  SvcModel model;
  model.params.gamma = gamma;
  model.c = cfg.c;
  model.bias = -sol.rho;
  model.converged = sol.converged;
  model.iterations = sol.iterations;
  model.dual_objective = sol.objective;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (sol.alpha[i] > 0.0) keep.push_back(i);
  }
  model.support_vectors = rows_of(x, keep);
  model.dual_coefs.resize(static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) model.dual_coefs[static_cast<Index>(k)] = sol.alpha[keep[k]] * y[keep[k]];
  return model;
}

SvrModel train_svr(const Eigen::MatrixXd& x, std::span<const double> t, const TrainConfig& cfg) {
  check_config(cfg);
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw std::invalid_argument("train_svr needs at least two samples");
  if (t.size() != n) throw std::invalid_argument("train_svr: one target per row required");

  const double gamma = resolve_gamma(cfg.gamma, x);
  DualProblem prob;
  prob.c = cfg.c;
  prob.p.resize(2 * n);
  prob.y.resize(2 * n);
  prob.point.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    prob.p[i] = cfg.epsilon - t[i];
    prob.p[i + n] = cfg.epsilon + t[i];
    prob.y[i] = 1;
    prob.y[i + n] = -1;
    prob.point[i] = static_cast<Index>(i);
    prob.point[i + n] = static_cast<Index>(i);
  }
  KernelCache cache(x, gamma, cfg.full_cache_limit, cfg.cache_rows, cfg.execution);
  const auto sol = solve_smo(prob, cache, cfg.tol, default_max_iter(cfg, 2 * n), cfg.seed);

  SvrModel model;
  model.params.gamma = gamma;
  model.c = cfg.c;
  model.epsilon = cfg.epsilon;
  model.bias = -sol.rho;
  model.converged = sol.converged;
  model.iterations = sol.iterations;
  model.dual_objective = sol.objective;
  std::vector<std::size_t> keep;
  std::vector<double> coefs;
  for (std::size_t i = 0; i < n; ++i) {
    const double coef = sol.alpha[i] - sol.alpha[i + n];
    if (coef != 0.0) {
      keep.push_back(i);
      coefs.push_back(coef);
    }
  }
  model.support_vectors = rows_of(x, keep);
  model.dual_coefs = Eigen::Map<const Eigen::VectorXd>(coefs.data(), static_cast<Index>(coefs.size()));
  return model;
}

ClassPrediction predict_class(const SvcModel& model, std::span<const double> x) {
  if (model.support_vectors.rows() > 0 && static_cast<Index>(x.size()) != model.support_vectors.cols()) {
    throw std::invalid_argument("predict_class: dimension mismatch");
  }
  const Eigen::MatrixXd sv_cols = model.support_vectors.transpose();
  const double value = decision(sv_cols, model.dual_coefs, model.bias, model.params.gamma, x.data());
  return {value >= 0.0 ? model.classes.second : model.classes.first, value};
}

double predict_value(const SvrModel& model, std::span<const double> x) {
  if (model.support_vectors.rows() > 0 && static_cast<Index>(x.size()) != model.support_vectors.cols()) {
    throw std::invalid_argument("predict_value: dimension mismatch");
  }
  const Eigen::MatrixXd sv_cols = model.support_vectors.transpose();
  return decision(sv_cols, model.dual_coefs, model.bias, model.params.gamma, x.data());
}

Eigen::VectorXd decision_values(const SvcModel& model, const Eigen::MatrixXd& x, Execution exec) {
  return batch_decision(model.support_vectors, model.dual_coefs, model.bias, model.params.gamma, x, exec);
}

Eigen::VectorXd predict_values(const SvrModel& model, const Eigen::MatrixXd& x, Execution exec) {
  return batch_decision(model.support_vectors, model.dual_coefs, model.bias, model.params.gamma, x, exec);
}

GridSearchResult grid_search_svc(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& base,
                                 int folds) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw std::invalid_argument("grid_search_svc: one label per row required");
  return run_grid(n, folds, base, [&](const TrainConfig& cfg, const auto& train, const auto& test) {
    std::vector<int> ty;
    for (auto i : train) ty.push_back(y[i]);
    const auto model = train_svc(rows_of(x, train), ty, cfg);
    const auto dv = decision_values(model, rows_of(x, test), cfg.execution);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < test.size(); ++k) hits += ((dv[static_cast<Index>(k)] >= 0.0) == (y[test[k]] > 0)) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(test.size());
  });
}

GridSearchResult grid_search_svr(const Eigen::MatrixXd& x, std::span<const double> t, const TrainConfig& base,
                                 int folds) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (t.size() != n) throw std::invalid_argument("grid_search_svr: one target per row required");
  return run_grid(n, folds, base, [&](const TrainConfig& cfg, const auto& train, const auto& test) {
    std::vector<double> tt;
    for (auto i : train) tt.push_back(t[i]);
    const auto model = train_svr(rows_of(x, train), tt, cfg);
    const auto pv = predict_values(model, rows_of(x, test), cfg.execution);
    double sse = 0.0;
    for (std::size_t k = 0; k < test.size(); ++k) {
      const double e = pv[static_cast<Index>(k)] - t[test[k]];
      sse += e * e;
    }
    return -sse / static_cast<double>(test.size());
  });
}

}  // namespace shiftaudit
