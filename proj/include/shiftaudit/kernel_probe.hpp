#pragma once

#include <cstdint>
#include <list>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "shiftaudit/execution.hpp"

namespace shiftaudit {

struct RbfParams {
  double gamma = 1.0;  // k(x, y) = exp(-gamma |x - y|^2)
};

/// exp(-gamma |x - y|^2). Throws std::invalid_argument on dimension mismatch
/// or non-positive gamma.
double rbf(std::span<const double> x, std::span<const double> y, const RbfParams& params);

/// Kernel width selection. `scale` resolves to
/// multiplier / (D * mean per-feature variance of the training set).
struct GammaMode {
  enum class Kind { fixed, scale };
  Kind kind = Kind::scale;
  double value = 1.0;  // gamma for fixed, multiplier for scale

  static GammaMode fixed_value(double gamma) { return {Kind::fixed, gamma}; }
  static GammaMode scale(double multiplier = 1.0) { return {Kind::scale, multiplier}; }
};

/// Resolves `mode` against a training matrix.
double resolve_gamma(const GammaMode& mode, const Eigen::MatrixXd& x);

struct TrainConfig {
  double c = 1.0;
  double epsilon = 0.1;       // SVR tube half-width
  double tol = 1e-3;          // stop when the maximal KKT violation falls below
  std::uint64_t max_iter = 0;  // 0 selects 10 * (problem size)^2
  std::uint64_t seed = 0;      // permutes the scan order used to break ties
  GammaMode gamma = GammaMode::scale();
  std::size_t full_cache_limit = 8192;  // larger problems use an LRU row cache
  std::size_t cache_rows = 1024;
  Execution execution = Execution::parallel;
};

struct SvcModel {
  Eigen::MatrixXd support_vectors;  // m x D
  Eigen::VectorXd dual_coefs;       // alpha_i * y_i
  double bias = 0.0;
  RbfParams params;
  double c = 1.0;
  std::pair<std::string, std::string> classes{"-1", "+1"};  // (negative, positive)
  bool converged = false;
  std::uint64_t iterations = 0;
  double dual_objective = 0.0;  // sum(alpha) - 1/2 alpha^T Q alpha at termination
};

struct SvrModel {
  Eigen::MatrixXd support_vectors;
  Eigen::VectorXd dual_coefs;  // alpha_i - alpha*_i, each in [-c, c]
  double bias = 0.0;
  RbfParams params;
  double c = 1.0;
  double epsilon = 0.1;
  bool converged = false;
  std::uint64_t iterations = 0;
  double dual_objective = 0.0;
};

/// Binary soft-margin SVM by SMO with maximal-violating-pair selection.
/// `y` holds -1 / +1. Throws DataError when only one class is present.
/// Non-convergence within max_iter is reported through `converged`.
SvcModel train_svc(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& cfg);

/// epsilon-SVR by SMO on the 2n-variable dual.
SvrModel train_svr(const Eigen::MatrixXd& x, std::span<const double> t, const TrainConfig& cfg);

struct ClassPrediction {
  std::string label;
  double decision_value = 0.0;
};

/// sum_i coef_i k(sv_i, x) + bias; label is the positive class when the
/// decision value is >= 0 (exact zero goes to the positive class).
ClassPrediction predict_class(const SvcModel& model, std::span<const double> x);
double predict_value(const SvrModel& model, std::span<const double> x);

/// Batched decision values for the rows of `x`.
Eigen::VectorXd decision_values(const SvcModel& model, const Eigen::MatrixXd& x,
                                Execution exec = Execution::parallel);
Eigen::VectorXd predict_values(const SvrModel& model, const Eigen::MatrixXd& x,
                               Execution exec = Execution::parallel);

/// One cell of a cross-validated (C, gamma) grid.
struct GridCell {
  double c = 0.0;
  double gamma_multiplier = 0.0;
  double score = 0.0;  // SVC: accuracy; SVR: negative mean squared error
};

struct GridSearchResult {
  TrainConfig best;
  std::vector<GridCell> cells;
};

/// Seeded k-fold search over C in {0.1, 1, 10} and gamma in {0.1, 1, 10} x
/// scale. Ties keep the earlier cell.
GridSearchResult grid_search_svc(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& base,
                                 int folds = 5);
GridSearchResult grid_search_svr(const Eigen::MatrixXd& x, std::span<const double> t,
                                 const TrainConfig& base, int folds = 5);

/// RBF Gram rows on demand. Problems up to `full_limit` points keep the whole
/// matrix; larger ones hold at most `max_rows` rows in LRU order.
class KernelCache {
 public:
  KernelCache(const Eigen::MatrixXd& x, double gamma, std::size_t full_limit, std::size_t max_rows,
              Execution exec);

  /// Row i. Valid until two further distinct rows have been requested.
  std::span<const double> row(Eigen::Index i);

  bool is_full() const noexcept { return full_; }
  std::size_t computed_rows() const noexcept { return computed_rows_; }

 private:
  Eigen::MatrixXd points_by_column_;
  double gamma_;
  bool full_ = false;
  Eigen::MatrixXd gram_;
  std::size_t max_rows_;
  Execution exec_;
  std::list<std::pair<Eigen::Index, std::vector<double>>> lru_;
  std::unordered_map<Eigen::Index, decltype(lru_)::iterator> where_;
  std::size_t computed_rows_ = 0;
};

}  // namespace shiftaudit
