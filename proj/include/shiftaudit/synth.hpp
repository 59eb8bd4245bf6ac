#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "shiftaudit/dataset.hpp"

namespace shiftaudit {

struct CohortSpec {
  std::string name;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // PSD
  std::size_t n = 0;
  std::size_t group_size = 0;  // > 0 assigns group ids in consecutive blocks
};

/// How a record's clean label is decided.
struct LabelRule {
  enum class Kind { by_cohort, halfspace };
  Kind kind = Kind::by_cohort;
  std::map<std::string, std::string> by_cohort;  // cohort -> value
  Eigen::VectorXd weights;                       // halfspace: w.x + bias >= 0 -> positive
  double bias = 0.0;
  std::string positive;
  std::string negative;

  /// Distinct values the rule can produce, sorted.
  std::vector<std::string> values() const;
};

struct LabelPlan {
  std::string name;
  LabelRule rule;
  double flip_rate = 0.0;   // in [0, 0.5)
  bool emit_clean = false;  // also write the clean value as label "<name>_clean"
};

/// confidence = logistic(w.x + bias + cohort_shift[cohort]) + N(0, noise_std^2),
/// clamped to [0, 1].
struct ConfidencePlan {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double noise_std = 0.0;
  std::map<std::string, double> cohort_shift;
};

struct SynthSpec {
  std::size_t dim = 0;
  std::vector<CohortSpec> cohorts;
  std::vector<LabelPlan> labels;
  std::optional<ConfidencePlan> confidence;
  std::uint64_t seed = 0;
};

struct GroundTruth {
  std::map<std::string, std::vector<std::string>> clean_labels;  // per record, load order
  std::map<std::string, std::vector<bool>> flipped;
  std::vector<double> true_confidence;  // pre-noise; empty without a confidence plan
  std::vector<std::string> cohort_names;
  Eigen::MatrixXd fd;  // closed-form squared Fréchet distance between cohorts
};

struct SynthResult {
  Dataset dataset;
  GroundTruth truth;
};

/// Samples every cohort from its Gaussian (eigen factor of the covariance),
/// assigns labels and confidences. Deterministic in spec.seed. Throws
/// std::invalid_argument for non-PSD covariances or invalid flip rates.
SynthResult generate(const SynthSpec& spec);

/// Exact squared Fréchet distance between two planted Gaussians, evaluated
/// through the eigenvalues of the (non-symmetric) product S_a S_b. This is a
/// different algebraic route from frechet_distance and serves as its oracle.
double closed_form_fd(const CohortSpec& a, const CohortSpec& b);

/// Parses the declarative JSON form of a SynthSpec (see fixtures/).
SynthSpec synth_spec_from_json(const nlohmann::json& doc);
SynthSpec load_synth_spec(const std::filesystem::path& path);

nlohmann::json ground_truth_to_json(const GroundTruth& truth, const Dataset& ds);

// ---------------------------------------------------------------------------
// Brute-force dual QP oracles for the SMO solvers (small problems only).

struct QpOptions {
  int iterations = 100000;
  int trace_every = 1000;
};

struct QpSolution {
  Eigen::VectorXd alpha;  // SVC: n entries; SVR: 2n entries (alpha, alpha*)
  Eigen::VectorXd coefs;  // SVC: alpha_i y_i; SVR: alpha_i - alpha*_i
  double bias = 0.0;
  double objective = 0.0;               // dual objective, maximization form
  std::vector<double> objective_trace;  // every trace_every steps
  double gamma = 1.0;
};

/// Projected-gradient ascent on the SVC dual with step 1/lambda_max(Q),
/// projecting onto the box and the equality constraint after every step.
/// Requires n <= 30.
QpSolution qp_oracle_svc(const Eigen::MatrixXd& x, const std::vector<int>& y, double c, double gamma,
                         const QpOptions& options = {});

/// Same on the epsilon-SVR dual. Requires n <= 30.
QpSolution qp_oracle_svr(const Eigen::MatrixXd& x, const std::vector<double>& t, double c, double epsilon,
                         double gamma, const QpOptions& options = {});

/// Decision/regression value of an oracle solution at `point`.
double oracle_predict(const QpSolution& sol, const Eigen::MatrixXd& x_train, const Eigen::VectorXd& point);

}  // namespace shiftaudit
