#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/kernel_probe.hpp"
#include "shiftaudit/label_store.hpp"

namespace shiftaudit {

struct AccuracyReport {
  double point = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n = 0;
  int resamples = 0;
  std::uint64_t seed = 0;
};

struct CorrelationReport {
  double r = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n = 0;
  int resamples = 0;
  std::uint64_t seed = 0;
  std::size_t skipped = 0;  // resamples that stayed degenerate after redraws
};

/// Fraction of equal pairs with a percentile bootstrap over index pairs.
AccuracyReport accuracy_ci(std::span<const std::string> pred, std::span<const std::string> truth, int resamples,
                           std::uint64_t seed);

/// Sample Pearson correlation. Throws std::invalid_argument for mismatched
/// lengths, n < 2, or a constant input.
double pearson(std::span<const double> x, std::span<const double> y);

/// Percentile bootstrap of pearson. Resamples with a constant side are
/// redrawn up to 10 times, then skipped and counted.
CorrelationReport pearson_ci(std::span<const double> x, std::span<const double> y, int resamples,
                             std::uint64_t seed);

/// Agreement between the current value of `label` in the store and the
/// `reference` label, over `subset` (all records when empty). Records lacking
/// either label are left out; DataError when none remain. The CLI and the
/// HTTP service both report accuracy through this function.
AccuracyReport label_agreement(const LabelStore& store, const std::string& label, const std::string& reference,
                               std::span<const std::size_t> subset, int resamples, std::uint64_t seed);

struct DenoiseResult {
  std::vector<std::string> ids;  // test records
  std::vector<std::string> predictions;
  std::vector<double> decision_values;
  SvcModel model;
  std::optional<AccuracyReport> probe_accuracy;   // probe vs clean reference
  std::optional<AccuracyReport> noisy_agreement;  // noisy label vs clean reference
};

struct DenoiseOptions {
  std::string label_name;
  std::string positive_value;
  std::optional<std::string> reference_label;  // clean label on the test set
  TrainConfig train;
  int resamples = 1000;
  std::uint64_t seed = 0;
};

/// Trains a binary RBF probe ("positive" vs everything else) on the possibly
/// noisy training labels and predicts the test records. When a clean
/// reference label is named, reports probe accuracy and noisy-label agreement
/// on the binarized task side by side. Inputs are never modified.
DenoiseResult denoise_via_probe(const Dataset& train, const Dataset& test, const DenoiseOptions& options);

/// Name of the negative class produced by binarized probes.
std::string negative_class_name(const std::string& positive);

enum class TargetTransform { raw, neg_log };

struct ScenarioReport {
  std::string name;  // in_domain | transfer | union
  CorrelationReport correlation;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  bool converged = true;
};

struct ScenarioOptions {
  TrainConfig train;
  int resamples = 1000;
  std::uint64_t seed = 0;
  TargetTransform transform = TargetTransform::raw;
};

/// Three SVR confidence probes: source-train -> source-test, source-train ->
/// target-test, and (source-train u target-train) -> target-test. Throws
/// DataError when a record lacks confidence or the target splits share ids.
std::vector<ScenarioReport> run_transfer_scenarios(const Dataset& source_train, const Dataset& source_test,
                                                 const Dataset& target_train, const Dataset& target_test,
                                                 const ScenarioOptions& options);

/// Confidence column of `ds` (after `transform`). Throws DataError when any
/// record lacks a confidence.
std::vector<double> confidence_targets(const Dataset& ds, TargetTransform transform = TargetTransform::raw);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Even-odd point-in-polygon test. Needs at least three vertices.
bool inside_polygon(std::span<const Point2> polygon, Point2 p);

/// Indices of `points` inside `polygon` under the even-odd rule.
std::vector<std::size_t> select_in_polygon(std::span<const Point2> polygon, std::span<const Point2> points);

}  // namespace shiftaudit
