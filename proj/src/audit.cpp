#include "shiftaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "shiftaudit/error.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/stats.hpp"

namespace shiftaudit {
namespace {

constexpr int kMaxRedraws = 10;

std::vector<std::size_t> draw_indices(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

bool constant_on(std::span<const double> v, const std::vector<std::size_t>& idx) {
  for (auto i : idx) {
    if (v[i] != v[idx.front()]) return false;
  }
  return true;
}

double pearson_on(std::span<const double> x, std::span<const double> y, const std::vector<std::size_t>& idx) {
  const auto n = static_cast<double>(idx.size());
  double mx = 0.0;
  double my = 0.0;
  for (auto i : idx) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (auto i : idx) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

std::string binarize(const std::string& value, const std::string& positive) {
  return value == positive ? positive : negative_class_name(positive);
}

const std::string& required_label(const EmbeddingRecord& rec, const std::string& name) {
  auto it = rec.labels.find(name);
  if (it == rec.labels.end()) throw DataError("missing label " + name + " on record " + rec.id);
  return it->second;
}

double transform_target(double conf, TargetTransform transform) {
  return transform == TargetTransform::raw ? conf : -std::log(std::max(conf, 1e-12));
}

}  // namespace

std::string negative_class_name(const std::string& positive) { return "not_" + positive; }

AccuracyReport accuracy_ci(std::span<const std::string> pred, std::span<const std::string> truth, int resamples,
                           std::uint64_t seed) {
  if (pred.size() != truth.size()) throw std::invalid_argument("accuracy_ci: length mismatch");
  if (pred.empty()) throw std::invalid_argument("accuracy_ci: empty input");
  if (resamples < 2) throw std::invalid_argument("accuracy_ci: need at least 2 resamples");
  const std::size_t n = pred.size();
  std::vector<char> hit(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hit[i] = pred[i] == truth[i] ? 1 : 0;
    hits += static_cast<std::size_t>(hit[i]);
  }
  AccuracyReport report;
  report.n = n;
  report.resamples = resamples;
  report.seed = seed;
  report.point = static_cast<double>(hits) / static_cast<double>(n);

  std::vector<double> boot(static_cast<std::size_t>(resamples));
#pragma omp parallel for schedule(static)
  for (int r = 0; r < resamples; ++r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    std::size_t h = 0;
    for (std::size_t k = 0; k < n; ++k) h += static_cast<std::size_t>(hit[rng.index(n)]);
    boot[static_cast<std::size_t>(r)] = static_cast<double>(h) / static_cast<double>(n);
  }
  const auto ci = stats::percentile_ci95(boot);
  report.ci_lo = ci.lo;
  report.ci_hi = ci.hi;
  return report;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two pairs");
  return pearson_on(x, y, all_indices(x.size()));
}

CorrelationReport pearson_ci(std::span<const double> x, std::span<const double> y, int resamples,
                             std::uint64_t seed) {
  CorrelationReport report;
  report.r = pearson(x, y);
  if (resamples < 2) throw std::invalid_argument("pearson_ci: need at least 2 resamples");
  report.n = x.size();
  report.resamples = resamples;
  report.seed = seed;

  const std::size_t n = x.size();
  std::vector<double> boot(static_cast<std::size_t>(resamples));
  std::vector<char> ok(static_cast<std::size_t>(resamples), 0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < resamples; ++r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
      const auto idx = draw_indices(rng, n);
      if (constant_on(x, idx) || constant_on(y, idx)) continue;
      boot[static_cast<std::size_t>(r)] = pearson_on(x, y, idx);
      ok[static_cast<std::size_t>(r)] = 1;
      break;
    }
  }
  std::vector<double> kept;
  for (std::size_t r = 0; r < boot.size(); ++r) {
    if (ok[r]) kept.push_back(boot[r]);
    else ++report.skipped;
  }
  if (kept.size() < 2) throw std::invalid_argument("pearson_ci: too few non-degenerate resamples");
  const auto ci = stats::percentile_ci95(kept);
  report.ci_lo = ci.lo;
  report.ci_hi = ci.hi;
  return report;
}

AccuracyReport label_agreement(const LabelStore& store, const std::string& label, const std::string& reference,
                               std::span<const std::size_t> subset, int resamples, std::uint64_t seed) {
  std::vector<std::string> current;
  std::vector<std::string> truth;
  auto take = [&](std::size_t i) {
    auto a = store.value(i, label);
    auto b = store.value(i, reference);
    if (a && b) {
      current.push_back(std::move(*a));
      truth.push_back(std::move(*b));
    }
  };
  if (subset.empty()) {
    for (std::size_t i = 0; i < store.view().size(); ++i) take(i);
  } else {
    for (auto i : subset) {
      if (i >= store.view().size()) throw std::out_of_range("label_agreement: record index out of range");
      take(i);
    }
  }
  if (current.empty()) throw DataError("no records carry both " + label + " and " + reference);
  return accuracy_ci(current, truth, resamples, seed);
}

DenoiseResult denoise_via_probe(const Dataset& train, const Dataset& test, const DenoiseOptions& options) {
  if (options.label_name.empty() || options.positive_value.empty()) {
    throw std::invalid_argument("denoise_via_probe: label name and positive value are required");
  }
  if (train.empty() || test.empty()) throw std::invalid_argument("denoise_via_probe: empty train or test set");
  std::vector<int> y;
  y.reserve(train.size());
  for (const auto& rec : train.records()) {
    y.push_back(required_label(rec, options.label_name) == options.positive_value ? 1 : -1);
  }

  DenoiseResult out;
  out.model = train_svc(train.matrix(), y, options.train);
  out.model.classes = {negative_class_name(options.positive_value), options.positive_value};
  const auto dv = decision_values(out.model, test.matrix(), options.train.execution);
  out.ids = test.ids();
  for (Eigen::Index i = 0; i < dv.size(); ++i) {
    out.decision_values.push_back(dv[i]);
    out.predictions.push_back(dv[i] >= 0.0 ? out.model.classes.second : out.model.classes.first);
  }

  if (options.reference_label) {
    std::vector<std::string> truth;
    std::vector<std::string> noisy;
    for (const auto& rec : test.records()) {
      truth.push_back(binarize(required_label(rec, *options.reference_label), options.positive_value));
      noisy.push_back(binarize(required_label(rec, options.label_name), options.positive_value));
    }
    out.probe_accuracy = accuracy_ci(out.predictions, truth, options.resamples, options.seed);
    out.noisy_agreement = accuracy_ci(noisy, truth, options.resamples, options.seed);
  }
  return out;
}

std::vector<double> confidence_targets(const Dataset& ds, TargetTransform transform) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& rec : ds.records()) {
    if (!rec.confidence) throw DataError("missing confidence on record " + rec.id);
    out.push_back(transform_target(*rec.confidence, transform));
  }
  return out;
}

std::vector<ScenarioReport> run_transfer_scenarios(const Dataset& source_train, const Dataset& source_test,
                                                 const Dataset& target_train, const Dataset& target_test,
                                                 const ScenarioOptions& options) {
  const auto src_train_t = confidence_targets(source_train, options.transform);
  const auto src_test_t = confidence_targets(source_test, options.transform);
  const auto tgt_train_t = confidence_targets(target_train, options.transform);
  const auto tgt_test_t = confidence_targets(target_test, options.transform);
  {
    std::unordered_set<std::string> train_ids;
    for (const auto& rec : target_train.records()) train_ids.insert(rec.id);
    for (const auto& rec : target_test.records()) {
      if (train_ids.contains(rec.id)) throw DataError("id overlap between target train and target test: " + rec.id);
    }
  }

  auto evaluate = [&](const char* name, const Dataset& train, const std::vector<double>& train_t,
                      const Dataset& test, const std::vector<double>& test_t, std::uint64_t row) {
    const auto model = train_svr(train.matrix(), train_t, options.train);
    const Eigen::VectorXd pred = predict_values(model, test.matrix(), options.train.execution);
    ScenarioReport report;
    report.name = name;
    report.n_train = train.size();
    report.n_test = test.size();
    report.converged = model.converged;
    report.correlation = pearson_ci(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                    test_t, options.resamples, mix64(options.seed + row));
    return report;
  };

  std::vector<ScenarioReport> out;
  out.push_back(evaluate("in_domain", source_train, src_train_t, source_test, src_test_t, 0));
  out.push_back(evaluate("transfer", source_train, src_train_t, target_test, tgt_test_t, 1));
  const Dataset joint = concatenate(source_train, target_train);
  std::vector<double> joint_t = src_train_t;
  joint_t.insert(joint_t.end(), tgt_train_t.begin(), tgt_train_t.end());
  out.push_back(evaluate("union", joint, joint_t, target_test, tgt_test_t, 2));
  return out;
}

bool inside_polygon(std::span<const Point2> polygon, Point2 p) {
  if (polygon.size() < 3) throw std::invalid_argument("polygon needs at least three vertices");
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const auto& a = polygon[i];
    const auto& b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

std::vector<std::size_t> select_in_polygon(std::span<const Point2> polygon, std::span<const Point2> points) {
  if (polygon.size() < 3) throw std::invalid_argument("polygon needs at least three vertices");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (inside_polygon(polygon, points[i])) out.push_back(i);
  }
  return out;
}

}  // namespace shiftaudit
