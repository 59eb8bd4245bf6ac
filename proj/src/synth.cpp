#include "shiftaudit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "shiftaudit/error.hpp"
#include "shiftaudit/rng.hpp"

namespace shiftaudit {
namespace {

using nlohmann::json;

constexpr std::uint64_t kCohortStream = 1000;
constexpr std::uint64_t kFlipStream = 2000;
constexpr std::uint64_t kNoiseStream = 3000;

// Returns V * sqrt(L) for a symmetric PSD covariance.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov, const std::string& name) {
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("invalid covariance for cohort " + name + ": not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw std::invalid_argument("invalid covariance for cohort " + name + ": not positive semi-definite");
  }
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::string padded(std::size_t value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return digits;
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Eigen::VectorXd vector_from_json(const json& j, std::size_t dim, const std::string& what) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  if (j.is_array()) {
    if (j.size() != dim) throw std::invalid_argument(what + ": expected " + std::to_string(dim) + " entries");
    for (std::size_t k = 0; k < dim; ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  } else if (j.is_object()) {
    // Sparse form {"<index>": value}.
    for (const auto& [key, value] : j.items()) {
      const auto k = std::stoul(key);
      if (k >= dim) throw std::invalid_argument(what + ": index " + key + " out of range");
      v[static_cast<Eigen::Index>(k)] = value.get<double>();
    }
  } else {
    throw std::invalid_argument(what + ": expected array or object");
  }
  return v;
}

}  // namespace

std::vector<std::string> LabelRule::values() const {
  std::set<std::string> out;
  if (kind == Kind::by_cohort) {
    for (const auto& [cohort, value] : by_cohort) out.insert(value);
  } else {
    out.insert(positive);
    out.insert(negative);
  }
  return {out.begin(), out.end()};
}

double closed_form_fd(const CohortSpec& a, const CohortSpec& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows() ||
      a.covariance.rows() != a.mean.size()) {
    throw std::invalid_argument("closed_form_fd: dimension mismatch");
  }
  if (a.mean == b.mean && a.covariance == b.covariance) return 0.0;
  const Eigen::MatrixXd product = a.covariance * b.covariance;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(product, false);
  double trace_sqrt = 0.0;
  for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
    trace_sqrt += std::sqrt(std::max(eig.eigenvalues()[k].real(), 0.0));
  }
  const double d2 = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_sqrt;
  return std::max(d2, 0.0);
}

SynthResult generate(const SynthSpec& spec) {
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  if (spec.dim == 0) throw std::invalid_argument("synth spec: dim must be positive");
  std::set<std::string> names;
  for (const auto& c : spec.cohorts) {
    if (c.mean.size() != dim || c.covariance.rows() != dim || c.covariance.cols() != dim) {
      throw std::invalid_argument("cohort " + c.name + ": dimension mismatch");
    }
    if (c.n < 2) throw std::invalid_argument("cohort " + c.name + ": n must be at least 2");
    if (!names.insert(c.name).second) throw std::invalid_argument("duplicate cohort " + c.name);
  }
  for (const auto& plan : spec.labels) {
    if (!(plan.flip_rate >= 0.0 && plan.flip_rate < 0.5)) {
      throw std::invalid_argument("label " + plan.name + ": flip_rate must lie in [0, 0.5)");
    }
    if (plan.rule.kind == LabelRule::Kind::halfspace && plan.rule.weights.size() != dim) {
      throw std::invalid_argument("label " + plan.name + ": weight dimension mismatch");
    }
    if (plan.rule.kind == LabelRule::Kind::by_cohort) {
      for (const auto& c : spec.cohorts) {
        if (!plan.rule.by_cohort.contains(c.name)) {
          throw std::invalid_argument("label " + plan.name + ": no value for cohort " + c.name);
        }
      }
    }
  }
  if (spec.confidence && spec.confidence->weights.size() != dim) {
    throw std::invalid_argument("confidence plan: weight dimension mismatch");
  }

  SynthResult out;
  auto& truth = out.truth;
  std::vector<EmbeddingRecord> records;
  std::vector<Eigen::VectorXd> stored;  // float-rounded vectors in double

  for (std::size_t ci = 0; ci < spec.cohorts.size(); ++ci) {
    const auto& cohort = spec.cohorts[ci];
    truth.cohort_names.push_back(cohort.name);
    const Eigen::MatrixXd factor = covariance_factor(cohort.covariance, cohort.name);
    Rng rng = Rng::stream(spec.seed, kCohortStream + ci);
    const int width = static_cast<int>(std::to_string(cohort.n - 1).size());
    Eigen::VectorXd z(dim);
    for (std::size_t i = 0; i < cohort.n; ++i) {
      for (Eigen::Index k = 0; k < dim; ++k) z[k] = rng.normal();
      const Eigen::VectorXd x = cohort.mean + factor * z;
      EmbeddingRecord rec;
      rec.id = cohort.name + "-" + padded(i, width);
      rec.cohort = cohort.name;
      if (cohort.group_size > 0) rec.group_id = cohort.name + "-g" + std::to_string(i / cohort.group_size);
      rec.vector.resize(spec.dim);
      Eigen::VectorXd rounded(dim);
      for (Eigen::Index k = 0; k < dim; ++k) {
        rec.vector[static_cast<std::size_t>(k)] = static_cast<float>(x[k]);
        rounded[k] = rec.vector[static_cast<std::size_t>(k)];
      }
      records.push_back(std::move(rec));
      stored.push_back(std::move(rounded));
    }
  }

  LabelSchema schema;
  for (std::size_t li = 0; li < spec.labels.size(); ++li) {
    const auto& plan = spec.labels[li];
    const auto values = plan.rule.values();
    schema[plan.name].insert(values.begin(), values.end());
    if (plan.emit_clean) schema[plan.name + "_clean"].insert(values.begin(), values.end());
    Rng rng = Rng::stream(spec.seed, kFlipStream + li);
    auto& clean = truth.clean_labels[plan.name];
    auto& flipped = truth.flipped[plan.name];
    for (std::size_t r = 0; r < records.size(); ++r) {
      std::string value;
      if (plan.rule.kind == LabelRule::Kind::by_cohort) {
        value = plan.rule.by_cohort.at(records[r].cohort);
      } else {
        value = plan.rule.weights.dot(stored[r]) + plan.rule.bias >= 0.0 ? plan.rule.positive : plan.rule.negative;
      }
      clean.push_back(value);
      // Both draws happen for every record so the stream stays aligned.
      const bool flip = rng.uniform() < plan.flip_rate && values.size() > 1;
      const std::size_t pick = rng.index(std::max<std::size_t>(values.size() - 1, 1));
      std::string observed = value;
      if (flip) {
        std::vector<std::string> others;
        for (const auto& v : values) {
          if (v != value) others.push_back(v);
        }
        observed = others[pick % others.size()];
      }
      flipped.push_back(flip);
      records[r].labels[plan.name] = observed;
      if (plan.emit_clean) records[r].labels[plan.name + "_clean"] = value;
    }
  }

  if (spec.confidence) {
    const auto& plan = *spec.confidence;
    Rng rng = Rng::stream(spec.seed, kNoiseStream);
    for (std::size_t r = 0; r < records.size(); ++r) {
      double shift = 0.0;
      if (auto it = plan.cohort_shift.find(records[r].cohort); it != plan.cohort_shift.end()) shift = it->second;
      const double clean = logistic(plan.weights.dot(stored[r]) + plan.bias + shift);
      truth.true_confidence.push_back(clean);
      records[r].confidence = std::clamp(clean + plan.noise_std * rng.normal(), 0.0, 1.0);
    }
  }

  const auto k = static_cast<Eigen::Index>(spec.cohorts.size());
  truth.fd = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double v = closed_form_fd(spec.cohorts[static_cast<std::size_t>(i)], spec.cohorts[static_cast<std::size_t>(j)]);
      truth.fd(i, j) = v;
      truth.fd(j, i) = v;
    }
  }
  out.dataset = Dataset(std::move(records), spec.dim, std::move(schema));
  return out;
}

SynthSpec synth_spec_from_json(const json& doc) {
  try {
    SynthSpec spec;
    spec.dim = doc.at("dim").get<std::size_t>();
    spec.seed = doc.value("seed", std::uint64_t{0});
    for (const auto& c : doc.at("cohorts")) {
      CohortSpec cohort;
      cohort.name = c.at("name").get<std::string>();
      cohort.n = c.at("n").get<std::size_t>();
      cohort.group_size = c.value("group_size", std::size_t{0});
      cohort.mean = c.contains("mean") ? vector_from_json(c["mean"], spec.dim, cohort.name + ".mean")
                                       : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim));
      const auto d = static_cast<Eigen::Index>(spec.dim);
      if (c.contains("covariance")) {
        const auto& rows = c["covariance"];
        if (rows.size() != spec.dim) throw std::invalid_argument(cohort.name + ".covariance: wrong row count");
        cohort.covariance.resize(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
          cohort.covariance.row(i) = vector_from_json(rows[static_cast<std::size_t>(i)], spec.dim, cohort.name + ".covariance").transpose();
        }
      } else if (c.contains("diag")) {
        cohort.covariance = vector_from_json(c["diag"], spec.dim, cohort.name + ".diag").asDiagonal();
      } else {
        cohort.covariance = c.value("scale", 1.0) * Eigen::MatrixXd::Identity(d, d);
      }
      spec.cohorts.push_back(std::move(cohort));
    }
    if (doc.contains("labels")) {
      for (const auto& l : doc["labels"]) {
        LabelPlan plan;
        plan.name = l.at("name").get<std::string>();
        plan.flip_rate = l.value("flip_rate", 0.0);
        plan.emit_clean = l.value("emit_clean", false);
        const auto& rule = l.at("rule");
        const auto type = rule.at("type").get<std::string>();
        if (type == "by_cohort") {
          plan.rule.kind = LabelRule::Kind::by_cohort;
          plan.rule.by_cohort = rule.at("values").get<std::map<std::string, std::string>>();
        } else if (type == "halfspace") {
          plan.rule.kind = LabelRule::Kind::halfspace;
          plan.rule.weights = vector_from_json(rule.at("weights"), spec.dim, plan.name + ".weights");
          plan.rule.bias = rule.value("bias", 0.0);
          plan.rule.positive = rule.at("positive").get<std::string>();
          plan.rule.negative = rule.at("negative").get<std::string>();
        } else {
          throw std::invalid_argument("label " + plan.name + ": unknown rule type " + type);
        }
        spec.labels.push_back(std::move(plan));
      }
    }
    if (doc.contains("confidence")) {
      const auto& c = doc["confidence"];
      ConfidencePlan plan;
      plan.weights = vector_from_json(c.at("weights"), spec.dim, "confidence.weights");
      plan.bias = c.value("bias", 0.0);
      plan.noise_std = c.value("noise_std", 0.0);
      if (c.contains("cohort_shift")) plan.cohort_shift = c["cohort_shift"].get<std::map<std::string, double>>();
      spec.confidence = std::move(plan);
    }
    return spec;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid synth spec: ") + e.what());
  }
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return synth_spec_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("invalid synth spec " + path.string() + ": " + e.what());
  }
}

json ground_truth_to_json(const GroundTruth& truth, const Dataset& ds) {
  json out;
  out["cohorts"] = truth.cohort_names;
  json fd = json::array();
  for (Eigen::Index i = 0; i < truth.fd.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < truth.fd.cols(); ++j) row.push_back(truth.fd(i, j));
    fd.push_back(row);
  }
  out["closed_form_fd"] = fd;
  json records = json::array();
  for (std::size_t r = 0; r < ds.size(); ++r) {
    json rec = {{"id", ds[r].id}};
    for (const auto& [name, values] : truth.clean_labels) {
      rec["clean"][name] = values[r];
      rec["flipped"][name] = static_cast<bool>(truth.flipped.at(name)[r]);
    }
    if (!truth.true_confidence.empty()) rec["true_confidence"] = truth.true_confidence[r];
    records.push_back(std::move(rec));
  }
  out["records"] = std::move(records);
  return out;
}

}  // namespace shiftaudit
