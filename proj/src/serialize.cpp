#include "shiftaudit/serialize.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "shiftaudit/error.hpp"
#include "text_format.hpp"

namespace shiftaudit {
namespace {

using nlohmann::json;

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd rows_matrix(const json& rows, Eigen::Index dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != dim) {
      throw DataError("support vector " + std::to_string(i) + " does not have dimension " + std::to_string(dim));
    }
    for (Eigen::Index j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd json_vector(const json& doc) {
  const auto values = doc.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json model_common(const char* kind, const Eigen::MatrixXd& sv, const Eigen::VectorXd& coefs, double bias,
                  const RbfParams& params, double c, bool converged, std::uint64_t iterations, double objective) {
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"kind", kind},
          {"gamma", params.gamma},
          {"c", c},
          {"bias", bias},
          {"dim", sv.cols()},
          {"support_vectors", matrix_rows(sv)},
          {"dual_coefs", vector_json(coefs)},
          {"converged", converged},
          {"iterations", iterations},
          {"dual_objective", objective}};
}

template <typename Model>
void read_common(const json& doc, Model& m) {
  try {
    const auto dim = doc.at("dim").get<Eigen::Index>();
    m.support_vectors = rows_matrix(doc.at("support_vectors"), dim);
    m.dual_coefs = json_vector(doc.at("dual_coefs"));
    if (m.dual_coefs.size() != m.support_vectors.rows()) throw DataError("dual_coefs and support_vectors disagree in length");
    m.bias = doc.at("bias").get<double>();
    m.params.gamma = doc.at("gamma").get<double>();
    m.c = doc.at("c").get<double>();
    m.converged = doc.at("converged").get<bool>();
    m.iterations = doc.at("iterations").get<std::uint64_t>();
    m.dual_objective = doc.at("dual_objective").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
}

}  // namespace

json to_json(const FrechetReport& report, bool include_boot) {
  json out = {{"reference", report.reference},
              {"cohort", report.cohort},
              {"point", report.point},
              {"ci", {report.ci_lo, report.ci_hi}},
              {"b", report.resamples},
              {"seed", report.seed},
              {"warnings", report.warnings}};
  if (include_boot) out["boot"] = report.boot;
  return out;
}

json to_json(const ShiftTest& test) { return {{"pair", {test.pair_a, test.pair_b}}, {"z", test.z}, {"p", test.p}}; }

json to_json(const AccuracyReport& report) {
  return {{"accuracy", report.point}, {"ci", {report.ci_lo, report.ci_hi}}, {"n", report.n},
          {"b", report.resamples},    {"seed", report.seed}};
}

json to_json(const CorrelationReport& report) {
  return {{"r", report.r},           {"ci", {report.ci_lo, report.ci_hi}}, {"n", report.n},
          {"b", report.resamples},   {"seed", report.seed},                {"skipped", report.skipped}};
}

json to_json(const ScenarioReport& report) {
  return {{"name", report.name},
          {"correlation", to_json(report.correlation)},
          {"n_train", report.n_train},
          {"n_test", report.n_test},
          {"converged", report.converged}};
}

json to_json(const TsneConfig& c) {
  return {{"perplexity", c.perplexity},
          {"iterations", c.iterations},
          {"exaggeration_factor", c.exaggeration_factor},
          {"exaggeration_iters", c.exaggeration_iters},
          {"learning_rate", c.learning_rate},
          {"momentum_early", c.momentum_early},
          {"momentum_late", c.momentum_late},
          {"momentum_switch_iter", c.momentum_switch_iter},
          {"seed", c.seed},
          {"entropy_tol", c.entropy_tol},
          {"max_bisection_steps", c.max_bisection_steps},
          {"init_std", c.init_std}};
}

json to_json(const GammaMode& mode) {
  if (mode.kind == GammaMode::Kind::fixed) return mode.value;
  return mode.value == 1.0 ? json("scale") : json({{"scale", mode.value}});
}

json to_json(const TrainConfig& c) {
  return {{"c", c.c},       {"epsilon", c.epsilon}, {"tol", c.tol},
          {"max_iter", c.max_iter}, {"seed", c.seed}, {"gamma", to_json(c.gamma)}};
}

json to_json(const Projection& projection) {
  json points = json::array();
  for (std::size_t i = 0; i < projection.ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    points.push_back({{"id", projection.ids[i]}, {"x", projection.coords(r, 0)}, {"y", projection.coords(r, 1)}});
  }
  json trace = json::array();
  for (const auto& cp : projection.kl_trace) trace.push_back({{"iteration", cp.iteration}, {"kl", cp.kl}});
  return {{"config", to_json(projection.config)},
          {"final_kl", std::isfinite(projection.final_kl) ? json(projection.final_kl) : json(nullptr)},
          {"kl_trace", std::move(trace)},
          {"unconverged_rows", projection.unconverged_rows},
          {"points", std::move(points)}};
}

std::string projection_to_csv(const Projection& projection) {
  std::string out = "id,x,y\n";
  for (std::size_t i = 0; i < projection.ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += projection.ids[i] + "," + detail::format_number(projection.coords(r, 0)) + "," +
           detail::format_number(projection.coords(r, 1)) + "\n";
  }
  return out;
}

Projection load_projection(const std::filesystem::path& path) {
  Projection p;
  p.final_kl = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::array<double, 2>> xy;
  if (path.extension() == ".json") {
    const auto doc = read_json(path);
    try {
      for (const auto& pt : doc.at("points")) {
        p.ids.push_back(pt.at("id").get<std::string>());
        xy.push_back({pt.at("x").get<double>(), pt.at("y").get<double>()});
      }
      if (doc.contains("final_kl") && doc["final_kl"].is_number()) p.final_kl = doc["final_kl"].get<double>();
    } catch (const json::exception& e) {
      throw DataError("malformed projection " + path.string() + ": " + e.what());
    }
  } else {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open projection " + path.string());
    std::string line;
    std::getline(in, line);
    if (detail::strip_cr(line) != "id,x,y") throw DataError("malformed header in " + path.string());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      const auto text = detail::strip_cr(line);
      if (text.empty()) continue;
      const auto fields = detail::split_fields(text);
      const auto where = path.string() + ":" + std::to_string(lineno);
      if (fields.size() != 3) throw DataError("ragged row at " + where);
      auto x = detail::parse_number<double>(fields[1]);
      auto y = detail::parse_number<double>(fields[2]);
      if (!x || !y) throw DataError("non-numeric coordinate at " + where);
      p.ids.emplace_back(fields[0]);
      xy.push_back({*x, *y});
    }
  }
  p.coords.resize(static_cast<Eigen::Index>(xy.size()), 2);
  for (std::size_t i = 0; i < xy.size(); ++i) {
    p.coords(static_cast<Eigen::Index>(i), 0) = xy[i][0];
    p.coords(static_cast<Eigen::Index>(i), 1) = xy[i][1];
  }
  return p;
}

json model_to_json(const SvcModel& m) {
  auto doc = model_common("svc", m.support_vectors, m.dual_coefs, m.bias, m.params, m.c, m.converged, m.iterations,
                          m.dual_objective);
  doc["classes"] = {m.classes.first, m.classes.second};
  return doc;
}

json model_to_json(const SvrModel& m) {
  auto doc = model_common("svr", m.support_vectors, m.dual_coefs, m.bias, m.params, m.c, m.converged, m.iterations,
                          m.dual_objective);
  doc["epsilon"] = m.epsilon;
  return doc;
}

std::string model_kind(const json& doc) {
  if (!doc.is_object() || doc.value("format", std::string{}) != kModelFormat) {
    throw DataError("not a probe model document");
  }
  if (doc.value("version", 0) != kModelVersion) throw DataError("unsupported model version");
  const auto kind = doc.value("kind", std::string{});
  if (kind != "svc" && kind != "svr") throw DataError("unknown model kind '" + kind + "'");
  return kind;
}

SvcModel svc_from_json(const json& doc) {
  if (model_kind(doc) != "svc") throw DataError("model is not an svc probe");
  SvcModel m;
  read_common(doc, m);
  try {
    const auto classes = doc.at("classes").get<std::vector<std::string>>();
    if (classes.size() != 2) throw DataError("svc model needs exactly two classes");
    m.classes = {classes[0], classes[1]};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
  return m;
}

SvrModel svr_from_json(const json& doc) {
  if (model_kind(doc) != "svr") throw DataError("model is not an svr probe");
  SvrModel m;
  read_common(doc, m);
  try {
    m.epsilon = doc.at("epsilon").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
  return m;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace shiftaudit
