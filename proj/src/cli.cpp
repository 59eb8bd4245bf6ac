#include "shiftaudit/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/dataset.hpp"
#include "shiftaudit/error.hpp"
#include "shiftaudit/frechet.hpp"
#include "shiftaudit/kernel_probe.hpp"
#include "shiftaudit/label_store.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/serialize.hpp"
#include "shiftaudit/service.hpp"
#include "shiftaudit/synth.hpp"
#include "shiftaudit/tsne.hpp"
#include "text_format.hpp"

namespace shiftaudit {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNonConvergence = 3;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
};

struct Invocation {
  std::vector<std::string> argv;
  std::chrono::system_clock::time_point started = std::chrono::system_clock::now();
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Seed for every random choice (default 0)");
  cmd->add_option("--out", c.out, "Output path; stdout when omitted");
  cmd->add_option("--format", c.format, "Artifact format")->check(CLI::IsMember({"json", "csv"}));
}

std::string utc_text(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Timestamps live in the sidecar so the primary artifact stays byte-identical
// across reruns.
void write_meta(const fs::path& path, const std::string& command, const json& config, const Invocation& inv) {
  const auto now = std::chrono::system_clock::now();
  write_json(path, {{"command", command},
                    {"argv", inv.argv},
                    {"config", config},
                    {"started_utc", utc_text(inv.started)},
                    {"elapsed_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now - inv.started).count()}});
}

void emit(const Common& common, const std::string& command, const json& config, const Invocation& inv,
          const std::string& text) {
  if (common.out.empty()) {
    std::cout << text;
    return;
  }
  write_text(common.out, text);
  write_meta(common.out + ".meta.json", command, config, inv);
}

void emit(const Common& common, const std::string& command, const json& config, const Invocation& inv,
          const json& doc, const std::string& csv) {
  emit(common, command, config, inv, common.format == "csv" ? csv : doc.dump(2) + "\n");
}

void require_json_format(const Common& common, const std::string& command) {
  if (common.format != "json") throw UsageError(command + " only writes JSON artifacts");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto field : detail::split_fields(text)) {
    if (!field.empty()) out.emplace_back(field);
  }
  return out;
}

Dataset load_dataset(const std::string& path) {
  const fs::path p(path);
  if (!fs::exists(p)) throw DataError("missing dataset " + path);
  return p.extension() == ".json" ? load_binary(p) : load_csv(p);
}

Dataset restrict_cohorts(const Dataset& ds, const std::vector<std::string>& cohorts) {
  if (cohorts.empty()) return ds;
  const auto known = ds.cohorts();
  for (const auto& c : cohorts) {
    if (!known.contains(c)) throw DataError("unknown cohort " + c);
  }
  return filter_by_cohort(ds, {cohorts.begin(), cohorts.end()});
}

GammaMode parse_gamma(const std::string& text) {
  if (text == "scale") return GammaMode::scale();
  if (text.starts_with("scale:")) {
    auto m = detail::parse_number<double>(std::string_view(text).substr(6));
    if (!m || !(*m > 0.0)) throw UsageError("--gamma scale:<multiplier> needs a positive multiplier");
    return GammaMode::scale(*m);
  }
  auto g = detail::parse_number<double>(text);
  if (!g || !(*g > 0.0)) throw UsageError("--gamma must be a positive number, 'scale' or 'scale:<multiplier>'");
  return GammaMode::fixed_value(*g);
}

SplitMode parse_split_mode(const std::string& text) {
  return text == "group" ? SplitMode::group_level : SplitMode::frame_level;
}

void check_resamples(int b) {
  if (b < 2) throw UsageError("--b must be at least 2");
}

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) throw UsageError("--split must lie strictly between 0 and 1");
}

std::string transform_name(TargetTransform t) { return t == TargetTransform::raw ? "raw" : "neg_log"; }

std::string num(double v) { return detail::format_number(v); }

int report_convergence(bool converged, const std::string& what) {
  if (converged) return kExitOk;
  std::cerr << "error: " << what << " did not converge within the iteration limit\n";
  return kExitNonConvergence;
}

// Options shared by the commands that train probes.
struct ProbeFlags {
  double c = 1.0;
  std::string gamma = "scale";
  double epsilon = 0.1;
  double tol = 1e-3;
  std::uint64_t max_iter = 0;

  void add(CLI::App* cmd, bool with_epsilon) {
    cmd->add_option("--c", c, "Box constraint")->check(CLI::PositiveNumber);
    cmd->add_option("--gamma", gamma, "RBF width: number, 'scale' or 'scale:<multiplier>'");
    if (with_epsilon) cmd->add_option("--epsilon", epsilon, "SVR tube half-width")->check(CLI::NonNegativeNumber);
    cmd->add_option("--tol", tol, "KKT violation tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", max_iter, "SMO iteration cap (0: 10 n^2)");
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.c = c;
    cfg.gamma = parse_gamma(gamma);
    cfg.epsilon = epsilon;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.seed = seed;
    return cfg;
  }
};

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  bool seed_given = false;
};

int cmd_synth(const SynthArgs& a, const Common& common, const Invocation& inv) {
  if (common.out.empty()) throw UsageError("synth needs --out <directory>");
  auto spec = load_synth_spec(a.spec);
  if (a.seed_given) spec.seed = common.seed;
  const auto result = generate(spec);
  const fs::path dir(common.out);
  fs::create_directories(dir);
  const fs::path data_path = dir / (common.format == "csv" ? "dataset.csv" : "dataset.json");
  if (common.format == "csv") write_csv(result.dataset, data_path);
  else write_binary(result.dataset, data_path);

  const json config = {{"spec", read_json(a.spec)}, {"seed", spec.seed}, {"format", common.format}};
  auto truth = ground_truth_to_json(result.truth, result.dataset);
  truth["config"] = config;
  write_json(dir / "ground_truth.json", truth);
  write_meta(dir / "synth.meta.json", "synth", config, inv);
  std::cerr << "wrote " << result.dataset.size() << " records to " << data_path.string() << "\n";
  return kExitOk;
}

// ---- frechet --------------------------------------------------------------

struct FrechetArgs {
  std::string data;
  std::string ref;
  std::string cohorts;
  int b = 1000;
  double ridge = kDefaultRidgeScale;
  bool full = false;
};

int cmd_frechet(const FrechetArgs& a, const Common& common, const Invocation& inv) {
  check_resamples(a.b);
  if (!(a.ridge >= 0.0)) throw UsageError("--ridge must be non-negative");
  auto cohorts = split_list(a.cohorts);
  std::erase(cohorts, a.ref);
  if (cohorts.empty()) throw UsageError("--cohorts must name at least one cohort besides --ref");

  const auto ds = load_dataset(a.data);
  const auto known = ds.cohorts();
  for (const auto& c : cohorts) {
    if (!known.contains(c)) throw DataError("unknown cohort " + c);
  }
  if (!known.contains(a.ref)) throw DataError("unknown cohort " + a.ref);

  const json config = {{"data", a.data}, {"ref", a.ref}, {"cohorts", cohorts}, {"b", a.b},
                       {"seed", common.seed}, {"ridge", a.ridge}};
  const auto ref = filter_by_cohort(ds, {a.ref}).matrix();
  std::vector<FrechetReport> reports;
  for (std::size_t k = 0; k < cohorts.size(); ++k) {
    BootstrapOptions opts;
    opts.resamples = a.b;
    opts.seed = mix64(common.seed + k);  // independent resamples per pair
    opts.ridge_scale = a.ridge;
    auto r = bootstrap_frechet(ref, filter_by_cohort(ds, {cohorts[k]}).matrix(), opts);
    r.reference = a.ref;
    r.cohort = cohorts[k];
    for (const auto& w : r.warnings) std::cerr << "warning: " << cohorts[k] << ": " << w << "\n";
    reports.push_back(std::move(r));
  }
  std::vector<ShiftTest> tests;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t j = i + 1; j < reports.size(); ++j) tests.push_back(shift_z_test(reports[i], reports[j]));
  }

  json doc = {{"command", "frechet"}, {"config", config}, {"reports", json::array()}, {"tests", json::array()}};
  std::string csv = "kind,a,b,value,ci_lo,ci_hi,p\n";
  for (const auto& r : reports) {
    doc["reports"].push_back(to_json(r, a.full));
    csv += "report," + r.reference + "," + r.cohort + "," + num(r.point) + "," + num(r.ci_lo) + "," + num(r.ci_hi) +
           ",\n";
  }
  for (const auto& t : tests) {
    doc["tests"].push_back(to_json(t));
    csv += "test," + t.pair_a + "," + t.pair_b + "," + num(t.z) + ",,," + num(t.p) + "\n";
  }
  emit(common, "frechet", config, inv, doc, csv);
  return kExitOk;
}

// ---- tsne -----------------------------------------------------------------

struct TsneArgs {
  std::string data;
  std::string cohorts;
  TsneConfig config;
};

int cmd_tsne(TsneArgs a, const Common& common, const Invocation& inv) {
  const auto ds = restrict_cohorts(load_dataset(a.data), split_list(a.cohorts));
  const auto n = static_cast<double>(ds.size());
  if (!(a.config.perplexity >= 1.0) || a.config.perplexity >= n - 1.0) {
    throw UsageError("--perplexity must lie in [1, n-1) with n = " + std::to_string(ds.size()));
  }
  if (a.config.iterations < 1) throw UsageError("--iterations must be positive");
  a.config.seed = common.seed;
  const auto projection = tsne_embed(ds.matrix(), ds.ids(), a.config);
  json config = to_json(a.config);
  config["data"] = a.data;
  config["cohorts"] = split_list(a.cohorts);
  json doc = to_json(projection);
  doc["command"] = "tsne";
  doc["config"] = config;
  emit(common, "tsne", config, inv, doc, projection_to_csv(projection));
  if (projection.unconverged_rows > 0) {
    std::cerr << "warning: perplexity calibration did not converge on " << projection.unconverged_rows << " rows\n";
  }
  return kExitOk;
}

// ---- probe-train ----------------------------------------------------------

struct ProbeTrainArgs {
  std::string data;
  std::string task;
  std::string label;
  std::string positive;
  std::string cohorts;
  std::optional<double> split;
  std::string split_mode = "frame";
  bool neg_log = false;
  bool grid = false;
  ProbeFlags probe;
};

std::vector<int> binary_targets(const Dataset& ds, const std::string& label, const std::string& positive) {
  std::vector<int> y;
  y.reserve(ds.size());
  for (const auto& rec : ds.records()) {
    auto it = rec.labels.find(label);
    if (it == rec.labels.end()) throw DataError("record " + rec.id + " has no label " + label);
    y.push_back(it->second == positive ? 1 : -1);
  }
  return y;
}

json grid_json(const GridSearchResult& g) {
  json cells = json::array();
  for (const auto& cell : g.cells) {
    cells.push_back({{"c", cell.c}, {"gamma_multiplier", cell.gamma_multiplier}, {"score", cell.score}});
  }
  return cells;
}

int cmd_probe_train(const ProbeTrainArgs& a, const Common& common, const Invocation& inv) {
  require_json_format(common, "probe-train");
  if (a.task == "svc" && (a.label.empty() || a.positive.empty())) {
    throw UsageError("probe-train --task svc needs --label and --positive");
  }
  if (a.split) check_fraction(*a.split);
  auto cfg = a.probe.config(common.seed);
  auto ds = restrict_cohorts(load_dataset(a.data), split_list(a.cohorts));
  if (a.split) ds = split(ds, {*a.split, common.seed, parse_split_mode(a.split_mode)}).train;
  const auto x = ds.matrix();
  const auto transform = a.neg_log ? TargetTransform::neg_log : TargetTransform::raw;

  json training = {{"data", a.data},     {"task", a.task},           {"cohorts", split_list(a.cohorts)},
                   {"n_train", ds.size()}, {"seed", common.seed}};
  if (a.split) training["split"] = {{"train_fraction", *a.split}, {"mode", a.split_mode}};
  json doc;
  bool converged = false;
  if (a.task == "svc") {
    const auto y = binary_targets(ds, a.label, a.positive);
    if (a.grid) {
      const auto g = grid_search_svc(x, y, cfg);
      cfg = g.best;
      training["grid"] = grid_json(g);
    }
    auto model = train_svc(x, y, cfg);
    model.classes = {negative_class_name(a.positive), a.positive};
    converged = model.converged;
    doc = model_to_json(model);
    training["label"] = a.label;
    training["positive"] = a.positive;
  } else {
    const auto t = confidence_targets(ds, transform);
    if (a.grid) {
      const auto g = grid_search_svr(x, t, cfg);
      cfg = g.best;
      training["grid"] = grid_json(g);
    }
    const auto model = train_svr(x, t, cfg);
    converged = model.converged;
    doc = model_to_json(model);
    training["transform"] = transform_name(transform);
  }
  training["config"] = to_json(cfg);
  doc["training"] = training;
  emit(common, "probe-train", training, inv, doc.dump(2) + "\n");
  return report_convergence(converged, "probe training");
}

// ---- probe-eval -----------------------------------------------------------

struct ProbeEvalArgs {
  std::string model;
  std::string data;
  std::string label;
  std::string cohorts;
  std::optional<double> split;
  std::string split_mode = "frame";
  std::string part = "test";
  bool neg_log = false;
  int b = 1000;
};

int cmd_probe_eval(const ProbeEvalArgs& a, const Common& common, const Invocation& inv) {
  check_resamples(a.b);
  if (a.split) check_fraction(*a.split);
  const auto model_doc = read_json(a.model);
  const auto kind = model_kind(model_doc);
  const json training = model_doc.value("training", json::object());
  auto ds = restrict_cohorts(load_dataset(a.data), split_list(a.cohorts));
  if (a.split) {
    auto parts = split(ds, {*a.split, common.seed, parse_split_mode(a.split_mode)});
    ds = a.part == "train" ? std::move(parts.train) : std::move(parts.test);
  }
  const auto x = ds.matrix();

  json config = {{"model", a.model}, {"data", a.data}, {"cohorts", split_list(a.cohorts)}, {"b", a.b},
                 {"seed", common.seed}, {"n", ds.size()}};
  if (a.split) config["split"] = {{"train_fraction", *a.split}, {"mode", a.split_mode}, {"part", a.part}};
  json doc = {{"command", "probe-eval"}, {"kind", kind}};
  json predictions = json::array();
  std::string csv;
  if (kind == "svc") {
    const auto model = svc_from_json(model_doc);
    const auto label = a.label.empty() ? training.value("label", std::string{}) : a.label;
    if (label.empty()) throw UsageError("probe-eval needs --label for this model");
    config["label"] = label;
    const auto dv = decision_values(model, x);
    std::vector<std::string> pred;
    std::vector<std::string> truth;
    csv = "id,prediction,decision_value\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double v = dv[static_cast<Eigen::Index>(i)];
      pred.push_back(v >= 0.0 ? model.classes.second : model.classes.first);
      auto it = ds[i].labels.find(label);
      if (it == ds[i].labels.end()) throw DataError("record " + ds[i].id + " has no label " + label);
      truth.push_back(it->second == model.classes.second ? model.classes.second : model.classes.first);
      predictions.push_back({{"id", ds[i].id}, {"prediction", pred.back()}, {"decision_value", v}});
      csv += ds[i].id + "," + pred.back() + "," + num(v) + "\n";
    }
    doc["accuracy"] = to_json(accuracy_ci(pred, truth, a.b, common.seed));
  } else {
    const auto model = svr_from_json(model_doc);
    const bool neg_log = a.neg_log || training.value("transform", std::string("raw")) == "neg_log";
    const auto transform = neg_log ? TargetTransform::neg_log : TargetTransform::raw;
    config["transform"] = transform_name(transform);
    const auto t = confidence_targets(ds, transform);
    const auto pv = predict_values(model, x);
    csv = "id,prediction\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double v = pv[static_cast<Eigen::Index>(i)];
      predictions.push_back({{"id", ds[i].id}, {"prediction", v}});
      csv += ds[i].id + "," + num(v) + "\n";
    }
    doc["correlation"] =
        to_json(pearson_ci(std::span<const double>(pv.data(), static_cast<std::size_t>(pv.size())), t, a.b,
                           common.seed));
  }
  doc["config"] = config;
  doc["predictions"] = std::move(predictions);
  emit(common, "probe-eval", config, inv, doc, csv);
  return kExitOk;
}

// ---- denoise --------------------------------------------------------------

struct DenoiseArgs {
  std::string data;
  std::string train;
  std::string test;
  std::string label;
  std::string positive;
  std::string reference;
  std::string cohorts;
  double split = 0.8;
  std::string split_mode = "frame";
  int b = 1000;
  ProbeFlags probe;
};

int cmd_denoise(const DenoiseArgs& a, const Common& common, const Invocation& inv) {
  check_resamples(a.b);
  check_fraction(a.split);
  const bool explicit_sets = !a.train.empty() || !a.test.empty();
  if (explicit_sets && (a.train.empty() || a.test.empty())) throw UsageError("--train and --test go together");
  if (explicit_sets == !a.data.empty()) throw UsageError("denoise needs either --data or --train/--test");

  DenoiseOptions opts;
  opts.label_name = a.label;
  opts.positive_value = a.positive;
  if (!a.reference.empty()) opts.reference_label = a.reference;
  opts.train = a.probe.config(common.seed);
  opts.resamples = a.b;
  opts.seed = common.seed;

  json config = {{"label", a.label}, {"positive", a.positive}, {"reference", a.reference}, {"b", a.b},
                 {"seed", common.seed}, {"probe", to_json(opts.train)}, {"cohorts", split_list(a.cohorts)}};
  Dataset train;
  Dataset test;
  if (explicit_sets) {
    train = restrict_cohorts(load_dataset(a.train), split_list(a.cohorts));
    test = restrict_cohorts(load_dataset(a.test), split_list(a.cohorts));
    config["train"] = a.train;
    config["test"] = a.test;
  } else {
    auto parts = split(restrict_cohorts(load_dataset(a.data), split_list(a.cohorts)),
                       {a.split, common.seed, parse_split_mode(a.split_mode)});
    train = std::move(parts.train);
    test = std::move(parts.test);
    config["data"] = a.data;
    config["split"] = {{"train_fraction", a.split}, {"mode", a.split_mode}};
  }

  const auto r = denoise_via_probe(train, test, opts);
  json doc = {{"command", "denoise"},         {"config", config},
              {"n_train", train.size()},      {"n_test", test.size()},
              {"converged", r.model.converged}, {"iterations", r.model.iterations}};
  if (r.probe_accuracy) doc["probe_accuracy"] = to_json(*r.probe_accuracy);
  if (r.noisy_agreement) doc["noisy_agreement"] = to_json(*r.noisy_agreement);
  json predictions = json::array();
  std::string csv = "id,prediction,decision_value,noisy_label\n";
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    const auto& noisy = test[i].labels.at(a.label);
    predictions.push_back({{"id", r.ids[i]}, {"prediction", r.predictions[i]},
                           {"decision_value", r.decision_values[i]}, {"noisy_label", noisy}});
    csv += r.ids[i] + "," + r.predictions[i] + "," + num(r.decision_values[i]) + "," + noisy + "\n";
  }
  doc["predictions"] = std::move(predictions);
  emit(common, "denoise", config, inv, doc, csv);
  return report_convergence(r.model.converged, "denoising probe");
}

// ---- predict-perf ---------------------------------------------------------

struct PredictPerfArgs {
  std::string data;
  std::string source;
  std::string target;
  double split = 0.8;
  std::string split_mode = "frame";
  bool neg_log = false;
  int b = 1000;
  ProbeFlags probe;
};

int cmd_predict_perf(const PredictPerfArgs& a, const Common& common, const Invocation& inv) {
  check_resamples(a.b);
  check_fraction(a.split);
  const auto source_cohorts = split_list(a.source);
  const auto target_cohorts = split_list(a.target);
  if (source_cohorts.empty() || target_cohorts.empty()) throw UsageError("--source and --target are required");
  for (const auto& c : source_cohorts) {
    if (std::find(target_cohorts.begin(), target_cohorts.end(), c) != target_cohorts.end()) {
      throw UsageError("cohort " + c + " is both source and target");
    }
  }
  ScenarioOptions opts;
  opts.train = a.probe.config(common.seed);
  opts.resamples = a.b;
  opts.seed = common.seed;
  opts.transform = a.neg_log ? TargetTransform::neg_log : TargetTransform::raw;

  const auto ds = load_dataset(a.data);
  const auto mode = parse_split_mode(a.split_mode);
  const auto source = split(restrict_cohorts(ds, source_cohorts), {a.split, common.seed, mode});
  const auto target = split(restrict_cohorts(ds, target_cohorts), {a.split, mix64(common.seed), mode});
  const auto reports = run_transfer_scenarios(source.train, source.test, target.train, target.test, opts);

  const json config = {{"data", a.data},
                       {"source", source_cohorts},
                       {"target", target_cohorts},
                       {"split", {{"train_fraction", a.split}, {"mode", a.split_mode}}},
                       {"transform", transform_name(opts.transform)},
                       {"b", a.b},
                       {"seed", common.seed},
                       {"probe", to_json(opts.train)}};
  json doc = {{"command", "predict-perf"}, {"config", config}, {"scenarios", json::array()}};
  std::string csv = "name,r,ci_lo,ci_hi,n_train,n_test,converged\n";
  bool converged = true;
  for (const auto& r : reports) {
    doc["scenarios"].push_back(to_json(r));
    csv += r.name + "," + num(r.correlation.r) + "," + num(r.correlation.ci_lo) + "," + num(r.correlation.ci_hi) +
           "," + std::to_string(r.n_train) + "," + std::to_string(r.n_test) + "," + (r.converged ? "true" : "false") +
           "\n";
    converged = converged && r.converged;
  }
  emit(common, "predict-perf", config, inv, doc, csv);
  return report_convergence(converged, "confidence probe");
}

// ---- accuracy -------------------------------------------------------------

struct AccuracyArgs {
  std::string data;
  std::string log;
  std::string label;
  std::string reference;
  std::string ids;
  std::string cohort;
  int b = 1000;
};

int cmd_accuracy(const AccuracyArgs& a, const Common& common, const Invocation& inv) {
  check_resamples(a.b);
  const auto ds = load_dataset(a.data);
  LabelStore store(ds);
  if (!a.log.empty()) {
    if (!fs::exists(a.log)) throw DataError("missing action log " + a.log);
    store.load_log(a.log);
  }
  AgreementQuery q;
  q.label_name = a.label;
  q.reference = a.reference;
  q.ids = split_list(a.ids);
  if (!a.cohort.empty()) q.cohort = a.cohort;
  q.resamples = a.b;
  q.seed = common.seed;
  const json config = {{"data", a.data}, {"log", a.log},   {"label", a.label}, {"reference", a.reference},
                       {"ids", q.ids},   {"cohort", a.cohort}, {"b", a.b},     {"seed", common.seed}};
  json doc = agreement_report(ds, store, q);
  const std::string csv = "accuracy,ci_lo,ci_hi,n,sequence\n" + num(doc["accuracy"].get<double>()) + "," +
                          num(doc["ci"][0].get<double>()) + "," + num(doc["ci"][1].get<double>()) + "," +
                          std::to_string(doc["n"].get<std::size_t>()) + "," +
                          std::to_string(doc["sequence"].get<std::uint64_t>()) + "\n";
  doc["command"] = "accuracy";
  doc["config"] = config;
  emit(common, "accuracy", config, inv, doc, csv);
  return kExitOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string data;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log;
  std::vector<std::string> projections;
  int tsne_iterations = 1000;
};

int cmd_serve(const ServeArgs& a, const Common& common) {
  ServiceOptions opts;
  opts.seed = common.seed;
  opts.tsne_iterations = a.tsne_iterations;
  opts.log_path = a.log.empty() ? fs::path(a.data + ".actions.ndjson") : fs::path(a.log);
  for (const auto& spec : a.projections) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--projection expects name=path");
    opts.projections.emplace(spec.substr(0, eq), load_projection(spec.substr(eq + 1)));
  }
  Service service(load_dataset(a.data), std::move(opts));
  try {
    serve_until_signal(service, a.host, a.port, std::cerr);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  Invocation inv;
  inv.argv.assign(argv, argv + argc);

  CLI::App app{"Embedding-space audits: cohort shift, t-SNE projections, kernel probes and label review"};
  app.require_subcommand(1);

  Common common;
  bool seed_given = false;

  auto* synth = app.add_subcommand("synth", "Generate a planted synthetic dataset with ground truth");
  SynthArgs synth_args;
  synth->add_option("--spec", synth_args.spec, "JSON generator spec")->required()->check(CLI::ExistingFile);
  add_common(synth, common);

  auto* frechet = app.add_subcommand("frechet", "Bootstrap Frechet distances of cohorts against a reference");
  FrechetArgs fr;
  frechet->add_option("--data", fr.data, "Dataset (CSV or binary manifest)")->required();
  frechet->add_option("--ref", fr.ref, "Reference cohort")->required();
  frechet->add_option("--cohorts", fr.cohorts, "Comma-separated cohorts to compare")->required();
  frechet->add_option("--b", fr.b, "Bootstrap resamples");
  frechet->add_option("--ridge", fr.ridge, "Ridge as a fraction of trace/D");
  frechet->add_flag("--full", fr.full, "Include every bootstrap distance");
  add_common(frechet, common);

  auto* tsne = app.add_subcommand("tsne", "Exact t-SNE projection to two dimensions");
  TsneArgs ts;
  tsne->add_option("--data", ts.data, "Dataset")->required();
  tsne->add_option("--cohorts", ts.cohorts, "Restrict to these cohorts");
  tsne->add_option("--perplexity", ts.config.perplexity, "Target perplexity");
  tsne->add_option("--iterations", ts.config.iterations, "Gradient steps");
  tsne->add_option("--learning-rate", ts.config.learning_rate, "Step size")->check(CLI::PositiveNumber);
  tsne->add_option("--exaggeration", ts.config.exaggeration_factor, "Early exaggeration factor");
  add_common(tsne, common);

  auto* train = app.add_subcommand("probe-train", "Train an RBF SVM classifier or SVR confidence probe");
  ProbeTrainArgs pt;
  train->add_option("--data", pt.data, "Dataset")->required();
  train->add_option("--task", pt.task, "svc or svr")->required()->check(CLI::IsMember({"svc", "svr"}));
  train->add_option("--label", pt.label, "Label to classify (svc)");
  train->add_option("--positive", pt.positive, "Positive class value (svc)");
  train->add_option("--cohorts", pt.cohorts, "Restrict to these cohorts");
  train->add_option("--split", pt.split, "Train on this fraction of a seeded split");
  train->add_option("--split-mode", pt.split_mode, "frame or group")->check(CLI::IsMember({"frame", "group"}));
  train->add_flag("--neg-log", pt.neg_log, "Regress -log(confidence) instead of confidence (svr)");
  train->add_flag("--grid", pt.grid, "Cross-validated search over C and gamma first");
  pt.probe.add(train, true);
  add_common(train, common);

  auto* eval = app.add_subcommand("probe-eval", "Evaluate a trained probe with bootstrap CIs");
  ProbeEvalArgs pe;
  eval->add_option("--model", pe.model, "Model JSON from probe-train")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", pe.data, "Dataset")->required();
  eval->add_option("--label", pe.label, "Reference label (svc; defaults to the training label)");
  eval->add_option("--cohorts", pe.cohorts, "Restrict to these cohorts");
  eval->add_option("--split", pe.split, "Evaluate on one part of a seeded split");
  eval->add_option("--split-mode", pe.split_mode, "frame or group")->check(CLI::IsMember({"frame", "group"}));
  eval->add_option("--part", pe.part, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_flag("--neg-log", pe.neg_log, "Compare against -log(confidence) (svr)");
  eval->add_option("--b", pe.b, "Bootstrap resamples");
  add_common(eval, common);

  auto* denoise = app.add_subcommand("denoise", "Replace noisy labels by probe predictions");
  DenoiseArgs dn;
  denoise->add_option("--data", dn.data, "Dataset to split");
  denoise->add_option("--train", dn.train, "Training dataset");
  denoise->add_option("--test", dn.test, "Test dataset");
  denoise->add_option("--label", dn.label, "Noisy label")->required();
  denoise->add_option("--positive", dn.positive, "Positive class value")->required();
  denoise->add_option("--reference", dn.reference, "Clean reference label on the test set");
  denoise->add_option("--cohorts", dn.cohorts, "Restrict to these cohorts");
  denoise->add_option("--split", dn.split, "Training fraction");
  denoise->add_option("--split-mode", dn.split_mode, "frame or group")->check(CLI::IsMember({"frame", "group"}));
  denoise->add_option("--b", dn.b, "Bootstrap resamples");
  dn.probe.add(denoise, false);
  add_common(denoise, common);

  auto* perf = app.add_subcommand("predict-perf", "In-domain, transfer and union confidence probes");
  PredictPerfArgs pp;
  perf->add_option("--data", pp.data, "Dataset")->required();
  perf->add_option("--source", pp.source, "Source cohorts")->required();
  perf->add_option("--target", pp.target, "Target cohorts")->required();
  perf->add_option("--split", pp.split, "Training fraction for both domains");
  perf->add_option("--split-mode", pp.split_mode, "frame or group")->check(CLI::IsMember({"frame", "group"}));
  perf->add_flag("--neg-log", pp.neg_log, "Regress -log(confidence)");
  perf->add_option("--b", pp.b, "Bootstrap resamples");
  pp.probe.add(perf, true);
  add_common(perf, common);

  auto* accuracy = app.add_subcommand("accuracy", "Label accuracy against a reference after replaying an action log");
  AccuracyArgs ac;
  accuracy->add_option("--data", ac.data, "Dataset")->required();
  accuracy->add_option("--log", ac.log, "NDJSON action log");
  accuracy->add_option("--label", ac.label, "Label to score")->required();
  accuracy->add_option("--reference", ac.reference, "Reference label")->required();
  accuracy->add_option("--ids", ac.ids, "Restrict to these ids");
  accuracy->add_option("--cohort", ac.cohort, "Restrict to one cohort");
  accuracy->add_option("--b", ac.b, "Bootstrap resamples");
  add_common(accuracy, common);

  auto* serve = app.add_subcommand("serve", "HTTP API for interactive inspection and relabeling");
  ServeArgs sv;
  serve->add_option("--data", sv.data, "Dataset")->required();
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--log", sv.log, "Action log (default <data>.actions.ndjson)");
  serve->add_option("--projection", sv.projections, "Precomputed projection name=path (CSV or JSON)");
  serve->add_option("--tsne-iterations", sv.tsne_iterations, "Iterations for the on-demand main projection")
      ->check(CLI::PositiveNumber);
  add_common(serve, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  for (auto* cmd : app.get_subcommands()) seed_given = cmd->count("--seed") > 0;

  try {
    if (*synth) {
      synth_args.seed_given = seed_given;
      return cmd_synth(synth_args, common, inv);
    }
    if (*frechet) return cmd_frechet(fr, common, inv);
    if (*tsne) return cmd_tsne(ts, common, inv);
    if (*train) return cmd_probe_train(pt, common, inv);
    if (*eval) return cmd_probe_eval(pe, common, inv);
    if (*denoise) return cmd_denoise(dn, common, inv);
    if (*perf) return cmd_predict_perf(pp, common, inv);
    if (*accuracy) return cmd_accuracy(ac, common, inv);
    if (*serve) return cmd_serve(sv, common);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace shiftaudit
