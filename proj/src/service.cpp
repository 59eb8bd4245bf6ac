#include "shiftaudit/service.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <thread>
#include <variant>

#include <httplib.h>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/error.hpp"
#include "shiftaudit/frechet.hpp"
#include "shiftaudit/kernel_probe.hpp"
#include "shiftaudit/serialize.hpp"
#include "text_format.hpp"

namespace shiftaudit {
namespace {

using nlohmann::json;

// Thrown by handlers for request-level problems that are not data errors.
struct HttpError : std::runtime_error {
  HttpError(int status, std::string code, const std::string& detail)
      : std::runtime_error(detail), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
  send(res, status, {{"error", code}, {"detail", detail}});
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const HttpError& e) {
      send_error(res, e.status, e.code, e.what());
    } catch (const UnknownIdError& e) {
      send(res, 422, {{"error", "unknown_ids"}, {"detail", e.what()}, {"ids", e.ids()}});
    } catch (const DataError& e) {
      send_error(res, 422, "data_error", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "malformed_request", e.what());
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    }
  };
}

std::string required_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw HttpError(400, "missing_parameter", "query parameter '" + name + "' is required");
  }
  return req.get_param_value(name);
}

template <typename T>
T numeric_param(const httplib::Request& req, const std::string& name, T fallback) {
  if (!req.has_param(name)) return fallback;
  auto v = detail::parse_number<T>(req.get_param_value(name));
  if (!v) throw HttpError(400, "bad_parameter", "query parameter '" + name + "' is not a number");
  return *v;
}

std::vector<std::string> comma_list(std::string_view text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  for (auto field : detail::split_fields(text)) {
    if (!field.empty()) out.emplace_back(field);
  }
  return out;
}

json body_json(const httplib::Request& req) {
  try {
    auto doc = json::parse(req.body);
    if (!doc.is_object()) throw HttpError(400, "malformed_json", "request body must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw HttpError(400, "malformed_json", e.what());
  }
}

std::string required_string(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_string() || doc[key].get<std::string>().empty()) {
    throw HttpError(400, "missing_field", std::string("field '") + key + "' must be a non-empty string");
  }
  return doc[key].get<std::string>();
}

json labels_json(const std::map<std::string, std::string>& labels) {
  json out = json::object();
  for (const auto& [k, v] : labels) out[k] = v;
  return out;
}

json confidence_json(const EmbeddingRecord& rec) { return rec.confidence ? json(*rec.confidence) : json(nullptr); }

std::vector<std::size_t> resolve_ids(const Dataset& ds, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  std::vector<std::string> unknown;
  for (const auto& id : ids) {
    if (auto i = ds.find(id)) out.push_back(*i);
    else unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string listed;
    for (const auto& id : unknown) listed += (listed.empty() ? "" : ",") + id;
    throw UnknownIdError("unknown id(s): " + listed, std::move(unknown));
  }
  return out;
}

GammaMode gamma_from_json(const json& doc) {
  if (!doc.contains("gamma") || doc["gamma"] == "scale") return GammaMode::scale();
  if (doc["gamma"].is_number()) return GammaMode::fixed_value(doc["gamma"].get<double>());
  throw HttpError(400, "bad_field", "gamma must be a number or \"scale\"");
}

}  // namespace

json agreement_report(const Dataset& ds, const LabelStore& store, const AgreementQuery& query) {
  std::vector<std::size_t> subset;
  if (!query.ids.empty()) subset = resolve_ids(ds, query.ids);
  if (query.cohort) {
    if (!ds.cohorts().contains(*query.cohort)) throw DataError("unknown cohort " + *query.cohort);
    if (subset.empty()) {
      for (std::size_t i = 0; i < ds.size(); ++i) subset.push_back(i);
    }
    std::erase_if(subset, [&](std::size_t i) { return ds[i].cohort != *query.cohort; });
    if (subset.empty()) throw DataError("no selected record belongs to cohort " + *query.cohort);
  }
  auto report = label_agreement(store, query.label_name, query.reference, subset, query.resamples, query.seed);
  auto out = to_json(report);
  out["label_name"] = query.label_name;
  out["reference"] = query.reference;
  out["sequence"] = store.sequence();
  return out;
}

struct Service::State {
  State(Dataset d, ServiceOptions o) : ds(std::move(d)), options(std::move(o)), store(ds) {}

  const Dataset ds;
  ServiceOptions options;

  mutable std::shared_mutex labels_mutex;  // guards store
  LabelStore store;

  std::mutex compute_mutex;  // one projection or probe computation at a time
  std::mutex registry_mutex;  // guards projections, probes, frechet_cache
  std::map<std::string, std::shared_ptr<const Projection>> projections;
  std::map<std::string, std::variant<SvcModel, SvrModel>> probes;
  std::map<std::string, json> frechet_cache;

  std::shared_ptr<const Projection> find_projection(const std::string& name) {
    std::lock_guard lock(registry_mutex);
    auto it = projections.find(name);
    return it == projections.end() ? nullptr : it->second;
  }

  std::shared_ptr<const Projection> projection(const std::string& name) {
    if (auto p = find_projection(name)) return p;
    if (name != "main") throw HttpError(404, "not_found", "no projection named '" + name + "'");
    std::lock_guard compute(compute_mutex);
    if (auto p = find_projection(name)) return p;
    if (ds.size() < 4) throw DataError("a projection needs at least 4 records");
    TsneConfig config;
    config.perplexity = std::min(30.0, static_cast<double>(ds.size() - 1) / 3.0);
    config.iterations = options.tsne_iterations;
    config.seed = options.seed;
    auto p = std::make_shared<const Projection>(tsne_embed(ds.matrix(), ds.ids(), config));
    std::lock_guard lock(registry_mutex);
    projections.emplace(name, p);
    return p;
  }

  json summary() const {
    json cohorts = json::object();
    std::size_t with_confidence = 0;
    for (const auto& rec : ds.records()) {
      cohorts[rec.cohort] = cohorts.value(rec.cohort, 0) + 1;
      if (rec.confidence) ++with_confidence;
    }
    json schema = json::object();
    for (const auto& [name, values] : ds.label_schema()) schema[name] = values;
    std::shared_lock lock(labels_mutex);
    return {{"n", ds.size()},         {"dim", ds.dim()},      {"cohorts", cohorts},
            {"label_schema", schema}, {"with_confidence", with_confidence},
            {"sequence", store.sequence()}};
  }
};

Service::Service(Dataset ds, ServiceOptions options)
    : state_(std::make_unique<State>(std::move(ds), std::move(options))) {
  auto& s = *state_;
  for (auto& [name, projection] : s.options.projections) {
    resolve_ids(s.ds, projection.ids);
    s.projections.emplace(name, std::make_shared<const Projection>(std::move(projection)));
  }
  s.options.projections.clear();
  if (s.options.log_path && std::filesystem::exists(*s.options.log_path)) s.store.load_log(*s.options.log_path);
}

Service::~Service() = default;

std::uint64_t Service::sequence() const {
  std::shared_lock lock(state_->labels_mutex);
  return state_->store.sequence();
}

void Service::mount(httplib::Server& server) {
  State& s = *state_;

  server.Get("/api/dataset/summary", guarded([&s](const httplib::Request&, httplib::Response& res) {
               json out = s.summary();
               json names = json::array();
               {
                 std::lock_guard lock(s.registry_mutex);
                 for (const auto& [name, p] : s.projections) names.push_back(name);
               }
               out["projections"] = names;
               send(res, 200, out);
             }));

  server.Get("/api/projection", guarded([&s](const httplib::Request& req, httplib::Response& res) {
               const auto name = req.has_param("name") ? req.get_param_value("name") : std::string("main");
               const auto p = s.projection(name);
               json points = json::array();
               std::shared_lock lock(s.labels_mutex);
               for (std::size_t i = 0; i < p->ids.size(); ++i) {
                 const auto idx = *s.ds.find(p->ids[i]);
                 const auto& rec = s.ds[idx];
                 const auto r = static_cast<Eigen::Index>(i);
                 points.push_back({{"id", rec.id},
                                   {"x", p->coords(r, 0)},
                                   {"y", p->coords(r, 1)},
                                   {"cohort", rec.cohort},
                                   {"labels", labels_json(s.store.view()[idx])},
                                   {"confidence", confidence_json(rec)}});
               }
               send(res, 200,
                    {{"name", name},
                     {"points", std::move(points)},
                     {"final_kl", std::isfinite(p->final_kl) ? json(p->final_kl) : json(nullptr)},
                     {"sequence", s.store.sequence()}});
             }));

  server.Get("/api/records", guarded([&s](const httplib::Request& req, httplib::Response& res) {
               const auto indices = resolve_ids(s.ds, comma_list(required_param(req, "ids")));
               json records = json::array();
               std::shared_lock lock(s.labels_mutex);
               for (auto idx : indices) {
                 const auto& rec = s.ds[idx];
                 records.push_back({{"id", rec.id},
                                    {"cohort", rec.cohort},
                                    {"group_id", rec.group_id ? json(*rec.group_id) : json(nullptr)},
                                    {"labels", labels_json(s.store.view()[idx])},
                                    {"original_labels", labels_json(rec.labels)},
                                    {"confidence", confidence_json(rec)}});
               }
               send(res, 200, {{"records", std::move(records)}, {"sequence", s.store.sequence()}});
             }));

  server.Post("/api/selection/relabel", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                const auto doc = body_json(req);
                RelabelAction action;
                if (!doc.contains("ids") || !doc["ids"].is_array()) {
                  throw HttpError(400, "missing_field", "field 'ids' must be an array of strings");
                }
                action.selection = doc["ids"].get<std::vector<std::string>>();
                action.label_name = required_string(doc, "label_name");
                action.new_value = required_string(doc, "value");
                action.author = doc.value("author", std::string("anonymous"));
                if (doc.contains("note") && doc["note"].is_string() && !doc["note"].get<std::string>().empty()) {
                  action.note = doc["note"].get<std::string>();
                }
                action.timestamp = std::chrono::system_clock::now();
                std::unique_lock lock(s.labels_mutex);
                const auto& applied = s.store.relabel(std::move(action));
                if (s.options.log_path) append_action_log(*s.options.log_path, applied);
                send(res, 200, action_to_json(applied));
              }));

  server.Post("/api/probe/train", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                const auto doc = body_json(req);
                const auto task = required_string(doc, "task");
                if (task != "svc" && task != "svr") throw HttpError(400, "bad_field", "task must be svc or svr");
                TrainConfig cfg;
                cfg.c = doc.value("c", 1.0);
                cfg.seed = doc.value("seed", s.options.seed);
                cfg.gamma = gamma_from_json(doc);
                if (!(cfg.c > 0.0)) throw HttpError(400, "bad_field", "c must be positive");

                std::lock_guard compute(s.compute_mutex);
                const auto x = s.ds.matrix();
                json out = {{"task", task}};
                json predictions = json::array();
                std::variant<SvcModel, SvrModel> model;
                if (task == "svc") {
                  const auto label = required_string(doc, "label_name");
                  const auto positive = required_string(doc, "positive");
                  std::vector<int> y;
                  std::uint64_t seq = 0;
                  {
                    std::shared_lock lock(s.labels_mutex);
                    seq = s.store.sequence();
                    for (std::size_t i = 0; i < s.ds.size(); ++i) {
                      auto v = s.store.value(i, label);
                      if (!v) throw DataError("record " + s.ds[i].id + " has no label " + label);
                      y.push_back(*v == positive ? 1 : -1);
                    }
                  }
                  auto m = train_svc(x, y, cfg);
                  m.classes = {negative_class_name(positive), positive};
                  const auto dv = decision_values(m, x);
                  std::size_t agree = 0;
                  for (std::size_t i = 0; i < s.ds.size(); ++i) {
                    const bool pos = dv[static_cast<Eigen::Index>(i)] >= 0.0;
                    agree += static_cast<std::size_t>(pos == (y[i] == 1));
                    predictions.push_back({{"id", s.ds[i].id}, {"prediction", pos ? m.classes.second : m.classes.first},
                                           {"decision_value", dv[static_cast<Eigen::Index>(i)]}});
                  }
                  out["training_accuracy"] = static_cast<double>(agree) / static_cast<double>(s.ds.size());
                  out["label_name"] = label;
                  out["positive"] = positive;
                  out["sequence"] = seq;
                  out["converged"] = m.converged;
                  out["iterations"] = m.iterations;
                  out["n_support"] = m.support_vectors.rows();
                  out["gamma"] = m.params.gamma;
                  model = std::move(m);
                } else {
                  const auto t = confidence_targets(s.ds);
                  auto m = train_svr(x, t, cfg);
                  const auto pv = predict_values(m, x);
                  for (std::size_t i = 0; i < s.ds.size(); ++i) {
                    predictions.push_back({{"id", s.ds[i].id}, {"prediction", pv[static_cast<Eigen::Index>(i)]}});
                  }
                  out["converged"] = m.converged;
                  out["iterations"] = m.iterations;
                  out["n_support"] = m.support_vectors.rows();
                  out["gamma"] = m.params.gamma;
                  model = std::move(m);
                }
                {
                  std::lock_guard lock(s.registry_mutex);
                  const auto id = "probe-" + std::to_string(s.probes.size() + 1);
                  s.probes.emplace(id, std::move(model));
                  out["probe_id"] = id;
                }
                out["predictions"] = std::move(predictions);
                send(res, 200, out);
              }));

  server.Get("/api/metrics/accuracy", guarded([&s](const httplib::Request& req, httplib::Response& res) {
               AgreementQuery q;
               q.label_name = required_param(req, "label_name");
               q.reference = required_param(req, "reference");
               q.resamples = numeric_param(req, "b", q.resamples);
               q.seed = numeric_param(req, "seed", s.options.seed);
               if (req.has_param("ids")) q.ids = comma_list(req.get_param_value("ids"));
               if (req.has_param("cohort")) q.cohort = req.get_param_value("cohort");
               std::shared_lock lock(s.labels_mutex);
               send(res, 200, agreement_report(s.ds, s.store, q));
             }));

  server.Get("/api/frechet", guarded([&s](const httplib::Request& req, httplib::Response& res) {
               const auto ref = required_param(req, "ref");
               const auto cohort = required_param(req, "cohort");
               BootstrapOptions opts;
               opts.resamples = numeric_param(req, "b", opts.resamples);
               opts.seed = numeric_param(req, "seed", s.options.seed);
               const auto cohorts = s.ds.cohorts();
               for (const auto& name : {ref, cohort}) {
                 if (!cohorts.contains(name)) throw DataError("unknown cohort " + name);
               }
               const auto key = ref + "\n" + cohort + "\n" + std::to_string(opts.resamples) + "\n" +
                                std::to_string(opts.seed);
               {
                 std::lock_guard lock(s.registry_mutex);
                 if (auto it = s.frechet_cache.find(key); it != s.frechet_cache.end()) return send(res, 200, it->second);
               }
               auto report = bootstrap_frechet(filter_by_cohort(s.ds, {ref}).matrix(),
                                               filter_by_cohort(s.ds, {cohort}).matrix(), opts);
               report.reference = ref;
               report.cohort = cohort;
               auto out = to_json(report);
               std::lock_guard lock(s.registry_mutex);
               s.frechet_cache.emplace(key, out);
               send(res, 200, out);
             }));

  server.Get("/api/actions", guarded([&s](const httplib::Request&, httplib::Response& res) {
               json actions = json::array();
               std::shared_lock lock(s.labels_mutex);
               for (const auto& a : s.store.log()) actions.push_back(action_to_json(a));
               send(res, 200, {{"actions", std::move(actions)}, {"sequence", s.store.sequence()}});
             }));
}

void serve_until_signal(Service& service, const std::string& host, int port, std::ostream& log) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &signals, &previous);  // worker threads inherit the mask

  httplib::Server server;
  service.mount(server);
  if (!server.bind_to_port(host, port)) {
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  log << "listening on " << host << ":" << port << std::endl;

  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    signalled = true;
    server.stop();
  });
  server.listen_after_bind();
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_SETMASK, &previous, nullptr);
  log << "stopped at sequence " << service.sequence() << std::endl;
}

}  // namespace shiftaudit
