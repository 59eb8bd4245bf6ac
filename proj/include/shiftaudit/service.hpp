#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/label_store.hpp"
#include "shiftaudit/tsne.hpp"

namespace httplib {
class Server;
}

namespace shiftaudit {

/// Label accuracy query shared by the `accuracy` command and
/// GET /api/metrics/accuracy.
struct AgreementQuery {
  std::string label_name;
  std::string reference;
  std::vector<std::string> ids;       // empty: every record
  std::optional<std::string> cohort;  // restricts the records further
  int resamples = 1000;
  std::uint64_t seed = 0;
};

/// {accuracy, ci, n, b, seed, label_name, reference, sequence}.
nlohmann::json agreement_report(const Dataset& ds, const LabelStore& store, const AgreementQuery& query);

struct ServiceOptions {
  std::optional<std::filesystem::path> log_path;  // replayed on start, appended per relabel
  std::map<std::string, Projection> projections;  // precomputed, by name
  std::uint64_t seed = 0;
  int tsne_iterations = 1000;  // for the on-demand "main" projection
};

/// HTTP API over one loaded dataset. Reads run concurrently; relabels are
/// serialized, logged, and visible to every request issued after their
/// response. Projection and probe computations run one at a time.
class Service {
 public:
  Service(Dataset ds, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Registers every endpoint on `server`.
  void mount(httplib::Server& server);

  std::uint64_t sequence() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Binds host:port and serves until SIGINT or SIGTERM. Throws
/// std::runtime_error when the port cannot be bound.
void serve_until_signal(Service& service, const std::string& host, int port, std::ostream& log);

}  // namespace shiftaudit
