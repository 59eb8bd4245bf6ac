#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "shiftaudit/dataset.hpp"

namespace shiftaudit {

struct RelabelAction {
  std::uint64_t seq = 0;  // assigned on append, 1-based
  std::vector<std::string> selection;
  std::string label_name;
  std::string new_value;
  std::string author;
  std::chrono::system_clock::time_point timestamp{};
  std::optional<std::string> note;

  bool operator==(const RelabelAction&) const = default;
};

nlohmann::json action_to_json(const RelabelAction& action);
RelabelAction action_from_json(const nlohmann::json& doc);

/// Current labels per record, in dataset order.
using LabelView = std::vector<std::map<std::string, std::string>>;

/// Base labels from a dataset plus an append-only log of relabel actions.
/// The view is always the left fold of the log over the base.
class LabelStore {
 public:
  explicit LabelStore(const Dataset& ds);

  /// Validates and appends `action` (assigning its sequence number).
  /// Throws UnknownIdError for ids not in the dataset and DataError for an
  /// empty selection or a value outside the label schema.
  const RelabelAction& relabel(RelabelAction action);

  const LabelView& view() const noexcept { return view_; }
  const LabelView& base() const noexcept { return base_; }
  const std::vector<RelabelAction>& log() const noexcept { return log_; }
  std::uint64_t sequence() const noexcept { return log_.empty() ? 0 : log_.back().seq; }

  /// Label `name` of record `index`, if set.
  std::optional<std::string> value(std::size_t index, const std::string& name) const;

  /// Recomputes the view from the base and the log.
  LabelView replay() const;

  /// Appends every action from an NDJSON log (validated like relabel).
  void load_log(const std::filesystem::path& path);

 private:
  void validate(const RelabelAction& action) const;
  void apply(LabelView& view, const RelabelAction& action) const;

  std::unordered_map<std::string, std::size_t> index_;
  LabelSchema schema_;
  LabelView base_;
  LabelView view_;
  std::vector<RelabelAction> log_;
};

/// Functional form: appends to `store` and returns the updated view.
const LabelView& relabel_selection(LabelStore& store, RelabelAction action);

/// Appends one action as a JSON line and flushes.
void append_action_log(const std::filesystem::path& path, const RelabelAction& action);

}  // namespace shiftaudit
