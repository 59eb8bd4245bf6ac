#include "shiftaudit/label_store.hpp"

#include <fstream>

#include "shiftaudit/error.hpp"

namespace shiftaudit {

nlohmann::json action_to_json(const RelabelAction& action) {
  nlohmann::json j = {
      {"seq", action.seq},
      {"ids", action.selection},
      {"label_name", action.label_name},
      {"value", action.new_value},
      {"author", action.author},
      {"timestamp_ms",
       std::chrono::duration_cast<std::chrono::milliseconds>(action.timestamp.time_since_epoch()).count()},
  };
  j["note"] = action.note ? nlohmann::json(*action.note) : nlohmann::json(nullptr);
  return j;
}

RelabelAction action_from_json(const nlohmann::json& doc) {
  try {
    RelabelAction a;
    a.seq = doc.value("seq", std::uint64_t{0});
    a.selection = doc.at("ids").get<std::vector<std::string>>();
    a.label_name = doc.at("label_name").get<std::string>();
    a.new_value = doc.at("value").get<std::string>();
    a.author = doc.value("author", std::string{});
    a.timestamp = std::chrono::system_clock::time_point(
        std::chrono::milliseconds(doc.value("timestamp_ms", std::int64_t{0})));
    if (doc.contains("note") && !doc["note"].is_null()) a.note = doc["note"].get<std::string>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed relabel action: ") + e.what());
  }
}

LabelStore::LabelStore(const Dataset& ds) : schema_(ds.label_schema()) {
  base_.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    index_.emplace(ds[i].id, i);
    base_.push_back(ds[i].labels);
  }
  view_ = base_;
}

void LabelStore::validate(const RelabelAction& action) const {
  if (action.selection.empty()) throw DataError("relabel selection is empty");
  auto it = schema_.find(action.label_name);
  if (it == schema_.end()) throw DataError("unknown label " + action.label_name);
  if (!it->second.contains(action.new_value)) {
    throw DataError("value '" + action.new_value + "' is not in the schema of label " + action.label_name);
  }
  std::vector<std::string> unknown;
  for (const auto& id : action.selection) {
    if (!index_.contains(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string listed;
    for (const auto& id : unknown) listed += (listed.empty() ? "" : ",") + id;
    throw UnknownIdError("unknown id(s): " + listed, std::move(unknown));
  }
}

void LabelStore::apply(LabelView& view, const RelabelAction& action) const {
  for (const auto& id : action.selection) view[index_.at(id)][action.label_name] = action.new_value;
}

const RelabelAction& LabelStore::relabel(RelabelAction action) {
  validate(action);
  action.seq = sequence() + 1;
  apply(view_, action);
  log_.push_back(std::move(action));
  return log_.back();
}

std::optional<std::string> LabelStore::value(std::size_t index, const std::string& name) const {
  const auto& labels = view_.at(index);
  if (auto it = labels.find(name); it != labels.end()) return it->second;
  return std::nullopt;
}

LabelView LabelStore::replay() const {
  LabelView view = base_;
  for (const auto& action : log_) apply(view, action);
  return view;
}

void LabelStore::load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open action log " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed line in action log " + path.string() + ": " + e.what());
    }
    relabel(action_from_json(doc));
  }
}

const LabelView& relabel_selection(LabelStore& store, RelabelAction action) {
  store.relabel(std::move(action));
  return store.view();
}

void append_action_log(const std::filesystem::path& path, const RelabelAction& action) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to action log " + path.string());
  out << action_to_json(action).dump() << "\n";
  out.flush();
}

}  // namespace shiftaudit
