#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/frechet.hpp"
#include "shiftaudit/kernel_probe.hpp"
#include "shiftaudit/tsne.hpp"

// JSON forms of reports and models. Doubles go through nlohmann's shortest
// round-trip formatting, so a parsed model predicts bit-identically.

namespace shiftaudit {

nlohmann::json to_json(const FrechetReport& report, bool include_boot = false);
nlohmann::json to_json(const ShiftTest& test);
nlohmann::json to_json(const AccuracyReport& report);
nlohmann::json to_json(const CorrelationReport& report);
nlohmann::json to_json(const ScenarioReport& report);
nlohmann::json to_json(const TsneConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const GammaMode& mode);

/// Points as [{id, x, y}], plus final_kl, kl_trace and the config.
nlohmann::json to_json(const Projection& projection);

/// id,x,y with a header row.
std::string projection_to_csv(const Projection& projection);

/// Reads a projection written by projection_to_csv (or the JSON form, picked
/// by a .json extension). CSV projections carry no KL, so final_kl is NaN.
Projection load_projection(const std::filesystem::path& path);

inline constexpr const char* kModelFormat = "shiftaudit.probe";
inline constexpr int kModelVersion = 1;

nlohmann::json model_to_json(const SvcModel& model);
nlohmann::json model_to_json(const SvrModel& model);

/// "svc" or "svr"; throws DataError when the document is not a probe model.
std::string model_kind(const nlohmann::json& doc);
SvcModel svc_from_json(const nlohmann::json& doc);
SvrModel svr_from_json(const nlohmann::json& doc);

/// Whole-file helpers. write_json ends the file with a newline.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace shiftaudit
