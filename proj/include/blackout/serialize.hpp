#pragma once

#include "blackout/em.hpp"
#include "blackout/eval.hpp"
#include "blackout/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace blackout {

using Json = nlohmann::ordered_json;

inline constexpr const char* kModelFormat = "blackout-model/1";
inline constexpr const char* kEvalReportFormat = "blackout-eval-report/1";

// Matrices are stored row-major as arrays of rows, vectors as flat arrays.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& what);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& what);

Json lds_to_json(const LdsParams& p);
LdsParams lds_from_json(const Json& j);

/// {"format", "K", "D", "p", "q", "mnar_enabled", "lds": {...}, "missingness": {...}}
Json model_to_json(const ModelParams& p);
ModelParams model_from_json(const Json& j);

std::string to_string(VarianceMode mode);
std::string to_string(LinearizeAt at);
std::string to_string(BlackoutMode mode);

// Config readers start from the defaults and overwrite only the keys that
// are present. Unknown keys are rejected so typos do not pass silently.
Json em_config_to_json(const EmConfig& c);
EmConfig em_config_from_json(const Json& j, EmConfig base = {});

Json synth_config_to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const Json& j, SynthConfig base = {});

Json trace_to_json(const TrainingTrace& trace);
TrainingTrace trace_from_json(const Json& j);

Json window_to_json(const BlackoutWindow& w, const std::vector<std::string>& detector_ids);
BlackoutWindow window_from_json(const Json& j);

Json report_to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);

/// method,impute,h1,h3,h6 (one column per horizon of the report).
std::string report_rmse_csv(const EvalReport& report);
/// One row per window with its span, month, hour and forecast targets.
std::string window_manifest_csv(const EvalReport& report);
/// method,window_id,task,squared_error,count (failed windows omitted).
std::string window_errors_csv(const EvalReport& report);
std::string bucket_csv(const std::vector<BucketRow>& rows);

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const Json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

void save_model(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

/// Writes panel.csv, truth.csv and params.json into `dir`.
void save_synth_output(const SynthOutput& out, const std::filesystem::path& dir);

}  // namespace blackout
