#pragma once

#include "blackout/serialize.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace blackout {

namespace fs = std::filesystem;

inline constexpr const char* kManifestFormat = "blackout-manifest/1";
inline constexpr const char* kSweepFormat = "blackout-sweep/1";

enum class TrainMode { Mar, Mnar, TwoPhase };
std::string to_string(TrainMode mode);
TrainMode train_mode_from(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::TwoPhase;
    EmConfig em;
};

struct EvalConfig {
    std::uint64_t seed = 0;
    std::vector<int> lengths{6, 12, 24};
    std::vector<int> horizons{1, 3, 6};
    int stride = 1;
    int per_month = 25;
    int bootstrap_resamples = 1000;
    double level = 0.95;
    std::vector<std::string> methods{"LOCF", "LinearInterp+SeasonalNaive", "MAR", "MNAR"};
    /// Training settings for the MAR/MNAR rows; its seed is derived from `seed`.
    EmConfig em;
};

struct SweepConfig {
    std::uint64_t seed = 0;
    std::vector<double> alphas{0.0, 0.4, 0.8, 1.2};
    /// Replicate ids; each id maps to one generator/training seed shared across alphas.
    std::vector<int> seeds{0, 1, 2, 3, 4};
    int jobs = 1;
    SynthConfig synth;
    EvalConfig eval = default_sweep_eval();

    static EvalConfig default_sweep_eval();
};

struct DiagnoseConfig {
    /// Fraction of the panel (by time) used to train the diagnostic classifiers.
    double split_fraction = 0.5;
    EmConfig em;
};

Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);
Json eval_config_to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const Json& j, EvalConfig base = {});
Json sweep_config_to_json(const SweepConfig& c);
SweepConfig sweep_config_from_json(const Json& j);
Json diagnose_config_to_json(const DiagnoseConfig& c);
DiagnoseConfig diagnose_config_from_json(const Json& j);

/// Reads a config file; a manifest written by a previous run is accepted
/// too, in which case its "config" section is returned.
Json load_config_document(const fs::path& path, const std::string& command);

/// Writes manifest.json into `out_dir`; `outputs` are listed relative to it.
fs::path write_manifest(const fs::path& out_dir, const std::string& command, const Json& config,
                        const Json& inputs, const std::vector<fs::path>& outputs);

// Every command returns the files it wrote, manifest last.

std::vector<fs::path> cmd_generate(const SynthConfig& config, const fs::path& out_dir);

std::vector<fs::path> cmd_train(const fs::path& panel_path, const TrainConfig& config,
                                const std::optional<fs::path>& warm_start, const fs::path& out_dir);

/// `models` maps a method name (MAR or MNAR) to a fixed parameter file that
/// replaces leakage-free training for that row.
std::vector<fs::path> cmd_eval(const fs::path& panel_path, const std::map<std::string, fs::path>& models,
                               const EvalConfig& config, const fs::path& out_dir);

/// Builds the method list of an evaluation (exposed for tests).
std::vector<Method> build_methods(const EvalConfig& config, const std::map<std::string, ModelParams>& fixed);

/// Windows of an evaluation run, drawn exactly as cmd_eval draws them.
StratifiedSample eval_windows(const Panel& panel, const EvalConfig& config);

struct SweepLeg {
    double alpha = 0.0;
    int seed = 0;
    bool ok = false;
    std::string note;
    double mar_rmse = 0.0;
    double mnar_rmse = 0.0;
    double delta() const { return mnar_rmse - mar_rmse; }
};

struct SweepRow {
    double alpha = 0.0;
    int n_ok = 0;
    int n_legs = 0;
    double mar_mean = 0.0, mar_std = 0.0;
    double mnar_mean = 0.0, mnar_std = 0.0;
    double delta_mean = 0.0, delta_std = 0.0;
    bool complete() const { return n_ok == n_legs; }
};

/// Runs one (alpha, replicate) leg: generate, two-phase train, evaluate.
SweepLeg run_sweep_leg(const SweepConfig& config, double alpha, int seed_id, const fs::path& leg_dir);
std::vector<SweepRow> summarize_sweep(const SweepConfig& config, const std::vector<SweepLeg>& legs);
std::string sweep_summary_csv(const std::vector<SweepRow>& rows, std::size_t n_seeds);
std::string sweep_legs_csv(const std::vector<SweepLeg>& legs);

std::vector<fs::path> cmd_sweep(const SweepConfig& config, const fs::path& out_dir);

/// Plots and tidy CSVs from evaluation reports and sweep summaries.
std::vector<fs::path> cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_dir);

std::vector<fs::path> cmd_diagnose(const fs::path& panel_path, const DiagnoseConfig& config,
                                   const fs::path& out_dir);

}  // namespace blackout
