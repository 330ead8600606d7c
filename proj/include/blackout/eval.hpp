#pragma once

#include "blackout/em.hpp"
#include "blackout/panel.hpp"
#include "blackout/window.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace blackout {

// ---------------------------------------------------------------------------
// Window construction

struct WindowOptions {
    std::vector<int> lengths{6, 12, 24};
    std::vector<int> horizons{1, 3, 6};
    /// Spacing between candidate start indices.
    int stride = 1;
    std::uint64_t seed = 0;
};

/// Every (detector, start) whose span [start - 1, end + max horizon] is fully
/// observed. The length of each candidate is drawn from `lengths` by a hash
/// of (seed, detector, start), so enumeration is deterministic.
std::vector<BlackoutWindow> find_candidate_windows(const Panel& panel, const WindowOptions& options);

struct StratifiedSample {
    std::vector<BlackoutWindow> windows;  // ordered by start, then detector
    std::map<int, int> shortfall;         // month -> windows missing from the quota
};

/// Uniform sample of `per_month` windows for each calendar month of the
/// blackout start. Windows on the same detector whose spans overlap are
/// never both selected, so all selections can be masked at once.
StratifiedSample sample_stratified(const std::vector<BlackoutWindow>& candidates, int per_month,
                                   std::uint64_t seed, int max_horizon);

/// Converts windows into mask intervals for apply_artificial_mask.
std::vector<MaskInterval> mask_intervals(const std::vector<BlackoutWindow>& windows);

// ---------------------------------------------------------------------------
// Methods

struct MethodOutput {
    std::vector<std::vector<double>> imputations;   // per window, one value per masked step
    std::vector<std::map<int, double>> forecasts;   // per window, horizon -> point forecast
    std::vector<std::string> notes;                 // per window audit note (may be empty)
    std::vector<std::pair<std::string, TrainingTrace>> traces;
};

using MethodFn = std::function<MethodOutput(const Panel& training,
                                            const std::vector<BlackoutWindow>& windows,
                                            const std::vector<int>& horizons)>;

struct Method {
    std::string name;
    MethodFn run;
};

Method locf_method();
Method interp_seasonal_method();

/// Filters/smooths the training panel once with fixed parameters.
Method lds_method(std::string name, ModelParams params);

/// Shares one MAR fit (and the MNAR fit warm-started from it) between the
/// MAR and MNAR methods of a single evaluation.
class TwoPhaseTrainer {
public:
    explicit TwoPhaseTrainer(EmConfig config) : config_(std::move(config)) {}

    const FitResult& mar(const Panel& training);
    const FitResult& mnar(const Panel& training);

private:
    EmConfig config_;
    const Panel* trained_on_ = nullptr;
    std::optional<FitResult> mar_;
    std::optional<FitResult> mnar_;
    void reset_if_new(const Panel& training);
};

Method trained_mar_method(std::shared_ptr<TwoPhaseTrainer> trainer);
Method trained_mnar_method(std::shared_ptr<TwoPhaseTrainer> trainer);

/// Runs the LDS filter/smoother on `training` and reads imputations and
/// forecasts for each window.
MethodOutput run_lds(const ModelParams& params, const Panel& training,
                     const std::vector<BlackoutWindow>& windows, const std::vector<int>& horizons);

// ---------------------------------------------------------------------------
// Reports

struct WindowError {
    double sse = 0.0;
    int count = 0;
};

struct WindowResult {
    std::string window_id;
    double impute_sse = 0.0;
    int impute_count = 0;
    std::map<int, double> forecast_sq;    // horizon -> squared error
    std::vector<double> imputations;
    std::map<int, double> forecasts;
    bool failed = false;
    std::string note;
};

struct TaskSummary {
    double rmse = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_windows = 0;
    int n_points = 0;
};

struct MethodReport {
    std::string name;
    std::vector<WindowResult> windows;
    std::map<std::string, TaskSummary> tasks;  // "impute", "h1", "h3", ...
    int failed_windows = 0;
    std::vector<std::pair<std::string, TrainingTrace>> traces;
};

struct EvalOptions {
    std::vector<int> horizons{1, 3, 6};
    int bootstrap_resamples = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::vector<int> horizons;
    std::vector<BlackoutWindow> windows;
    std::vector<std::string> detector_ids;
    std::vector<MethodReport> methods;

    const MethodReport* find(std::string_view method) const;
};

std::string task_name(int horizon);

/// Masks every window in one training panel, runs each method on it and
/// scores against the ground truth. Squared errors are pooled over masked
/// cells (imputation) and over window endpoints (each forecast horizon).
EvalReport evaluate(const Panel& ground_truth, const std::vector<BlackoutWindow>& windows,
                    const std::vector<Method>& methods, const EvalOptions& options);

/// sqrt(sum sse / sum count).
double pooled_rmse(const std::vector<WindowError>& errors);

/// Percentile bootstrap over windows of the pooled RMSE, widened if needed
/// so the interval contains the point estimate.
std::pair<double, double> bootstrap_ci(const std::vector<WindowError>& errors, int n_resamples,
                                       double level, std::uint64_t seed);

enum class Stratum { LengthBucket, HourOfDay };

struct BucketRow {
    std::string method;
    std::string bucket;
    int n_windows = 0;
    int n_cells = 0;
    double sse = 0.0;
    double rmse = 0.0;
};

/// Imputation RMSE by blackout length ({<=6, 7-12, 13-24, >24} steps) or by
/// 4-hour bucket of the blackout start. Empty buckets are kept with zero counts.
std::vector<BucketRow> stratify(const EvalReport& report, Stratum by);

std::string length_bucket(int length);
std::string hour_bucket(int hour);

// ---------------------------------------------------------------------------
// Missingness diagnostics

struct OnsetDiagnostic {
    bool skipped = false;
    std::string note;
    double auc = 0.5;
    int n_train = 0;
    int n_test = 0;
    int n_onsets = 0;
};

struct NextStepDiagnostic {
    bool skipped = false;
    std::string note;
    double auc_observed = 0.5;
    double auc_latent = 0.5;
    int n_train = 0;
    int n_test = 0;
    int n_positive = 0;
};

struct BlackoutStructure {
    int n_runs = 0;
    double median_length = 0.0;
    double p75_length = 0.0;
    int max_length = 0;
    int network_outage_events = 0;
    double network_outage_mean_length = 0.0;
};

struct DiagnosticsReport {
    OnsetDiagnostic onset;
    NextStepDiagnostic next_step;
    BlackoutStructure structure;
};

/// Onset-vs-matched-control AUC from observed features, next-step
/// missingness AUC with and without smoothed latent features, and blackout
/// run-length statistics. Samples before `split_time` train the
/// classifiers; later ones are scored.
DiagnosticsReport missingness_diagnostics(const Panel& panel, const Matrix& smoothed_means,
                                          const TimeFeatures& time_features, int split_time);

/// Area under the ROC curve with tied scores counted as one half.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Logistic regression by full-batch gradient ascent on standardized
/// features. Returns weights (intercept last) in the standardized space
/// bundled with the standardization so that predictions can be made.
struct LogisticModel {
    Vector mean;
    Vector scale;
    Vector weights;  // features..., intercept
    double score(const Eigen::Ref<const Vector>& features) const;
};
LogisticModel fit_logistic(const Matrix& X, const std::vector<int>& y, int iterations = 300,
                           double learning_rate = 1.0, double l2 = 1e-4);

/// Lengths of maximal runs of true cells in each column.
std::vector<int> run_lengths(const BoolMatrix& mask);

}  // namespace blackout
