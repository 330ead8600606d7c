#pragma once

#include "blackout/filter.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace blackout {

struct EmConfig {
    int n_iterations = 10;
    int grad_steps_per_iter = 2;
    double grad_lr = 1e-4;
    double shrink_A = 0.05;
    double shrink_Q = 0.1;
    /// Upper bound on tr(Q); values <= 0 mean "10 x median observed variance".
    double trace_cap_Q = 0.0;
    int K = 20;
    std::uint64_t seed = 0;

    // Inference settings applied when the MNAR channel is switched on.
    double w_miss = 1.0;
    VarianceMode variance_mode = VarianceMode::MomentMatch;
    double constant_variance = 0.25;
    LinearizeAt linearize_at = LinearizeAt::Predicted;
    bool skip_artificial = true;

    void validate() const;
};

/// Moment accumulators gathered from one smoothing pass.
struct SufficientStats {
    int num_steps = 0;
    Matrix sum_zz;       // sum_{t} E[z_t z_t^T]
    Matrix sum_zz_prev;  // sum_{t=1}^{T-1} E[z_{t-1} z_{t-1}^T]
    Matrix sum_zz_next;  // sum_{t=1}^{T-1} E[z_t z_t^T]
    Matrix sum_cross;    // sum_{t=1}^{T-1} mu_{t|T} mu_{t-1|T}^T
    GaussianBelief first;

    // Per-detector accumulators over the timesteps where x_{t,d} is observed.
    std::vector<Matrix> obs_zz;  // D entries of K x K
    Matrix obs_xz;               // D x K, sum x_{t,d} mu_{t|T}^T
    Vector obs_xx;               // D
    Eigen::VectorXi obs_count;   // D
};

struct EStepResult {
    FilterTrace filter;
    SmoothedTrace smoothed;
    SufficientStats stats;
};

EStepResult e_step(const Panel& panel, const TimeFeatures& time_features,
                   const StaticFeatures& static_features, const ModelParams& params);

/// Accumulates statistics from an existing smoothed trajectory.
SufficientStats accumulate_stats(const Panel& panel, const SmoothedTrace& smoothed);

struct LdsMStep {
    LdsParams params;
    bool q_cap_fired = false;
    double spectral_radius_A = 0.0;
    int jitter_warnings = 0;
};

/// Closed-form LDS update followed by the A/Q stabilization.
LdsMStep m_step_lds(const SufficientStats& stats, const LdsParams& old_params,
                    const EmConfig& config, double trace_cap_Q);

struct MissingnessMStep {
    MissingnessParams params;
    int skipped_detectors = 0;
};

/// Detector-wise gradient ascent on the Bernoulli log-likelihood at the
/// smoothed means, never reading artificially masked cells.
MissingnessMStep m_step_missingness(const Panel& panel, const Matrix& smoothed_means,
                                    const TimeFeatures& time_features,
                                    const StaticFeatures& static_features,
                                    const MissingnessParams& params, const EmConfig& config);

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    double gauss_loglik = 0.0;
    double miss_loglik = 0.0;
    double seconds = 0.0;
    bool q_cap_fired = false;
    double spectral_radius_A = 0.0;
};

struct TrainingTrace {
    std::vector<IterationRecord> iterations;
    int warnings = 0;

    std::string to_csv() const;
};

struct FitResult {
    ModelParams params;
    TrainingTrace trace;
};

/// Runs n_iterations of E-step, LDS M-step and (when MNAR is enabled)
/// the missingness M-step. The objective recorded for iteration i is the
/// log-likelihood of the parameters entering that iteration.
FitResult fit(const Panel& panel, const TimeFeatures& time_features,
              const StaticFeatures& static_features, const ModelParams& init,
              const EmConfig& config);

struct TwoPhaseResult {
    FitResult mar;
    FitResult mnar;
};

/// MAR fit from init_params with the dropout channel switched off.
FitResult fit_mar(const Panel& panel, const TimeFeatures& time_features,
                  const StaticFeatures& static_features, const EmConfig& config);

/// MNAR fit warm-started from MAR LDS parameters; dropout intercepts start at
/// the empirical missing rates and all other dropout weights at zero.
FitResult fit_mnar_warm(const Panel& panel, const TimeFeatures& time_features,
                        const StaticFeatures& static_features, const LdsParams& mar_lds,
                        const EmConfig& config);

/// MAR fit from init_params, then an MNAR fit warm-started from the MAR
/// LDS parameters with dropout intercepts set from empirical missing rates.
TwoPhaseResult fit_two_phase(const Panel& panel, const TimeFeatures& time_features,
                             const StaticFeatures& static_features, const EmConfig& config);

/// Starting point built from the data: principal directions for C,
/// A = 0.99 I, Q = 0.01 I, per-detector observed variance for R and
/// dropout intercepts at the empirical missing rate. Missingness
/// parameters use p = `time_dim` and q = `static_dim` columns.
ModelParams init_params(const Panel& panel, int K, std::uint64_t seed, int time_dim = 4,
                        int static_dim = 0);

/// Missingness block with intercepts at logit(empirical missing rate),
/// clamped to [-6, 6]; artificially masked cells are not counted.
MissingnessParams empirical_missingness(const Panel& panel, int K, int p, int q);

/// 10 x the median per-detector observed variance.
double default_trace_cap(const Panel& panel);

/// Copies the inference settings of `config` into a missingness block.
void apply_inference_settings(MissingnessParams& miss, const EmConfig& config);

}  // namespace blackout
