#pragma once

#include "blackout/lds.hpp"
#include "blackout/panel.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace blackout {

enum class BlackoutMode { PointwiseBernoulli, StateTriggeredBlocks };

struct SynthConfig {
    int K = 4;
    int D = 12;
    int T = 5000;
    /// Strength of the dependence of dropout on the latent state.
    double alpha = 0.0;
    /// Long-run fraction of missing cells when alpha = 0.
    double base_missing_rate = 0.05;
    BlackoutMode blackout_mode = BlackoutMode::StateTriggeredBlocks;
    int min_block_len = 6;
    int max_block_len = 24;
    std::uint64_t seed = 0;

    // Constants of the randomly drawn system (ignored with true_params).
    double spectral_radius_min = 0.90;
    double spectral_radius_max = 0.98;
    double process_noise = 0.25;
    double obs_noise = 1.0;
    double emission_scale = 1.0;

    std::string start_time = "2015-01-01T00:00:00";
    int interval_seconds = 300;

    std::optional<LdsParams> true_params;
    bool allow_unstable = false;

    void validate() const;
};

struct SynthOutput {
    Panel panel;          // missingness applied
    Matrix truth;         // T x D, fully observed
    Matrix states;        // T x K
    LdsParams true_params;
    Matrix directions;    // D x K unit rows u_d
    double onset_intercept = 0.0;
};

/// Draws a latent trajectory, emissions and state-dependent dropout:
///   logit_{t,d} = b0 + alpha u_d^T z_t.
/// Pointwise mode samples every indicator with b0 = logit(base rate).
/// Block mode samples onsets from the same logistic form with b0 set so that
/// the long-run missing fraction equals the base rate at alpha = 0, and
/// extends each onset into a run of uniform length in [min, max].
SynthOutput generate(const SynthConfig& config);

/// Stationary covariance P = A P A^T + Q by fixed-point iteration.
Matrix stationary_covariance(const Matrix& A, const Matrix& Q);

}  // namespace blackout
