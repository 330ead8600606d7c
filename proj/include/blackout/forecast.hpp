#pragma once

#include "blackout/filter.hpp"

namespace blackout {

struct ForecastResult {
    int horizon = 0;
    GaussianBelief latent;   // belief at b + k given data through b
    Vector mean;             // C mu_{b+k|b}
    Vector obs_cov_diag;     // diag(C Sigma_{b+k|b} C^T + R)
};

/// Observation-space reconstruction x_t = C mu_{t|T}, one row per step.
Matrix impute(const SmoothedTrace& smoothed, const LdsParams& params);

/// Rolls the belief forward k steps with the dynamics only (no further
/// measurements) and maps it to observation space.
ForecastResult forecast(const GaussianBelief& belief_at_b, const LdsParams& params, int k);

/// Same rollout evaluated through A^k and sum_i A^i Q (A^T)^i.
GaussianBelief forecast_closed_form(const GaussianBelief& belief_at_b, const LdsParams& params,
                                    int k);

}  // namespace blackout
