#pragma once

#include "blackout/lds.hpp"
#include "blackout/mnar.hpp"
#include "blackout/panel.hpp"

#include <vector>

namespace blackout {

/// Every learned quantity of the joint dynamics + dropout model.
struct ModelParams {
    LdsParams lds;
    MissingnessParams miss;
    bool mnar_enabled = false;

    int latent_dim() const { return lds.latent_dim(); }
    int obs_dim() const { return lds.obs_dim(); }
    void validate(int p, int q) const;
};

struct FilterTrace {
    std::vector<GaussianBelief> predicted;
    std::vector<GaussianBelief> filtered;
    std::vector<double> gauss_loglik;  // predictive density of observed entries
    std::vector<double> miss_loglik;   // Bernoulli terms, zero when MNAR is off

    int num_steps() const { return static_cast<int>(filtered.size()); }
    double total_gauss_loglik() const;
    double total_miss_loglik() const;
};

struct SmoothedTrace {
    std::vector<GaussianBelief> smoothed;
    int jitter_warnings = 0;

    int num_steps() const { return static_cast<int>(smoothed.size()); }
    /// T x K matrix of smoothed means.
    Matrix means() const;
};

/// Forward pass: predict, condition on observed detectors, then (when
/// params.mnar_enabled) fold in the missingness pseudo-observation.
FilterTrace filter_sequence(const Panel& panel, const TimeFeatures& time_features,
                            const StaticFeatures& static_features, const ModelParams& params);

/// Rauch-Tung-Striebel backward pass over stored filter moments.
SmoothedTrace rts_smooth(const FilterTrace& trace, const LdsParams& params);

}  // namespace blackout
