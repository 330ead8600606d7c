#include "blackout/filter.hpp"

#include <memory>
#include <numeric>
#include <string>

namespace blackout {

void ModelParams::validate(int p, int q) const
{
    lds.validate();
    miss.validate(lds.latent_dim(), p, q);
    if (miss.obs_dim() != lds.obs_dim())
        throw InvalidArgument("missingness and emission parameters disagree on detector count");
}

double FilterTrace::total_gauss_loglik() const
{
    return std::accumulate(gauss_loglik.begin(), gauss_loglik.end(), 0.0);
}

double FilterTrace::total_miss_loglik() const
{
    return std::accumulate(miss_loglik.begin(), miss_loglik.end(), 0.0);
}

Matrix SmoothedTrace::means() const
{
    if (smoothed.empty()) return Matrix(0, 0);
    Matrix out(num_steps(), smoothed.front().mean.size());
    for (int t = 0; t < num_steps(); ++t) out.row(t) = smoothed[static_cast<std::size_t>(t)].mean.transpose();
    return out;
}

FilterTrace filter_sequence(const Panel& panel, const TimeFeatures& time_features,
                            const StaticFeatures& static_features, const ModelParams& params)
{
    const int T = panel.num_steps();
    const int D = panel.num_detectors();
    if (params.obs_dim() != D) throw InvalidArgument("model detector count does not match panel");
    if (params.mnar_enabled) {
        params.validate(time_features.dim(), static_features.dim());
        if (time_features.F.rows() != T) throw InvalidArgument("time features do not match panel");
        if (static_features.G.rows() != D) throw InvalidArgument("static features do not match panel");
    } else {
        params.lds.validate();
    }

    FilterTrace trace;
    trace.predicted.reserve(static_cast<std::size_t>(T));
    trace.filtered.reserve(static_cast<std::size_t>(T));
    trace.gauss_loglik.assign(static_cast<std::size_t>(T), 0.0);
    trace.miss_loglik.assign(static_cast<std::size_t>(T), 0.0);

    std::unique_ptr<bool[]> missing(new bool[static_cast<std::size_t>(D)]);
    std::unique_ptr<bool[]> include(new bool[static_cast<std::size_t>(D)]);
    const std::span<const bool> missing_row(missing.get(), static_cast<std::size_t>(D));
    const std::span<const bool> include_row(include.get(), static_cast<std::size_t>(D));

    for (int t = 0; t < T; ++t) {
        try {
            GaussianBelief prior = t == 0 ? GaussianBelief{params.lds.mu0, params.lds.Sigma0}
                                          : predict(trace.filtered.back(), params.lds);
            const Vector x_row = panel.values().row(t).transpose();
            auto measured = update_observed(prior, x_row, panel.observed_mask(), t, params.lds);
            trace.gauss_loglik[static_cast<std::size_t>(t)] = measured.loglik;

            if (params.mnar_enabled) {
                for (int d = 0; d < D; ++d) {
                    missing[static_cast<std::size_t>(d)] = !panel.observed(t, d);
                    include[static_cast<std::size_t>(d)] =
                        !(params.miss.skip_artificial && panel.artificial(t, d));
                }
                const Vector& lin = params.miss.linearize_at == LinearizeAt::Predicted
                                        ? prior.mean
                                        : measured.belief.mean;
                const Vector f = time_features.F.row(t).transpose();
                auto pseudo = mnar_pseudo_update(measured.belief, lin, missing_row, include_row, f,
                                                 params.miss, static_features);
                measured.belief = std::move(pseudo.belief);
                trace.miss_loglik[static_cast<std::size_t>(t)] = pseudo.miss_loglik;
            }
            trace.predicted.push_back(std::move(prior));
            trace.filtered.push_back(std::move(measured.belief));
        } catch (const NumericalError& e) {
            throw NumericalError("filter breakdown at t=" + std::to_string(t) + ": " + e.what());
        }
    }
    return trace;
}

SmoothedTrace rts_smooth(const FilterTrace& trace, const LdsParams& params)
{
    const int T = trace.num_steps();
    SmoothedTrace out;
    out.smoothed.resize(static_cast<std::size_t>(T));
    if (T == 0) return out;
    out.smoothed.back() = trace.filtered.back();

    const auto K = params.latent_dim();
    for (int t = T - 2; t >= 0; --t) {
        const auto& filt = trace.filtered[static_cast<std::size_t>(t)];
        const auto& pred_next = trace.predicted[static_cast<std::size_t>(t) + 1];
        const auto& smooth_next = out.smoothed[static_cast<std::size_t>(t) + 1];

        // G = Sigma_{t|t} A^T Sigma_{t+1|t}^{-1}, solved as Sigma_{t+1|t} G^T = A Sigma_{t|t}.
        const Matrix rhs = params.A * filt.cov;
        Eigen::LLT<Matrix> llt(pred_next.cov);
        Matrix gain_t;
        if (llt.info() == Eigen::Success) {
            gain_t = llt.solve(rhs);
        } else {
            ++out.jitter_warnings;
            Matrix jittered = pred_next.cov + 1e-9 * Matrix::Identity(K, K);
            Eigen::LDLT<Matrix> ldlt(jittered);
            gain_t = ldlt.solve(rhs);
        }
        const Matrix gain = gain_t.transpose();

        auto& s = out.smoothed[static_cast<std::size_t>(t)];
        s.mean = filt.mean + gain * (smooth_next.mean - pred_next.mean);
        s.cov = filt.cov + gain * (smooth_next.cov - pred_next.cov) * gain.transpose();
        symmetrize(s.cov);
        if (!s.mean.allFinite() || !s.cov.allFinite())
            throw NumericalError("smoother breakdown at t=" + std::to_string(t));
    }
    return out;
}

}  // namespace blackout
