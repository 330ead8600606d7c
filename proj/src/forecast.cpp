#include "blackout/forecast.hpp"

namespace blackout {

Matrix impute(const SmoothedTrace& smoothed, const LdsParams& params)
{
    if (smoothed.num_steps() == 0) return Matrix(0, params.obs_dim());
    return smoothed.means() * params.C.transpose();
}

ForecastResult forecast(const GaussianBelief& belief_at_b, const LdsParams& params, int k)
{
    if (k < 1) throw InvalidArgument("forecast horizon must be at least 1");
    ForecastResult out;
    out.horizon = k;
    out.latent = belief_at_b;
    for (int i = 0; i < k; ++i) out.latent = predict(out.latent, params);
    out.mean = params.C * out.latent.mean;
    out.obs_cov_diag =
        (params.C * out.latent.cov).cwiseProduct(params.C).rowwise().sum() + params.R_diag;
    return out;
}

GaussianBelief forecast_closed_form(const GaussianBelief& belief_at_b, const LdsParams& params, int k)
{
    if (k < 1) throw InvalidArgument("forecast horizon must be at least 1");
    const auto K = params.latent_dim();
    Matrix a_pow = Matrix::Identity(K, K);
    Matrix noise = Matrix::Zero(K, K);
    for (int i = 0; i < k; ++i) {
        noise += a_pow * params.Q * a_pow.transpose();
        a_pow = params.A * a_pow;
    }
    GaussianBelief out{a_pow * belief_at_b.mean,
                       a_pow * belief_at_b.cov * a_pow.transpose() + noise};
    symmetrize(out.cov);
    return out;
}

}  // namespace blackout
