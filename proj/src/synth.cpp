#include "blackout/synth.hpp"

#include "blackout/mnar.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace blackout {

namespace {

Matrix random_orthogonal(int K, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix M(K, K);
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) M(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(M);
    return qr.householderQ();
}

LdsParams random_system(const SynthConfig& c, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> radius(c.spectral_radius_min, c.spectral_radius_max);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Matrix U = random_orthogonal(c.K, rng);
    Vector rho(c.K);
    for (int k = 0; k < c.K; ++k) rho(k) = radius(rng);

    LdsParams p;
    p.A = U * rho.asDiagonal() * U.transpose();
    p.Q = c.process_noise * Matrix::Identity(c.K, c.K);
    p.C.resize(c.D, c.K);
    for (int d = 0; d < c.D; ++d)
        for (int k = 0; k < c.K; ++k) p.C(d, k) = c.emission_scale * normal(rng);
    p.R_diag = Vector::Constant(c.D, c.obs_noise);
    p.mu0 = Vector::Zero(c.K);
    p.Sigma0 = stationary_covariance(p.A, p.Q);
    return p;
}

Vector draw_gaussian(const Vector& mean, const Matrix& cov, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector eps(mean.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(rng);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return mean + eig.eigenvectors() * root.asDiagonal() * eps;
}

}  // namespace

void SynthConfig::validate() const
{
    if (K < 1 || D < 1 || T < 1) throw InvalidArgument("K, D and T must be positive");
    if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be nonnegative");
    if (!(base_missing_rate > 0.0 && base_missing_rate < 1.0))
        throw InvalidArgument("base_missing_rate must lie in (0, 1)");
    if (min_block_len < 1 || min_block_len > max_block_len)
        throw InvalidArgument("block lengths must satisfy 1 <= min <= max");
    if (!(spectral_radius_min > 0.0 && spectral_radius_min <= spectral_radius_max))
        throw InvalidArgument("spectral radius range is invalid");
    if (!(process_noise >= 0.0) || !(obs_noise > 0.0))
        throw InvalidArgument("noise levels must be nonnegative (observation noise positive)");
    if (interval_seconds < 1) throw InvalidArgument("interval_seconds must be positive");
    if (blackout_mode == BlackoutMode::StateTriggeredBlocks) {
        const double mean_len = 0.5 * (min_block_len + max_block_len);
        if (base_missing_rate / (mean_len * (1.0 - base_missing_rate)) >= 1.0)
            throw InvalidArgument("base_missing_rate is unreachable with these block lengths");
    }
}

Matrix stationary_covariance(const Matrix& A, const Matrix& Q)
{
    Matrix P = Q;
    for (int i = 0; i < 100000; ++i) {
        Matrix next = A * P * A.transpose() + Q;
        symmetrize(next);
        const double change = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (change <= 1e-12 * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
    }
    return P;
}

SynthOutput generate(const SynthConfig& config)
{
    config.validate();
    std::mt19937_64 param_rng(derive_seed(config.seed, "synth/params"));
    std::mt19937_64 direction_rng(derive_seed(config.seed, "synth/directions"));
    std::mt19937_64 state_rng(derive_seed(config.seed, "synth/dynamics"));
    std::mt19937_64 miss_rng(derive_seed(config.seed, "synth/missingness"));

    SynthOutput out;
    out.true_params = config.true_params ? *config.true_params : random_system(config, param_rng);
    const LdsParams& p = out.true_params;
    p.validate();
    if (p.latent_dim() != config.K || p.obs_dim() != config.D)
        throw InvalidArgument("true_params dimensions do not match K and D");
    if (!config.allow_unstable && spectral_radius(p.A) >= 1.0)
        throw InvalidArgument("true_params are unstable (spectral radius >= 1)");

    const int T = config.T;
    const int D = config.D;
    const int K = config.K;

    std::normal_distribution<double> normal(0.0, 1.0);
    out.directions.resize(D, K);
    for (int d = 0; d < D; ++d) {
        Vector u(K);
        for (int k = 0; k < K; ++k) u(k) = normal(direction_rng);
        out.directions.row(d) = (u / u.norm()).transpose();
    }

    out.states.resize(T, K);
    out.truth.resize(T, D);
    Vector z = draw_gaussian(p.mu0, p.Sigma0, state_rng);
    const Vector noise_sd = p.R_diag.cwiseSqrt();
    for (int t = 0; t < T; ++t) {
        if (t > 0) z = draw_gaussian(p.A * z, p.Q, state_rng);
        out.states.row(t) = z.transpose();
        const Vector x = p.C * z;
        for (int d = 0; d < D; ++d) out.truth(t, d) = x(d) + noise_sd(d) * normal(state_rng);
    }

    const double rate = config.base_missing_rate;
    const bool blocks = config.blackout_mode == BlackoutMode::StateTriggeredBlocks;
    const double mean_len = 0.5 * (config.min_block_len + config.max_block_len);
    const double onset_rate = blocks ? rate / (mean_len * (1.0 - rate)) : rate;
    out.onset_intercept = std::log(onset_rate / (1.0 - onset_rate));

    const Matrix drive = out.states * out.directions.transpose();  // T x D of u_d^T z_t
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> block_len(config.min_block_len, config.max_block_len);
    Matrix values = out.truth;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (int d = 0; d < D; ++d) {
        for (int t = 0; t < T; ++t) {
            const double pi = sigmoid(out.onset_intercept + config.alpha * drive(t, d));
            if (unit(miss_rng) >= pi) continue;
            if (!blocks) {
                values(t, d) = nan;
                continue;
            }
            const int len = block_len(miss_rng);
            const int stop = std::min(T, t + len);
            for (int s = t; s < stop; ++s) values(s, d) = nan;
            t = stop - 1;
        }
    }

    const auto start = parse_timestamp(config.start_time);
    std::vector<Timestamp> stamps;
    stamps.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        stamps.push_back(start + std::chrono::seconds(static_cast<long>(t) * config.interval_seconds));
    std::vector<std::string> ids;
    for (int d = 0; d < D; ++d) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "det%03d", d);
        ids.emplace_back(buf);
    }
    out.panel = Panel::from_values(values, std::move(stamps), std::move(ids));
    return out;
}

}  // namespace blackout
