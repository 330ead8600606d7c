#include "blackout/em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace blackout {

namespace {

constexpr double kRFloor = 1e-4;

// Solves S X = B for symmetric PSD S, adding jitter when S is not positive
// definite. Increments `warnings` whenever jitter was needed.
Matrix solve_psd(const Matrix& S, const Matrix& B, int& warnings)
{
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() == Eigen::Success) return llt.solve(B);
    ++warnings;
    const double scale = std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
    Matrix jittered = S;
    jittered.diagonal().array() += 1e-9 * scale;
    Eigen::LDLT<Matrix> ldlt(jittered);
    return ldlt.solve(B);
}

double median(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Observed-cell mean and (population) variance of one column.
std::pair<double, double> column_moments(const Panel& panel, int d, int& count)
{
    double sum = 0.0;
    double sq = 0.0;
    count = 0;
    for (int t = 0; t < panel.num_steps(); ++t) {
        if (!panel.observed(t, d)) continue;
        sum += panel.value(t, d);
        ++count;
    }
    if (count == 0) return {0.0, 0.0};
    const double mean = sum / count;
    for (int t = 0; t < panel.num_steps(); ++t) {
        if (!panel.observed(t, d)) continue;
        const double r = panel.value(t, d) - mean;
        sq += r * r;
    }
    return {mean, sq / count};
}

}  // namespace

void EmConfig::validate() const
{
    if (n_iterations < 0) throw InvalidArgument("n_iterations must be nonnegative");
    if (grad_steps_per_iter < 0) throw InvalidArgument("grad_steps_per_iter must be nonnegative");
    if (!(grad_lr >= 0.0)) throw InvalidArgument("grad_lr must be nonnegative");
    if (!(shrink_A >= 0.0 && shrink_A <= 1.0)) throw InvalidArgument("shrink_A must lie in [0, 1]");
    if (!(shrink_Q >= 0.0 && shrink_Q <= 1.0)) throw InvalidArgument("shrink_Q must lie in [0, 1]");
    if (K < 1) throw InvalidArgument("latent dimension K must be positive");
    if (!(w_miss >= 0.0)) throw InvalidArgument("w_miss must be nonnegative");
    if (!(constant_variance > 0.0)) throw InvalidArgument("constant_variance must be positive");
}

void apply_inference_settings(MissingnessParams& miss, const EmConfig& config)
{
    miss.w_miss = config.w_miss;
    miss.variance_mode = config.variance_mode;
    miss.constant_variance = config.constant_variance;
    miss.linearize_at = config.linearize_at;
    miss.skip_artificial = config.skip_artificial;
}

SufficientStats accumulate_stats(const Panel& panel, const SmoothedTrace& smoothed)
{
    const int T = smoothed.num_steps();
    const int D = panel.num_detectors();
    if (T != panel.num_steps()) throw InvalidArgument("smoothed trace does not match panel length");
    if (T == 0) throw InvalidArgument("cannot accumulate statistics over an empty panel");
    const auto K = smoothed.smoothed.front().mean.size();

    SufficientStats s;
    s.num_steps = T;
    s.sum_zz = Matrix::Zero(K, K);
    s.sum_zz_prev = Matrix::Zero(K, K);
    s.sum_zz_next = Matrix::Zero(K, K);
    s.sum_cross = Matrix::Zero(K, K);
    s.first = smoothed.smoothed.front();
    s.obs_zz.assign(static_cast<std::size_t>(D), Matrix::Zero(K, K));
    s.obs_xz = Matrix::Zero(D, K);
    s.obs_xx = Vector::Zero(D);
    s.obs_count = Eigen::VectorXi::Zero(D);

    // obs_zz starts as the negated sum over unobserved steps and is offset
    // by the full sum at the end; missing cells are the rare case.
    std::vector<Matrix>& missing_zz = s.obs_zz;
    for (int t = 0; t < T; ++t) {
        const auto& b = smoothed.smoothed[static_cast<std::size_t>(t)];
        Matrix ezz = b.cov;
        ezz.noalias() += b.mean * b.mean.transpose();
        s.sum_zz += ezz;
        if (t >= 1) {
            const auto& prev = smoothed.smoothed[static_cast<std::size_t>(t) - 1];
            s.sum_zz_next += ezz;
            s.sum_cross.noalias() += b.mean * prev.mean.transpose();
        }
        if (t <= T - 2) s.sum_zz_prev += ezz;
        for (int d = 0; d < D; ++d) {
            if (panel.observed(t, d)) {
                const double x = panel.value(t, d);
                s.obs_xz.row(d) += x * b.mean.transpose();
                s.obs_xx(d) += x * x;
                s.obs_count(d) += 1;
            } else {
                missing_zz[static_cast<std::size_t>(d)] -= ezz;
            }
        }
    }
    for (auto& m : s.obs_zz) m += s.sum_zz;
    return s;
}

EStepResult e_step(const Panel& panel, const TimeFeatures& time_features,
                   const StaticFeatures& static_features, const ModelParams& params)
{
    EStepResult out;
    out.filter = filter_sequence(panel, time_features, static_features, params);
    out.smoothed = rts_smooth(out.filter, params.lds);
    out.stats = accumulate_stats(panel, out.smoothed);
    return out;
}

LdsMStep m_step_lds(const SufficientStats& stats, const LdsParams& old_params,
                    const EmConfig& config, double trace_cap_Q)
{
    const auto K = old_params.latent_dim();
    const auto D = old_params.obs_dim();
    LdsMStep out;
    LdsParams& p = out.params;
    p = old_params;

    p.mu0 = stats.first.mean;
    p.Sigma0 = stats.first.cov;
    symmetrize(p.Sigma0);

    if (stats.num_steps >= 2) {
        // A_raw = sum_cross * sum_zz_prev^{-1}
        const Matrix a_raw =
            solve_psd(stats.sum_zz_prev, stats.sum_cross.transpose(), out.jitter_warnings).transpose();
        p.A = (1.0 - config.shrink_A) * a_raw + config.shrink_A * Matrix::Identity(K, K);

        const double n = static_cast<double>(stats.num_steps - 1);
        Matrix q = stats.sum_zz_next - p.A * stats.sum_cross.transpose() -
                   stats.sum_cross * p.A.transpose() + p.A * stats.sum_zz_prev * p.A.transpose();
        q /= n;
        symmetrize(q);
        // Project onto the PSD cone before shrinking.
        Eigen::SelfAdjointEigenSolver<Matrix> eig(q);
        const Vector clipped = eig.eigenvalues().cwiseMax(0.0);
        q = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        symmetrize(q);
        const double iso = q.trace() / static_cast<double>(K);
        q = (1.0 - config.shrink_Q) * q + config.shrink_Q * iso * Matrix::Identity(K, K);
        if (trace_cap_Q > 0.0 && q.trace() > trace_cap_Q) {
            q *= trace_cap_Q / q.trace();
            out.q_cap_fired = true;
        }
        p.Q = q;
    }

    for (int d = 0; d < D; ++d) {
        const int n = stats.obs_count(d);
        if (n == 0) continue;
        const Matrix& zz = stats.obs_zz[static_cast<std::size_t>(d)];
        const Vector xz = stats.obs_xz.row(d).transpose();
        const Vector c = solve_psd(zz, xz, out.jitter_warnings);
        p.C.row(d) = c.transpose();
        const double resid = (stats.obs_xx(d) - 2.0 * c.dot(xz) + c.dot(zz * c)) / n;
        p.R_diag(d) = std::max(resid, kRFloor);
    }

    out.spectral_radius_A = spectral_radius(p.A);
    return out;
}

MissingnessMStep m_step_missingness(const Panel& panel, const Matrix& smoothed_means,
                                    const TimeFeatures& time_features,
                                    const StaticFeatures& static_features,
                                    const MissingnessParams& params, const EmConfig& config)
{
    MissingnessMStep out{params, 0};
    if (config.grad_lr == 0.0) return out;
    auto& m = out.params;
    for (int step = 0; step < config.grad_steps_per_iter; ++step) {
        const auto g = loglik_gradients(panel, smoothed_means, time_features, static_features, m,
                                        panel.artificial_mask());
        for (int d = 0; d < panel.num_detectors(); ++d) {
            const bool finite = std::isfinite(g.b(d)) && g.Phi.row(d).allFinite() &&
                                g.Psi.row(d).allFinite() && g.Eta.row(d).allFinite();
            if (!finite) {
                ++out.skipped_detectors;
                continue;
            }
            m.b(d) += config.grad_lr * g.b(d);
            m.Phi.row(d) += config.grad_lr * g.Phi.row(d);
            m.Psi.row(d) += config.grad_lr * g.Psi.row(d);
            m.Eta.row(d) += config.grad_lr * g.Eta.row(d);
        }
    }
    return out;
}

std::string TrainingTrace::to_csv() const
{
    std::ostringstream out;
    out << "iteration,objective,gauss_loglik,miss_loglik,seconds,q_cap_fired,spectral_radius_A\n";
    for (const auto& r : iterations) {
        out << r.iteration << ',' << format_double(r.objective) << ','
            << format_double(r.gauss_loglik) << ',' << format_double(r.miss_loglik) << ','
            << format_double(r.seconds) << ',' << (r.q_cap_fired ? 1 : 0) << ','
            << format_double(r.spectral_radius_A) << '\n';
    }
    return out.str();
}

double default_trace_cap(const Panel& panel)
{
    std::vector<double> variances;
    for (int d = 0; d < panel.num_detectors(); ++d) {
        int count = 0;
        const auto [mean, var] = column_moments(panel, d, count);
        if (count >= 2) variances.push_back(var);
    }
    const double med = median(std::move(variances));
    return med > 0.0 ? 10.0 * med : 10.0;
}

FitResult fit(const Panel& panel, const TimeFeatures& time_features,
              const StaticFeatures& static_features, const ModelParams& init,
              const EmConfig& config)
{
    config.validate();
    if (init.obs_dim() != panel.num_detectors())
        throw InvalidArgument("model has " + std::to_string(init.obs_dim()) +
                              " detectors but the panel has " +
                              std::to_string(panel.num_detectors()));
    const double cap = config.trace_cap_Q > 0.0 ? config.trace_cap_Q : default_trace_cap(panel);

    FitResult out{init, {}};
    for (int it = 0; it < config.n_iterations; ++it) {
        const auto started = std::chrono::steady_clock::now();
        auto e = e_step(panel, time_features, static_features, out.params);

        IterationRecord rec;
        rec.iteration = it + 1;
        rec.gauss_loglik = e.filter.total_gauss_loglik();
        rec.miss_loglik = out.params.mnar_enabled ? e.filter.total_miss_loglik() : 0.0;
        rec.objective = rec.gauss_loglik + rec.miss_loglik;
        if (!std::isfinite(rec.objective))
            throw NumericalError("non-finite EM objective at iteration " + std::to_string(it + 1));

        auto lds = m_step_lds(e.stats, out.params.lds, config, cap);
        out.trace.warnings += lds.jitter_warnings + e.smoothed.jitter_warnings;
        rec.q_cap_fired = lds.q_cap_fired;
        rec.spectral_radius_A = lds.spectral_radius_A;
        if (lds.spectral_radius_A > 1.0 + config.shrink_A) ++out.trace.warnings;

        if (out.params.mnar_enabled) {
            auto miss = m_step_missingness(panel, e.smoothed.means(), time_features,
                                           static_features, out.params.miss, config);
            out.trace.warnings += miss.skipped_detectors;
            out.params.miss = std::move(miss.params);
        }
        out.params.lds = std::move(lds.params);
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        out.trace.iterations.push_back(rec);
    }
    return out;
}

FitResult fit_mar(const Panel& panel, const TimeFeatures& time_features,
                  const StaticFeatures& static_features, const EmConfig& config)
{
    ModelParams init =
        init_params(panel, config.K, config.seed, time_features.dim(), static_features.dim());
    init.mnar_enabled = false;
    init.miss = MissingnessParams::zeros(panel.num_detectors(), config.K, time_features.dim(),
                                         static_features.dim());
    apply_inference_settings(init.miss, config);
    return fit(panel, time_features, static_features, init, config);
}

FitResult fit_mnar_warm(const Panel& panel, const TimeFeatures& time_features,
                        const StaticFeatures& static_features, const LdsParams& mar_lds,
                        const EmConfig& config)
{
    ModelParams init;
    init.lds = mar_lds;
    init.miss = empirical_missingness(panel, mar_lds.latent_dim(), time_features.dim(),
                                      static_features.dim());
    apply_inference_settings(init.miss, config);
    init.mnar_enabled = true;
    return fit(panel, time_features, static_features, init, config);
}

TwoPhaseResult fit_two_phase(const Panel& panel, const TimeFeatures& time_features,
                             const StaticFeatures& static_features, const EmConfig& config)
{
    TwoPhaseResult out;
    out.mar = fit_mar(panel, time_features, static_features, config);
    out.mnar = fit_mnar_warm(panel, time_features, static_features, out.mar.params.lds, config);
    return out;
}

MissingnessParams empirical_missingness(const Panel& panel, int K, int p, int q)
{
    auto miss = MissingnessParams::zeros(panel.num_detectors(), K, p, q);
    for (int d = 0; d < panel.num_detectors(); ++d) {
        int eligible = 0;
        int missing = 0;
        for (int t = 0; t < panel.num_steps(); ++t) {
            if (panel.artificial(t, d)) continue;
            ++eligible;
            missing += panel.observed(t, d) ? 0 : 1;
        }
        double logit = -6.0;
        if (eligible > 0 && missing > 0) {
            const double rate = static_cast<double>(missing) / eligible;
            logit = rate >= 1.0 ? 6.0 : std::log(rate / (1.0 - rate));
        }
        miss.b(d) = std::clamp(logit, -6.0, 6.0);
    }
    return miss;
}

ModelParams init_params(const Panel& panel, int K, std::uint64_t seed, int time_dim, int static_dim)
{
    if (K < 1) throw InvalidArgument("latent dimension K must be positive");
    const int T = panel.num_steps();
    const int D = panel.num_detectors();
    if (T == 0 || D == 0) throw InvalidArgument("cannot initialize from an empty panel");

    // Column-mean imputation, then principal directions of the uncentered
    // panel via the D x D Gram matrix.
    Matrix X(T, D);
    std::vector<double> col_var(static_cast<std::size_t>(D), 0.0);
    std::vector<int> col_count(static_cast<std::size_t>(D), 0);
    double global_sum = 0.0;
    double global_sq = 0.0;
    long global_n = 0;
    for (int d = 0; d < D; ++d) {
        int count = 0;
        const auto [mean, var] = column_moments(panel, d, count);
        col_var[static_cast<std::size_t>(d)] = var;
        col_count[static_cast<std::size_t>(d)] = count;
        for (int t = 0; t < T; ++t) {
            if (panel.observed(t, d)) {
                X(t, d) = panel.value(t, d);
                global_sum += X(t, d);
                global_sq += X(t, d) * X(t, d);
                ++global_n;
            } else {
                X(t, d) = mean;
            }
        }
    }
    const double global_mean = global_n > 0 ? global_sum / global_n : 0.0;
    const double global_var =
        global_n > 1 ? std::max(global_sq / global_n - global_mean * global_mean, 0.0) : 1.0;

    Matrix gram = X.transpose() * X;
    symmetrize(gram);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success) throw NumericalError("initial eigendecomposition failed");

    ModelParams out;
    LdsParams& lds = out.lds;
    lds.C = Matrix::Zero(D, K);
    const int take = std::min(K, D);
    const double root_t = std::sqrt(static_cast<double>(T));
    double scale = 0.0;
    for (int k = 0; k < take; ++k) {
        const int idx = D - 1 - k;  // eigenvalues ascend
        const double sv = std::sqrt(std::max(eig.eigenvalues()(idx), 0.0));
        lds.C.col(k) = eig.eigenvectors().col(idx) * (sv / root_t);
        scale = std::max(scale, sv / root_t);
    }
    // Directions beyond the panel rank get small seeded noise.
    std::mt19937_64 rng(derive_seed(seed, "init_params"));
    std::normal_distribution<double> noise(0.0, 1e-2 * std::max(scale, 1.0));
    for (int k = take; k < K; ++k)
        for (int d = 0; d < D; ++d) lds.C(d, k) = noise(rng);

    lds.A = 0.99 * Matrix::Identity(K, K);
    lds.Q = 0.01 * Matrix::Identity(K, K);
    lds.mu0 = Vector::Zero(K);
    lds.Sigma0 = Matrix::Identity(K, K);
    lds.R_diag.resize(D);
    for (int d = 0; d < D; ++d) {
        const auto i = static_cast<std::size_t>(d);
        const double var = col_count[i] >= 2 ? col_var[i] : global_var;
        lds.R_diag(d) = std::max(var, 1e-2);
    }

    out.miss = empirical_missingness(panel, K, time_dim, static_dim);
    out.mnar_enabled = false;
    return out;
}

}  // namespace blackout
