#include "support.hpp"

#include "blackout/em.hpp"
#include "blackout/eval.hpp"
#include "blackout/forecast.hpp"
#include "blackout/synth.hpp"

#include <doctest.h>

using namespace blackout;
using namespace testsupport;

namespace {

struct Setup {
    Panel panel;
    TimeFeatures tf;
    StaticFeatures sf;
};

Setup setup(Panel panel)
{
    auto tf = build_time_features(panel.timestamps());
    auto sf = StaticFeatures::none(panel.num_detectors());
    return {std::move(panel), std::move(tf), std::move(sf)};
}

// Draws a panel from a known LDS with the given noise, fully observed.
Panel simulate(const LdsParams& p, int T, std::mt19937_64& rng)
{
    const int K = p.latent_dim(), D = p.obs_dim();
    std::normal_distribution<double> n(0.0, 1.0);
    const Matrix LQ = Eigen::LLT<Matrix>(p.Q).matrixL();
    Vector z = p.mu0;
    Matrix X(T, D);
    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            Vector e(K);
            for (int k = 0; k < K; ++k) e(k) = n(rng);
            z = p.A * z + LQ * e;
        }
        for (int d = 0; d < D; ++d) X(t, d) = p.C.row(d).dot(z) + std::sqrt(p.R_diag(d)) * n(rng);
    }
    return Panel::from_values(X, regular_timestamps(T), detector_names(D));
}

bool same_trace(const TrainingTrace& a, const TrainingTrace& b)
{
    if (a.iterations.size() != b.iterations.size() || a.warnings != b.warnings) return false;
    for (std::size_t i = 0; i < a.iterations.size(); ++i) {
        const auto& x = a.iterations[i];
        const auto& y = b.iterations[i];
        if (x.objective != y.objective || x.gauss_loglik != y.gauss_loglik || x.miss_loglik != y.miss_loglik ||
            x.spectral_radius_A != y.spectral_radius_A || x.q_cap_fired != y.q_cap_fired)
            return false;
    }
    return true;
}

bool same_lds(const LdsParams& a, const LdsParams& b)
{
    return a.A == b.A && a.Q == b.Q && a.C == b.C && a.R_diag == b.R_diag && a.mu0 == b.mu0 && a.Sigma0 == b.Sigma0;
}

}  // namespace

TEST_CASE("sufficient statistics")
{
    std::mt19937_64 rng(1);
    SUBCASE("single step has no transition terms")
    {
        auto s = setup(random_panel(1, 2, 0.0, rng));
        ModelParams p{random_lds(2, 2, rng), MissingnessParams::zeros(2, 2, 4, 0), false};
        const auto e = e_step(s.panel, s.tf, s.sf, p);
        CHECK(e.stats.sum_cross.isZero(0.0));
        CHECK(e.stats.sum_zz_prev.isZero(0.0));
        CHECK(e.stats.sum_zz_next.isZero(0.0));
    }
    SUBCASE("zero covariance reduces moments to mean outer products")
    {
        const auto panel = random_panel(5, 2, 0.2, rng);
        SmoothedTrace sm;
        Matrix expect = Matrix::Zero(3, 3);
        for (int t = 0; t < 5; ++t) {
            const Vector m = random_matrix(3, 1, rng);
            sm.smoothed.push_back({m, Matrix::Zero(3, 3)});
            expect += m * m.transpose();
        }
        const auto st = accumulate_stats(panel, sm);
        CHECK(max_abs_diff(st.sum_zz, expect) < 1e-12);
    }
    SUBCASE("accumulators match sums over oracle moments")
    {
        for (int rep = 0; rep < 10; ++rep) {
            const int K = uniform_int(rng, 1, 3), D = uniform_int(rng, 1, 3), T = uniform_int(rng, 2, 6);
            auto s = setup(random_panel(T, D, 0.3, rng));
            ModelParams p{random_lds(K, D, rng), MissingnessParams::zeros(D, K, 4, 0), false};
            const auto st = e_step(s.panel, s.tf, s.sf, p).stats;
            const auto oracle = joint_posterior(s.panel, p.lds, T - 1);
            Matrix zz = Matrix::Zero(K, K), cross = Matrix::Zero(K, K), prev = Matrix::Zero(K, K);
            Matrix xz = Matrix::Zero(D, K);
            std::vector<Matrix> obs(D, Matrix::Zero(K, K));
            for (int t = 0; t < T; ++t) {
                const auto b = oracle.marginal(t, K);
                const Matrix ezz = b.cov + b.mean * b.mean.transpose();
                zz += ezz;
                if (t < T - 1) prev += ezz;
                if (t > 0) cross += b.mean * oracle.marginal(t - 1, K).mean.transpose();
                for (int d = 0; d < D; ++d)
                    if (s.panel.observed(t, d)) {
                        obs[d] += ezz;
                        xz.row(d) += s.panel.value(t, d) * b.mean.transpose();
                    }
            }
            CHECK(max_abs_diff(st.sum_zz, zz) < 1e-6);
            CHECK(max_abs_diff(st.sum_zz_prev, prev) < 1e-6);
            CHECK(max_abs_diff(st.sum_cross, cross) < 1e-6);
            CHECK(max_abs_diff(st.obs_xz, xz) < 1e-6);
            for (int d = 0; d < D; ++d) CHECK(max_abs_diff(st.obs_zz[d], obs[d]) < 1e-6);
        }
    }
}

TEST_CASE("LDS M-step")
{
    std::mt19937_64 rng(2);
    auto s = setup(random_panel(40, 3, 0.2, rng));
    ModelParams p{random_lds(2, 3, rng), MissingnessParams::zeros(3, 2, 4, 0), false};
    const auto st = e_step(s.panel, s.tf, s.sf, p).stats;

    SUBCASE("full shrinkage gives identity dynamics")
    {
        EmConfig cfg;
        cfg.shrink_A = 1.0;
        CHECK(m_step_lds(st, p.lds, cfg, 0.0).params.A == Matrix::Identity(2, 2));
    }
    SUBCASE("a detector with no readings keeps its emission row and noise")
    {
        Matrix v = s.panel.values();
        v.col(1).setConstant(std::numeric_limits<double>::quiet_NaN());
        auto s2 = setup(Panel::from_values(v, s.panel.timestamps(), s.panel.detector_ids()));
        const auto st2 = e_step(s2.panel, s2.tf, s2.sf, p).stats;
        const auto out = m_step_lds(st2, p.lds, EmConfig{}, 0.0).params;
        CHECK(out.C.row(1) == p.lds.C.row(1));
        CHECK(out.R_diag(1) == p.lds.R_diag(1));
        CHECK(out.C.row(0) != p.lds.C.row(0));
    }
    SUBCASE("stabilized outputs stay in the admissible set")
    {
        for (int rep = 0; rep < 30; ++rep) {
            const int K = uniform_int(rng, 1, 4), D = uniform_int(rng, 1, 5);
            auto si = setup(random_panel(uniform_int(rng, 3, 60), D, 0.3, rng));
            ModelParams pi{random_lds(K, D, rng), MissingnessParams::zeros(D, K, 4, 0), false};
            const auto sti = e_step(si.panel, si.tf, si.sf, pi).stats;
            EmConfig cfg;
            const double cap = uniform(rng, 0.01, 2.0);
            const auto out = m_step_lds(sti, pi.lds, cfg, cap);
            CHECK(max_abs_diff(out.params.Q, out.params.Q.transpose()) == 0.0);
            CHECK(min_eigenvalue(out.params.Q) >= -1e-10);
            CHECK(out.params.Q.trace() <= cap + 1e-9);
            CHECK(out.params.R_diag.minCoeff() >= 1e-4);
            CHECK(out.spectral_radius_A == doctest::Approx(spectral_radius(out.params.A)));
        }
    }
}

TEST_CASE("noiseless LDS data is reconstructed by the fitted emissions")
{
    std::mt19937_64 rng(3);
    LdsParams truth = random_lds(2, 6, rng);
    truth.R_diag.setConstant(1e-6);
    auto s = setup(simulate(truth, 600, rng));
    EmConfig cfg;
    cfg.K = 2;
    cfg.shrink_A = 0.0;
    cfg.shrink_Q = 0.0;
    cfg.n_iterations = 10;
    const auto fitted = fit_mar(s.panel, s.tf, s.sf, cfg);
    const auto e = e_step(s.panel, s.tf, s.sf, fitted.params);
    const Matrix xhat = impute(e.smoothed, fitted.params.lds);
    const double rmse = std::sqrt((xhat - s.panel.values()).squaredNorm() / xhat.size());
    CHECK(rmse < 0.05);
}

TEST_CASE("missingness M-step")
{
    std::mt19937_64 rng(4);
    auto s = setup(random_panel(50, 3, 0.3, rng));
    const Matrix z = random_matrix(50, 2, rng);
    auto miss = MissingnessParams::zeros(3, 2, 4, 0);
    miss.b = random_matrix(3, 1, rng);
    miss.Phi = random_matrix(3, 2, rng);

    SUBCASE("zero learning rate")
    {
        EmConfig cfg;
        cfg.grad_lr = 0.0;
        const auto out = m_step_missingness(s.panel, z, s.tf, s.sf, miss, cfg).params;
        CHECK(out.b == miss.b);
        CHECK(out.Phi == miss.Phi);
        CHECK(out.Psi == miss.Psi);
    }
    SUBCASE("stationary point is kept")
    {
        // Half the cells of each detector missing, pi = 0.5 and z = 0 everywhere.
        Matrix v = Matrix::Ones(10, 2);
        for (int t = 0; t < 10; t += 2) v.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
        auto s2 = setup(Panel::from_values(v, regular_timestamps(10), detector_names(2)));
        const auto zero = MissingnessParams::zeros(2, 1, 0, 0);
        const auto out =
            m_step_missingness(s2.panel, Matrix::Zero(10, 1), TimeFeatures{Matrix(10, 0)}, s2.sf, zero, EmConfig{})
                .params;
        CHECK(out.b.isZero(0.0));
        CHECK(out.Phi.isZero(0.0));
    }
    SUBCASE("one ascent step raises every detector's log-likelihood")
    {
        for (int rep = 0; rep < 30; ++rep) {
            const int D = uniform_int(rng, 1, 4), K = uniform_int(rng, 1, 3), T = uniform_int(rng, 5, 80);
            auto si = setup(random_panel(T, D, uniform(rng, 0.1, 0.6), rng));
            const Matrix zi = random_matrix(T, K, rng);
            auto mi = MissingnessParams::zeros(D, K, 4, 0);
            mi.b = random_matrix(D, 1, rng);
            mi.Phi = random_matrix(D, K, rng);
            EmConfig cfg;
            cfg.grad_steps_per_iter = 1;
            const BoolMatrix none = BoolMatrix::Constant(T, D, false);
            const auto before = bernoulli_loglik(si.panel, zi, si.tf, si.sf, mi, none).per_detector;
            const auto next = m_step_missingness(si.panel, zi, si.tf, si.sf, mi, cfg).params;
            const auto after = bernoulli_loglik(si.panel, zi, si.tf, si.sf, next, none).per_detector;
            for (int d = 0; d < D; ++d) CHECK(after(d) >= before(d));
        }
    }
    SUBCASE("artificially masked cells are never read")
    {
        const Panel truth = random_panel(50, 3, 0.0, rng);
        Matrix other = truth.values();
        const std::vector<MaskInterval> w{{0, 5, 12}, {2, 30, 41}};
        for (const auto& iv : w)
            for (int t = iv.start; t <= iv.end; ++t) other(t, iv.detector) += 100.0;
        const auto a = apply_artificial_mask(truth, w);
        const auto b = apply_artificial_mask(Panel::from_values(other, truth.timestamps(), truth.detector_ids()), w);
        const auto ra = m_step_missingness(a, z, s.tf, s.sf, miss, EmConfig{}).params;
        const auto rb = m_step_missingness(b, z, s.tf, s.sf, miss, EmConfig{}).params;
        CHECK(ra.b == rb.b);
        CHECK(ra.Phi == rb.Phi);

        // Excluded cells leave no trace in the gradient, whether they read
        // as missing or observed.
        const auto g = loglik_gradients(a, z, s.tf, s.sf, miss, a.artificial_mask());
        const auto g_obs = loglik_gradients(truth, z, s.tf, s.sf, miss, a.artificial_mask());
        CHECK(max_abs_diff(g.Phi, g_obs.Phi) == 0.0);
    }
}

TEST_CASE("initialization")
{
    std::mt19937_64 rng(5);
    SUBCASE("intercepts from empirical missing rates")
    {
        Matrix v = random_matrix(100, 2, rng);
        for (int t = 0; t < 10; ++t) v(t * 10, 0) = std::numeric_limits<double>::quiet_NaN();
        const auto panel = Panel::from_values(v, regular_timestamps(100), detector_names(2));
        const auto p = init_params(panel, 2, 0);
        CHECK(p.miss.b(0) == doctest::Approx(-2.1972245773).epsilon(1e-9));
        CHECK(p.miss.b(1) == -6.0);
        CHECK_FALSE(p.mnar_enabled);
        CHECK(p.lds.A == 0.99 * Matrix::Identity(2, 2));
    }
    SUBCASE("artificial cells do not count toward the rate")
    {
        const auto panel = random_panel(100, 1, 0.0, rng);
        const std::vector<MaskInterval> w{{0, 10, 29}};
        CHECK(empirical_missingness(apply_artificial_mask(panel, w), 1, 4, 0).b(0) == -6.0);
    }
    SUBCASE("exact rank-K panel lies in the span of the initial emissions")
    {
        const Matrix X = random_matrix(80, 3, rng) * random_matrix(3, 7, rng);
        const auto panel = Panel::from_values(X, regular_timestamps(80), detector_names(7));
        const Matrix C = init_params(panel, 3, 1).lds.C;
        const Matrix proj = C * (C.transpose() * C).inverse() * C.transpose();
        CHECK(max_abs_diff(X * proj, X) < 1e-8);
    }
    SUBCASE("K larger than D is padded deterministically")
    {
        const auto panel = random_panel(30, 2, 0.1, rng);
        const auto a = init_params(panel, 4, 9);
        const auto b = init_params(panel, 4, 9);
        CHECK(a.lds.C.cols() == 4);
        CHECK(a.lds.C == b.lds.C);
        CHECK_THROWS_AS(init_params(panel, 0, 0), InvalidArgument);
    }
}

TEST_CASE("fit")
{
    std::mt19937_64 rng(6);
    auto s = setup(random_panel(60, 4, 0.2, rng));
    EmConfig cfg;
    cfg.K = 2;
    cfg.n_iterations = 4;
    const auto init = init_params(s.panel, 2, 0);

    SUBCASE("zero iterations returns the initial parameters")
    {
        EmConfig zero = cfg;
        zero.n_iterations = 0;
        const auto out = fit(s.panel, s.tf, s.sf, init, zero);
        CHECK(same_lds(out.params.lds, init.lds));
        CHECK(out.trace.iterations.empty());
    }
    SUBCASE("runs are bit-identical")
    {
        const auto a = fit_two_phase(s.panel, s.tf, s.sf, cfg);
        const auto b = fit_two_phase(s.panel, s.tf, s.sf, cfg);
        CHECK(same_trace(a.mar.trace, b.mar.trace));
        CHECK(same_trace(a.mnar.trace, b.mnar.trace));
        CHECK(same_lds(a.mnar.params.lds, b.mnar.params.lds));
        CHECK(a.mnar.params.miss.Phi == b.mnar.params.miss.Phi);
        CHECK(a.mar.trace.iterations.size() == 4);
    }
    SUBCASE("MAR fit ignores the dropout parameters")
    {
        ModelParams other = init;
        other.miss.b.setConstant(3.0);
        other.miss.Phi = random_matrix(4, 2, rng);
        const auto a = fit(s.panel, s.tf, s.sf, init, cfg);
        const auto b = fit(s.panel, s.tf, s.sf, other, cfg);
        CHECK(same_lds(a.params.lds, b.params.lds));
        CHECK(same_trace(a.trace, b.trace));
    }
    SUBCASE("mismatched detector count")
    {
        auto bad = init;
        bad.lds.C = Matrix::Zero(3, 2);
        bad.lds.R_diag = Vector::Ones(3);
        CHECK_THROWS_AS(fit(s.panel, s.tf, s.sf, bad, cfg), InvalidArgument);
    }
    SUBCASE("invalid config")
    {
        EmConfig bad = cfg;
        bad.shrink_A = 1.5;
        CHECK_THROWS_AS(fit(s.panel, s.tf, s.sf, init, bad), InvalidArgument);
    }
}

TEST_CASE("MAR objective rises over ten iterations on fully observed LDS data")
{
    int improved = 0;
    for (int seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const LdsParams truth = random_lds(2, 5, rng);
        auto s = setup(simulate(truth, 400, rng));
        EmConfig cfg;
        cfg.K = 2;
        cfg.seed = static_cast<std::uint64_t>(seed);
        const auto out = fit_mar(s.panel, s.tf, s.sf, cfg);
        REQUIRE(out.trace.iterations.size() == 10);
        if (out.trace.iterations.back().gauss_loglik > out.trace.iterations.front().gauss_loglik) ++improved;
    }
    CHECK(improved >= 9);
}

TEST_CASE("two-phase training learns state coupling under dependent dropout")
{
    SynthConfig sc;
    sc.T = 2000;
    sc.D = 6;
    sc.alpha = 0.4;
    sc.seed = 7;
    const auto data = generate(sc);
    auto s = setup(data.panel);
    EmConfig cfg;
    cfg.K = 4;
    cfg.n_iterations = 3;
    const auto out = fit_two_phase(s.panel, s.tf, s.sf, cfg);
    CHECK(out.mnar.params.mnar_enabled);
    CHECK_FALSE(out.mar.params.mnar_enabled);
    CHECK(out.mnar.params.miss.Phi.norm() > 0.0);
    for (const auto& r : out.mnar.trace.iterations) CHECK(r.miss_loglik < 0.0);
}
