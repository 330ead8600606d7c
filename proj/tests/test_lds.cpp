#include "support.hpp"

#include "blackout/filter.hpp"

#include <doctest.h>

using namespace blackout;
using namespace testsupport;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

LdsParams scalar_lds(double a, double q, double c, double r, double mu0, double s0)
{
    LdsParams p;
    p.A = Matrix::Constant(1, 1, a);
    p.Q = Matrix::Constant(1, 1, q);
    p.C = Matrix::Constant(1, 1, c);
    p.R_diag = Vector::Constant(1, r);
    p.mu0 = Vector::Constant(1, mu0);
    p.Sigma0 = Matrix::Constant(1, 1, s0);
    return p;
}

ModelParams mar_model(const LdsParams& lds)
{
    ModelParams m;
    m.lds = lds;
    m.miss = MissingnessParams::zeros(lds.obs_dim(), lds.latent_dim(), 4, 0);
    return m;
}

FilterTrace run_filter(const Panel& panel, const LdsParams& lds)
{
    return filter_sequence(panel, build_time_features(panel.timestamps()),
                           StaticFeatures::none(panel.num_detectors()), mar_model(lds));
}

// Covariance-form Kalman filter with the usual gain, on a fully observed panel.
std::vector<GaussianBelief> textbook_kf(const Matrix& X, const LdsParams& p)
{
    std::vector<GaussianBelief> out;
    Vector m = p.mu0;
    Matrix P = p.Sigma0;
    const Matrix R = p.R_diag.asDiagonal();
    for (int t = 0; t < X.rows(); ++t) {
        if (t > 0) {
            m = p.A * m;
            P = p.A * P * p.A.transpose() + p.Q;
        }
        const Matrix S = p.C * P * p.C.transpose() + R;
        const Matrix G = P * p.C.transpose() * S.inverse();
        m = m + G * (X.row(t).transpose() - p.C * m);
        P = (Matrix::Identity(P.rows(), P.cols()) - G * p.C) * P;
        out.push_back({m, P});
    }
    return out;
}

}  // namespace

TEST_CASE("predict")
{
    std::mt19937_64 rng(1);
    SUBCASE("identity dynamics without noise leave the belief unchanged")
    {
        LdsParams p = random_lds(3, 2, rng);
        p.A = Matrix::Identity(3, 3);
        p.Q = Matrix::Zero(3, 3);
        const GaussianBelief b{random_matrix(3, 1, rng), random_spd(3, rng)};
        const auto out = predict(b, p);
        CHECK(max_abs_diff(out.mean, b.mean) == 0.0);
        CHECK(max_abs_diff(out.cov, b.cov) < 1e-15);
    }
    SUBCASE("zero mean stays zero")
    {
        const LdsParams p = random_lds(3, 2, rng);
        const auto out = predict({Vector::Zero(3), random_spd(3, rng)}, p);
        CHECK(out.mean.isZero(0.0));
    }
    SUBCASE("scalar hand arithmetic")
    {
        const auto p = scalar_lds(0.9, 0.1, 1.0, 1.0, 0.0, 1.0);
        const auto out = predict({Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 0.5)}, p);
        CHECK(out.mean(0) == doctest::Approx(0.9).epsilon(1e-14));
        CHECK(out.cov(0, 0) == doctest::Approx(0.505).epsilon(1e-14));
    }
}

TEST_CASE("measurement update")
{
    SUBCASE("nothing observed changes nothing")
    {
        std::mt19937_64 rng(2);
        const LdsParams p = random_lds(2, 3, rng);
        const GaussianBelief prior{random_matrix(2, 1, rng), random_spd(2, rng)};
        const bool obs[3] = {false, false, false};
        const auto out = update_observed(prior, Vector::Constant(3, kNaN), obs, p);
        CHECK(out.loglik == 0.0);
        CHECK(out.belief.mean == prior.mean);
        CHECK(out.belief.cov == prior.cov);
    }
    SUBCASE("scalar Bayes rule")
    {
        const auto p = scalar_lds(1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
        const bool obs[1] = {true};
        const auto out = update_observed({Vector::Zero(1), Matrix::Identity(1, 1)}, Vector::Constant(1, 2.0), obs, p);
        CHECK(out.belief.mean(0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(out.belief.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
        // log N(2; 0, 2)
        CHECK(out.loglik == doctest::Approx(-0.5 * (std::log(2.0 * M_PI * 2.0) + 2.0)));
    }
    SUBCASE("duplicated detector equals one reading with half the noise")
    {
        std::mt19937_64 rng(3);
        for (int rep = 0; rep < 20; ++rep) {
            const int K = uniform_int(rng, 1, 3);
            LdsParams two = random_lds(K, 2, rng);
            two.C.row(1) = two.C.row(0);
            two.R_diag(1) = two.R_diag(0);
            LdsParams one = two;
            one.C = two.C.topRows(1);
            one.R_diag = Vector::Constant(1, two.R_diag(0) / 2.0);
            const GaussianBelief prior{random_matrix(K, 1, rng), random_spd(K, rng)};
            const double x = uniform(rng, -3, 3);
            const bool obs2[2] = {true, true};
            const bool obs1[1] = {true};
            const auto a = update_observed(prior, Vector::Constant(2, x), obs2, two);
            const auto b = update_observed(prior, Vector::Constant(1, x), obs1, one);
            CHECK(max_abs_diff(a.belief.mean, b.belief.mean) < 1e-10);
            CHECK(max_abs_diff(a.belief.cov, b.belief.cov) < 1e-10);

            // Same against joint conditioning on the two readings.
            Matrix H(2, K);
            H << two.C;
            Matrix S = H * prior.cov * H.transpose();
            S.diagonal() += two.R_diag;
            const Matrix G = prior.cov * H.transpose() * S.inverse();
            const Vector mean = prior.mean + G * (Vector::Constant(2, x) - H * prior.mean);
            CHECK(max_abs_diff(a.belief.mean, mean) < 1e-9);
            CHECK(max_abs_diff(a.belief.cov, prior.cov - G * H * prior.cov) < 1e-9);
        }
    }
    SUBCASE("observations never inflate a marginal variance")
    {
        std::mt19937_64 rng(4);
        for (int rep = 0; rep < 100; ++rep) {
            const int K = uniform_int(rng, 1, 4), D = uniform_int(rng, 1, 6);
            const LdsParams p = random_lds(K, D, rng);
            const GaussianBelief prior{random_matrix(K, 1, rng), random_spd(K, rng)};
            std::unique_ptr<bool[]> obs(new bool[D]);
            for (int d = 0; d < D; ++d) obs[d] = uniform(rng, 0, 1) < 0.6;
            const auto out = update_observed(prior, random_matrix(D, 1, rng), std::span<const bool>(obs.get(), D), p);
            for (int k = 0; k < K; ++k) CHECK(out.belief.cov(k, k) <= prior.cov(k, k) + 1e-10);
            CHECK(min_eigenvalue(out.belief.cov) >= -1e-8);
            CHECK(max_abs_diff(out.belief.cov, out.belief.cov.transpose()) == 0.0);
        }
    }
}

TEST_CASE("filter edge cases")
{
    std::mt19937_64 rng(5);
    SUBCASE("single unobserved step returns the prior")
    {
        const LdsParams p = random_lds(2, 2, rng);
        const auto panel = Panel::from_values(Matrix::Constant(1, 2, kNaN), regular_timestamps(1), detector_names(2));
        const auto tr = run_filter(panel, p);
        REQUIRE(tr.num_steps() == 1);
        CHECK(tr.predicted[0].mean == p.mu0);
        CHECK(tr.filtered[0].mean == p.mu0);
        CHECK(max_abs_diff(tr.filtered[0].cov, p.Sigma0) == 0.0);
        const auto sm = rts_smooth(tr, p);
        CHECK(sm.smoothed[0].mean == tr.filtered[0].mean);
    }
    SUBCASE("detector count mismatch")
    {
        const LdsParams p = random_lds(2, 3, rng);
        const auto panel = random_panel(4, 2, 0.0, rng);
        CHECK_THROWS_AS(run_filter(panel, p), InvalidArgument);
    }
}

TEST_CASE("fully observed filter matches textbook Kalman filter")
{
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        const int K = uniform_int(rng, 1, 4), D = uniform_int(rng, 1, 5), T = uniform_int(rng, 2, 30);
        const LdsParams p = random_lds(K, D, rng);
        const auto panel = random_panel(T, D, 0.0, rng);
        const auto tr = run_filter(panel, p);
        const auto ref = textbook_kf(panel.values(), p);
        for (int t = 0; t < T; ++t) {
            CHECK(max_abs_diff(tr.filtered[t].mean, ref[t].mean) < 1e-8);
            CHECK(max_abs_diff(tr.filtered[t].cov, ref[t].cov) < 1e-8);
        }
    }
}

TEST_CASE("scalar three-step chain with a gap matches joint conditioning")
{
    const auto p = scalar_lds(0.8, 0.5, 1.0, 0.3, 0.2, 1.5);
    Matrix v(3, 1);
    v << 1.0, kNaN, -0.5;
    const auto panel = Panel::from_values(v, regular_timestamps(3), detector_names(1));
    const auto tr = run_filter(panel, p);
    const auto sm = rts_smooth(tr, p);

    // Hand-built joint of (z0, z1, z2).
    Matrix S(3, 3);
    const double s0 = 1.5, s1 = 0.64 * 1.5 + 0.5, s2 = 0.64 * s1 + 0.5;
    S << s0, 0.8 * s0, 0.64 * s0, 0.8 * s0, s1, 0.8 * s1, 0.64 * s0, 0.8 * s1, s2;
    const Vector m = (Vector(3) << 0.2, 0.16, 0.128).finished();
    auto condition = [&](const std::vector<int>& idx, const Vector& y) {
        Matrix H = Matrix::Zero(static_cast<int>(idx.size()), 3);
        for (std::size_t i = 0; i < idx.size(); ++i) H(static_cast<int>(i), idx[i]) = 1.0;
        Matrix Syy = H * S * H.transpose();
        Syy.diagonal().array() += 0.3;
        const Matrix G = S * H.transpose() * Syy.inverse();
        return std::pair<Vector, Matrix>{m + G * (y - H * m), S - G * H * S};
    };
    const auto [m0, P0] = condition({0}, Vector::Constant(1, 1.0));
    const auto [m2, P2] = condition({0, 2}, (Vector(2) << 1.0, -0.5).finished());
    CHECK(tr.filtered[0].mean(0) == doctest::Approx(m0(0)).epsilon(1e-12));
    CHECK(tr.filtered[1].mean(0) == doctest::Approx(m0(1)).epsilon(1e-12));
    CHECK(tr.filtered[1].cov(0, 0) == doctest::Approx(P0(1, 1)).epsilon(1e-12));
    CHECK(tr.filtered[2].mean(0) == doctest::Approx(m2(2)).epsilon(1e-12));
    for (int t = 0; t < 3; ++t) {
        CHECK(sm.smoothed[t].mean(0) == doctest::Approx(m2(t)).epsilon(1e-12));
        CHECK(sm.smoothed[t].cov(0, 0) == doctest::Approx(P2(t, t)).epsilon(1e-12));
    }
}

TEST_CASE("filter and smoother match brute-force conditioning on random instances")
{
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const int K = uniform_int(rng, 1, 3), D = uniform_int(rng, 1, 3), T = uniform_int(rng, 1, 6);
        const LdsParams p = random_lds(K, D, rng);
        const auto panel = random_panel(T, D, 0.35, rng);
        const auto tr = run_filter(panel, p);
        const auto sm = rts_smooth(tr, p);
        const auto full = joint_posterior(panel, p, T - 1);
        for (int t = 0; t < T; ++t) {
            const auto filt = joint_posterior(panel, p, t).marginal(t, K);
            CHECK(max_abs_diff(tr.filtered[t].mean, filt.mean) < 1e-6);
            CHECK(max_abs_diff(tr.filtered[t].cov, filt.cov) < 1e-6);
            const auto s = full.marginal(t, K);
            CHECK(max_abs_diff(sm.smoothed[t].mean, s.mean) < 1e-6);
            CHECK(max_abs_diff(sm.smoothed[t].cov, s.cov) < 1e-6);
            CHECK(min_eigenvalue(sm.smoothed[t].cov) >= -1e-8);
        }
        CHECK(tr.total_gauss_loglik() == doctest::Approx(joint_loglik(panel, p)).epsilon(1e-8));
    }
}

TEST_CASE("zero dynamics make smoothing a no-op")
{
    std::mt19937_64 rng(8);
    LdsParams p = random_lds(2, 3, rng);
    p.A = Matrix::Zero(2, 2);
    const auto panel = random_panel(8, 3, 0.3, rng);
    const auto tr = run_filter(panel, p);
    const auto sm = rts_smooth(tr, p);
    for (int t = 0; t < 8; ++t) {
        CHECK(max_abs_diff(sm.smoothed[t].mean, tr.filtered[t].mean) < 1e-14);
        CHECK(max_abs_diff(sm.smoothed[t].cov, tr.filtered[t].cov) < 1e-14);
    }
}

TEST_CASE("singular predicted covariance falls back to jitter")
{
    // Sigma0 = 0 and Q = 0 give a singular predicted covariance.
    auto p = scalar_lds(1.0, 0.0, 1.0, 1.0, 0.0, 0.0);
    Matrix v(3, 1);
    v << 0.0, 0.0, 0.0;
    const auto panel = Panel::from_values(v, regular_timestamps(3), detector_names(1));
    const auto tr = run_filter(panel, p);
    const auto sm = rts_smooth(tr, p);
    CHECK(sm.jitter_warnings > 0);
    for (const auto& b : sm.smoothed) CHECK(b.mean.allFinite());
}

TEST_CASE("parameter validation")
{
    std::mt19937_64 rng(9);
    LdsParams p = random_lds(2, 2, rng);
    CHECK_NOTHROW(p.validate());
    p.R_diag(1) = 0.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = random_lds(2, 2, rng);
    p.C = Matrix::Zero(2, 3);
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}
