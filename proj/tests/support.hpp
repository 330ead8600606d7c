#pragma once

// Shared generators and independent oracles for the test binaries.

#include "blackout/filter.hpp"
#include "blackout/panel.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using blackout::BoolMatrix;
using blackout::GaussianBelief;
using blackout::LdsParams;
using blackout::Matrix;
using blackout::Panel;
using blackout::Timestamp;
using blackout::Vector;

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

inline Matrix random_spd(int k, std::mt19937_64& rng, double ridge = 0.2)
{
    const Matrix B = random_matrix(k, k, rng, 0.7);
    return B * B.transpose() + ridge * Matrix::Identity(k, k);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline LdsParams random_lds(int K, int D, std::mt19937_64& rng)
{
    LdsParams p;
    Matrix A = random_matrix(K, K, rng);
    const double rho = blackout::spectral_radius(A);
    A *= uniform(rng, 0.3, 0.95) / std::max(rho, 1e-6);
    p.A = A;
    p.Q = random_spd(K, rng, 0.1);
    p.C = random_matrix(D, K, rng);
    p.R_diag = Vector(D);
    for (int d = 0; d < D; ++d) p.R_diag(d) = uniform(rng, 0.2, 1.5);
    p.mu0 = random_matrix(K, 1, rng);
    p.Sigma0 = random_spd(K, rng, 0.3);
    return p;
}

inline std::vector<Timestamp> regular_timestamps(int T, int interval_seconds = 300,
                                                 const char* start = "2015-01-01T00:00:00")
{
    std::vector<Timestamp> out;
    const auto t0 = blackout::parse_timestamp(start);
    for (int t = 0; t < T; ++t) out.push_back(t0 + std::chrono::seconds(static_cast<long>(t) * interval_seconds));
    return out;
}

inline std::vector<std::string> detector_names(int D)
{
    std::vector<std::string> ids;
    for (int d = 0; d < D; ++d) ids.push_back("d" + std::to_string(d));
    return ids;
}

/// Panel of random values with each cell missing with probability `miss`.
inline Panel random_panel(int T, int D, double miss, std::mt19937_64& rng)
{
    Matrix v = random_matrix(T, D, rng, 2.0);
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < D; ++d)
            if (uniform(rng, 0.0, 1.0) < miss) v(t, d) = std::numeric_limits<double>::quiet_NaN();
    return Panel::from_values(v, regular_timestamps(T), detector_names(D));
}

/// Exact posterior of every z_t given a chosen subset of scalar
/// observations, by conditioning the full (T*K)-dimensional joint Gaussian.
struct JointOracle {
    Vector mean;  // T*K
    Matrix cov;   // T*K x T*K

    GaussianBelief marginal(int t, int K) const
    {
        return {mean.segment(t * K, K), cov.block(t * K, t * K, K, K)};
    }
};

/// Conditions the joint prior on observed cells (t, d) with t <= last_step.
inline JointOracle joint_posterior(const Panel& panel, const LdsParams& p, int last_step)
{
    const int T = panel.num_steps();
    const int K = p.latent_dim();
    const int N = T * K;

    // Prior: z_t = A^t mu0 + sum of propagated noise.
    Vector m(N);
    std::vector<Matrix> P(static_cast<std::size_t>(T));
    Vector cur = p.mu0;
    Matrix Pt = p.Sigma0;
    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            cur = p.A * cur;
            Pt = p.A * Pt * p.A.transpose() + p.Q;
        }
        m.segment(t * K, K) = cur;
        P[static_cast<std::size_t>(t)] = Pt;
    }
    Matrix S(N, N);
    for (int t = 0; t < T; ++t) {
        Matrix Apow = Matrix::Identity(K, K);
        for (int s = t; s < T; ++s) {
            // Cov(z_s, z_t) = A^{s-t} P_t
            const Matrix block = Apow * P[static_cast<std::size_t>(t)];
            S.block(s * K, t * K, K, K) = block;
            S.block(t * K, s * K, K, K) = block.transpose();
            Apow = p.A * Apow;
        }
    }

    std::vector<std::pair<int, int>> cells;
    for (int t = 0; t <= last_step && t < T; ++t)
        for (int d = 0; d < panel.num_detectors(); ++d)
            if (panel.observed(t, d)) cells.emplace_back(t, d);
    if (cells.empty()) return {m, S};

    const int n = static_cast<int>(cells.size());
    Matrix H = Matrix::Zero(n, N);
    Vector y(n);
    Vector r(n);
    for (int i = 0; i < n; ++i) {
        const auto [t, d] = cells[static_cast<std::size_t>(i)];
        H.block(i, t * K, 1, K) = p.C.row(d);
        y(i) = panel.value(t, d);
        r(i) = p.R_diag(d);
    }
    Matrix Syy = H * S * H.transpose();
    Syy.diagonal() += r;
    const Matrix Szy = S * H.transpose();
    Eigen::LDLT<Matrix> solver(Syy);
    JointOracle out;
    out.mean = m + Szy * solver.solve(y - H * m);
    out.cov = S - Szy * solver.solve(Szy.transpose());
    return out;
}

/// log N(y; H m, H S H^T + R) of all observed cells, computed jointly.
inline double joint_loglik(const Panel& panel, const LdsParams& p)
{
    const int T = panel.num_steps();
    const int K = p.latent_dim();
    const auto prior = joint_posterior(
        Panel::from_values(Matrix::Constant(T, panel.num_detectors(),
                                            std::numeric_limits<double>::quiet_NaN()),
                           panel.timestamps(), panel.detector_ids()),
        p, -1);
    std::vector<std::pair<int, int>> cells;
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < panel.num_detectors(); ++d)
            if (panel.observed(t, d)) cells.emplace_back(t, d);
    const int n = static_cast<int>(cells.size());
    if (n == 0) return 0.0;
    Matrix H = Matrix::Zero(n, T * K);
    Vector y(n), r(n);
    for (int i = 0; i < n; ++i) {
        const auto [t, d] = cells[static_cast<std::size_t>(i)];
        H.block(i, t * K, 1, K) = p.C.row(d);
        y(i) = panel.value(t, d);
        r(i) = p.R_diag(d);
    }
    Matrix Syy = H * prior.cov * H.transpose();
    Syy.diagonal() += r;
    const Vector e = y - H * prior.mean;
    Eigen::LLT<Matrix> llt(Syy);
    const Matrix L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    return -0.5 * (n * std::log(2.0 * M_PI) + logdet + e.dot(llt.solve(e)));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace testsupport
