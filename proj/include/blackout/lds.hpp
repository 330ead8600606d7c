#pragma once

#include "blackout/common.hpp"

#include <span>

namespace blackout {

/// Linear-Gaussian state-space parameters with diagonal observation noise:
///   z_t | z_{t-1} ~ N(A z_{t-1}, Q),  x_t | z_t ~ N(C z_t, diag(R_diag)).
struct LdsParams {
    Vector mu0;      // K
    Matrix Sigma0;   // K x K
    Matrix A;        // K x K
    Matrix Q;        // K x K
    Matrix C;        // D x K
    Vector R_diag;   // D

    int latent_dim() const { return static_cast<int>(A.rows()); }
    int obs_dim() const { return static_cast<int>(C.rows()); }

    /// Throws InvalidArgument on inconsistent shapes or non-positive R.
    void validate() const;
};

struct GaussianBelief {
    Vector mean;
    Matrix cov;
};

/// Moment-propagates a belief through the dynamics and symmetrizes.
GaussianBelief predict(const GaussianBelief& belief, const LdsParams& params);

struct UpdateResult {
    GaussianBelief belief;
    double loglik = 0.0;
};

/// Conditions a belief on scalar linear-Gaussian measurements
///   y_i = h_i^T z + e_i,  e_i ~ N(0, noise_var_i),
/// given the innovations y_i - h_i^T mean. Works in the K-dimensional
/// information space: with Sigma = L L^T and H = sum_i h_i h_i^T / noise_var_i,
/// the posterior is L (I + L^T H L)^{-1} L^T, so only K x K systems are
/// solved no matter how many rows are supplied. The returned loglik is the
/// log density of the measurements under the predictive distribution.
UpdateResult linear_gaussian_update(const GaussianBelief& prior, const Matrix& rows,
                                    const Vector& noise_var, const Vector& innovation);

/// Measurement update using the detectors flagged in `observed`.
UpdateResult update_observed(const GaussianBelief& prior, const Eigen::Ref<const Vector>& x_row,
                             std::span<const bool> observed, const LdsParams& params);

/// Same, with the row read directly from a boolean mask matrix.
UpdateResult update_observed(const GaussianBelief& prior, const Eigen::Ref<const Vector>& x_row,
                             const BoolMatrix& observed, int t, const LdsParams& params);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& m);

/// Largest absolute eigenvalue of a square matrix.
double spectral_radius(const Matrix& m);

}  // namespace blackout
