#include "blackout/lds.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace blackout {

namespace {

// Lower-triangular factor with Sigma = L L^T. Falls back to the clamped
// eigendecomposition when Sigma is only positive semidefinite.
Matrix covariance_factor(const Matrix& sigma)
{
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    if (eig.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

void LdsParams::validate() const
{
    const auto K = A.rows();
    const auto D = C.rows();
    if (A.cols() != K || Q.rows() != K || Q.cols() != K || Sigma0.rows() != K ||
        Sigma0.cols() != K || mu0.size() != K || C.cols() != K || R_diag.size() != D)
        throw InvalidArgument("inconsistent LDS parameter dimensions");
    if ((R_diag.array() <= 0.0).any()) throw InvalidArgument("R_diag must be strictly positive");
    if (!A.allFinite() || !Q.allFinite() || !C.allFinite() || !mu0.allFinite() ||
        !Sigma0.allFinite() || !R_diag.allFinite())
        throw InvalidArgument("LDS parameters must be finite");
}

GaussianBelief predict(const GaussianBelief& belief, const LdsParams& params)
{
    GaussianBelief out{params.A * belief.mean,
                       params.A * belief.cov * params.A.transpose() + params.Q};
    symmetrize(out.cov);
    return out;
}

UpdateResult linear_gaussian_update(const GaussianBelief& prior, const Matrix& rows,
                                    const Vector& noise_var, const Vector& innovation)
{
    const auto n = rows.rows();
    if (n == 0) return {prior, 0.0};
    const auto K = prior.mean.size();

    const Vector precision = noise_var.cwiseInverse();
    const Matrix weighted = precision.asDiagonal() * rows;      // n x K
    const Matrix info = rows.transpose() * weighted;            // sum h h^T / r
    const Vector info_vec = weighted.transpose() * innovation;  // sum h v / r

    const Matrix L = covariance_factor(prior.cov);
    Matrix M = Matrix::Identity(K, K) + L.transpose() * info * L;
    symmetrize(M);
    Eigen::LLT<Matrix> m_llt(M);
    if (m_llt.info() != Eigen::Success) {
        M.diagonal().array() += 1e-9;
        m_llt.compute(M);
        if (m_llt.info() != Eigen::Success) throw NumericalError("posterior precision is singular");
    }

    UpdateResult out;
    out.belief.cov = L * m_llt.solve(L.transpose());
    symmetrize(out.belief.cov);
    const Vector shift = out.belief.cov * info_vec;
    out.belief.mean = prior.mean + shift;

    const Matrix& chol = m_llt.matrixLLT();
    const double log_det_m = 2.0 * chol.diagonal().array().log().sum();
    const double log_det_r = noise_var.array().log().sum();
    const double quad = innovation.dot(precision.cwiseProduct(innovation)) - info_vec.dot(shift);
    out.loglik = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det_r +
                         log_det_m + quad);
    if (!out.belief.mean.allFinite() || !std::isfinite(out.loglik))
        throw NumericalError("non-finite posterior in measurement update");
    return out;
}

namespace {

template <typename IsObserved>
UpdateResult update_selected(const GaussianBelief& prior, const Eigen::Ref<const Vector>& x_row,
                             const LdsParams& params, IsObserved is_observed)
{
    const auto D = params.obs_dim();
    int n = 0;
    for (int d = 0; d < D; ++d) n += is_observed(d) ? 1 : 0;
    if (n == 0) return {prior, 0.0};

    Matrix rows(n, params.latent_dim());
    Vector noise(n);
    Vector innovation(n);
    int i = 0;
    for (int d = 0; d < D; ++d) {
        if (!is_observed(d)) continue;
        rows.row(i) = params.C.row(d);
        noise(i) = params.R_diag(d);
        innovation(i) = x_row(d) - params.C.row(d).dot(prior.mean);
        ++i;
    }
    return linear_gaussian_update(prior, rows, noise, innovation);
}

}  // namespace

UpdateResult update_observed(const GaussianBelief& prior, const Eigen::Ref<const Vector>& x_row,
                             std::span<const bool> observed, const LdsParams& params)
{
    if (x_row.size() != params.obs_dim() || static_cast<int>(observed.size()) != params.obs_dim())
        throw InvalidArgument("observation row does not match emission dimension");
    return update_selected(prior, x_row, params,
                           [&](int d) { return observed[static_cast<std::size_t>(d)]; });
}

UpdateResult update_observed(const GaussianBelief& prior, const Eigen::Ref<const Vector>& x_row,
                             const BoolMatrix& observed, int t, const LdsParams& params)
{
    if (x_row.size() != params.obs_dim() || observed.cols() != params.obs_dim())
        throw InvalidArgument("observation row does not match emission dimension");
    return update_selected(prior, x_row, params, [&](int d) { return observed(t, d); });
}

double min_eigenvalue(const Matrix& m)
{
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

double spectral_radius(const Matrix& m)
{
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> eig(m, false);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace blackout
