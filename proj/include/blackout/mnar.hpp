#pragma once

#include "blackout/lds.hpp"
#include "blackout/panel.hpp"

namespace blackout {

enum class VarianceMode { MomentMatch, Constant };
enum class LinearizeAt { Predicted, Posterior };

/// Per-detector logistic dropout model
///   Pr(m_{t,d} = 1 | z_t) = sigmoid(b_d + phi_d^T z_t + psi_d^T f_t + eta_d^T g_d)
/// with m = 1 meaning missing, plus the settings of its Gaussianized update.
struct MissingnessParams {
    Vector b;     // D
    Matrix Phi;   // D x K
    Matrix Psi;   // D x p
    Matrix Eta;   // D x q
    double w_miss = 1.0;
    VarianceMode variance_mode = VarianceMode::MomentMatch;
    double constant_variance = 0.25;
    LinearizeAt linearize_at = LinearizeAt::Predicted;
    /// Drop artificially masked cells from the pseudo-observation; their
    /// indicator was injected by the harness, not produced by the sensor.
    bool skip_artificial = true;

    static MissingnessParams zeros(int D, int K, int p, int q);

    int obs_dim() const { return static_cast<int>(b.size()); }
    void validate(int K, int p, int q) const;
};

inline constexpr double kPseudoVarianceFloor = 1e-4;

/// l_d = b_d + phi_d^T z + psi_d^T f + eta_d^T g_d.
Vector logits(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& f,
              const MissingnessParams& params, const StaticFeatures& static_features);

/// Numerically stable logistic function.
double sigmoid(double logit);
Vector probs(const Vector& logits);

/// log sigmoid(l) and log(1 - sigmoid(l)) without cancellation.
double log_sigmoid(double logit);
/// Bernoulli log-likelihood m log pi + (1 - m) log(1 - pi) from the logit.
double bernoulli_term(bool missing, double logit);

/// d pi / d z = pi (1 - pi) phi.
Vector jacobian_row(double pi, const Eigen::Ref<const Vector>& phi);

Vector pseudo_variance(const Vector& pi, const MissingnessParams& params);

struct PseudoUpdateResult {
    GaussianBelief belief;
    double miss_loglik = 0.0;
};

/// EKF update treating the 0/1 missingness indicators as noisy
/// observations of pi(z) with noise diag(s) / w_miss, linearized at
/// `linearization_mean`. Detectors with include[d] == false contribute
/// neither to the update nor to the returned Bernoulli log-likelihood,
/// which is evaluated at the linearization point.
PseudoUpdateResult mnar_pseudo_update(const GaussianBelief& belief,
                                      const Eigen::Ref<const Vector>& linearization_mean,
                                      std::span<const bool> missing, std::span<const bool> include,
                                      const Eigen::Ref<const Vector>& f,
                                      const MissingnessParams& params,
                                      const StaticFeatures& static_features);

/// Convenience overload linearizing at the belief mean with every detector included.
PseudoUpdateResult mnar_pseudo_update(const GaussianBelief& belief, std::span<const bool> missing,
                                      const Eigen::Ref<const Vector>& f,
                                      const MissingnessParams& params,
                                      const StaticFeatures& static_features);

struct BernoulliLoglik {
    double total = 0.0;
    Vector per_detector;
};

/// Sum of Bernoulli log-likelihood terms over cells not flagged in
/// `exclude`, with pi evaluated at the supplied T x K state trajectory.
BernoulliLoglik bernoulli_loglik(const Panel& panel, const Matrix& states,
                                 const TimeFeatures& time_features,
                                 const StaticFeatures& static_features,
                                 const MissingnessParams& params, const BoolMatrix& exclude);

/// Gradients of each detector's log-likelihood, one row per detector.
struct MissingnessGradients {
    Vector b;     // D
    Matrix Phi;   // D x K
    Matrix Psi;   // D x p
    Matrix Eta;   // D x q
};

MissingnessGradients loglik_gradients(const Panel& panel, const Matrix& states,
                                      const TimeFeatures& time_features,
                                      const StaticFeatures& static_features,
                                      const MissingnessParams& params, const BoolMatrix& exclude);

}  // namespace blackout
