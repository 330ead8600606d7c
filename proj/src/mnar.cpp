#include "blackout/mnar.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace blackout {

MissingnessParams MissingnessParams::zeros(int D, int K, int p, int q)
{
    MissingnessParams out;
    out.b = Vector::Zero(D);
    out.Phi = Matrix::Zero(D, K);
    out.Psi = Matrix::Zero(D, p);
    out.Eta = Matrix::Zero(D, q);
    return out;
}

void MissingnessParams::validate(int K, int p, int q) const
{
    const auto D = b.size();
    if (Phi.rows() != D || Phi.cols() != K || Psi.rows() != D || Psi.cols() != p ||
        Eta.rows() != D || Eta.cols() != q)
        throw InvalidArgument("inconsistent missingness parameter dimensions");
    if (!b.allFinite() || !Phi.allFinite() || !Psi.allFinite() || !Eta.allFinite())
        throw InvalidArgument("missingness parameters must be finite");
    if (!(w_miss >= 0.0)) throw InvalidArgument("w_miss must be nonnegative");
    if (variance_mode == VarianceMode::Constant && !(constant_variance > 0.0))
        throw InvalidArgument("constant missingness variance must be positive");
}

Vector logits(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& f,
              const MissingnessParams& params, const StaticFeatures& static_features)
{
    Vector out = params.b + params.Phi * z;
    if (params.Psi.cols() > 0) out += params.Psi * f;
    if (params.Eta.cols() > 0) out += (params.Eta.cwiseProduct(static_features.G)).rowwise().sum();
    return out;
}

double sigmoid(double logit)
{
    if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

Vector probs(const Vector& logits)
{
    return logits.unaryExpr([](double l) { return sigmoid(l); });
}

double log_sigmoid(double logit)
{
    return logit >= 0.0 ? -std::log1p(std::exp(-logit)) : logit - std::log1p(std::exp(logit));
}

double bernoulli_term(bool missing, double logit)
{
    return missing ? log_sigmoid(logit) : log_sigmoid(-logit);
}

Vector jacobian_row(double pi, const Eigen::Ref<const Vector>& phi)
{
    return pi * (1.0 - pi) * phi;
}

Vector pseudo_variance(const Vector& pi, const MissingnessParams& params)
{
    if (params.variance_mode == VarianceMode::Constant)
        return Vector::Constant(pi.size(), params.constant_variance);
    return pi.unaryExpr([](double p) { return std::max(p * (1.0 - p), kPseudoVarianceFloor); });
}

PseudoUpdateResult mnar_pseudo_update(const GaussianBelief& belief,
                                      const Eigen::Ref<const Vector>& linearization_mean,
                                      std::span<const bool> missing, std::span<const bool> include,
                                      const Eigen::Ref<const Vector>& f,
                                      const MissingnessParams& params,
                                      const StaticFeatures& static_features)
{
    const int D = params.obs_dim();
    if (static_cast<int>(missing.size()) != D || static_cast<int>(include.size()) != D)
        throw InvalidArgument("missingness row does not match detector count");

    const Vector l = logits(linearization_mean, f, params, static_features);
    PseudoUpdateResult out{belief, 0.0};
    int n = 0;
    for (int d = 0; d < D; ++d) {
        if (!include[static_cast<std::size_t>(d)]) continue;
        out.miss_loglik += bernoulli_term(missing[static_cast<std::size_t>(d)], l(d));
        ++n;
    }
    if (n == 0 || params.w_miss == 0.0) return out;

    const Vector pi = probs(l);
    const Vector s = pseudo_variance(pi, params);
    const Vector offset = belief.mean - linearization_mean;
    const auto K = belief.mean.size();
    Matrix rows(n, K);
    Vector noise(n);
    Vector innovation(n);
    int i = 0;
    for (int d = 0; d < D; ++d) {
        if (!include[static_cast<std::size_t>(d)]) continue;
        rows.row(i) = jacobian_row(pi(d), params.Phi.row(d).transpose()).transpose();
        noise(i) = s(d) / params.w_miss;
        const double m = missing[static_cast<std::size_t>(d)] ? 1.0 : 0.0;
        innovation(i) = m - pi(d) - rows.row(i).dot(offset);
        ++i;
    }
    out.belief = linear_gaussian_update(belief, rows, noise, innovation).belief;
    return out;
}

PseudoUpdateResult mnar_pseudo_update(const GaussianBelief& belief, std::span<const bool> missing,
                                      const Eigen::Ref<const Vector>& f,
                                      const MissingnessParams& params,
                                      const StaticFeatures& static_features)
{
    std::unique_ptr<bool[]> include(new bool[missing.size()]);
    std::fill_n(include.get(), missing.size(), true);
    return mnar_pseudo_update(belief, belief.mean, missing,
                              std::span<const bool>(include.get(), missing.size()), f, params,
                              static_features);
}

namespace {

void check_inputs(const Panel& panel, const Matrix& states, const TimeFeatures& tf,
                  const StaticFeatures& sf, const MissingnessParams& params,
                  const BoolMatrix& exclude)
{
    if (states.rows() != panel.num_steps() || states.cols() != params.Phi.cols())
        throw InvalidArgument("state trajectory does not match panel length or latent dimension");
    if (tf.F.rows() != panel.num_steps() || tf.F.cols() != params.Psi.cols())
        throw InvalidArgument("time features do not match panel or missingness parameters");
    if (sf.G.rows() != panel.num_detectors() || sf.G.cols() != params.Eta.cols())
        throw InvalidArgument("static features do not match panel or missingness parameters");
    if (exclude.rows() != panel.num_steps() || exclude.cols() != panel.num_detectors())
        throw InvalidArgument("exclude mask does not match panel");
    if (params.obs_dim() != panel.num_detectors())
        throw InvalidArgument("missingness parameters do not match detector count");
}

double static_term(const MissingnessParams& params, const StaticFeatures& sf, int d)
{
    return params.Eta.cols() > 0 ? params.Eta.row(d).dot(sf.G.row(d)) : 0.0;
}

}  // namespace

BernoulliLoglik bernoulli_loglik(const Panel& panel, const Matrix& states,
                                 const TimeFeatures& time_features,
                                 const StaticFeatures& static_features,
                                 const MissingnessParams& params, const BoolMatrix& exclude)
{
    check_inputs(panel, states, time_features, static_features, params, exclude);
    BernoulliLoglik out{0.0, Vector::Zero(panel.num_detectors())};
    for (int d = 0; d < panel.num_detectors(); ++d) {
        const double base = params.b(d) + static_term(params, static_features, d);
        double sum = 0.0;
        for (int t = 0; t < panel.num_steps(); ++t) {
            if (exclude(t, d)) continue;
            double l = base + params.Phi.row(d).dot(states.row(t));
            if (params.Psi.cols() > 0) l += params.Psi.row(d).dot(time_features.F.row(t));
            sum += bernoulli_term(!panel.observed(t, d), l);
        }
        out.per_detector(d) = sum;
        out.total += sum;
    }
    return out;
}

MissingnessGradients loglik_gradients(const Panel& panel, const Matrix& states,
                                      const TimeFeatures& time_features,
                                      const StaticFeatures& static_features,
                                      const MissingnessParams& params, const BoolMatrix& exclude)
{
    check_inputs(panel, states, time_features, static_features, params, exclude);
    const int D = panel.num_detectors();
    MissingnessGradients g{Vector::Zero(D), Matrix::Zero(D, params.Phi.cols()),
                           Matrix::Zero(D, params.Psi.cols()), Matrix::Zero(D, params.Eta.cols())};
    for (int d = 0; d < D; ++d) {
        const double base = params.b(d) + static_term(params, static_features, d);
        double residual_sum = 0.0;
        for (int t = 0; t < panel.num_steps(); ++t) {
            if (exclude(t, d)) continue;
            double l = base + params.Phi.row(d).dot(states.row(t));
            if (params.Psi.cols() > 0) l += params.Psi.row(d).dot(time_features.F.row(t));
            const double residual = (panel.observed(t, d) ? 0.0 : 1.0) - sigmoid(l);
            residual_sum += residual;
            g.Phi.row(d) += residual * states.row(t);
            if (params.Psi.cols() > 0) g.Psi.row(d) += residual * time_features.F.row(t);
        }
        g.b(d) = residual_sum;
        if (params.Eta.cols() > 0) g.Eta.row(d) = residual_sum * static_features.G.row(d);
    }
    return g;
}

}  // namespace blackout
