#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "birduod/models/config.hpp"
#include "birduod/models/gmm.hpp"
#include "birduod/models/layers.hpp"

namespace birduod::models {

/// Three stride-2 conv layers and a fully connected latent head; the decoder
/// mirrors it with a fully connected layer and three transposed convs. With
/// `variational` the encoder emits (mu, log_var), otherwise a single code.
template <typename T>
class ConvAutoencoder {
public:
    struct Encoded {
        Matrix<T> mu;
        Matrix<T> log_var;  // empty unless variational
    };

    ConvAutoencoder() = default;
    ConvAutoencoder(const ModelConfig& cfg, bool variational) : variational_(variational), latent_(cfg.latent_dim) {
        const auto [c1, c2, c3] = cfg.conv_channels;
        const int k = cfg.kernel, s = cfg.stride, p = 1;
        h_[0] = cfg.input_height;
        w_[0] = cfg.input_width;
        for (int i = 1; i < 4; ++i) {
            h_[i] = ConvGeometry::conv_out(h_[i - 1], k, s, p);
            w_[i] = ConvGeometry::conv_out(w_[i - 1], k, s, p);
        }
        e1_ = Conv2d<T>(1, c1, h_[0], w_[0], k, s, p);
        e2_ = Conv2d<T>(c1, c2, h_[1], w_[1], k, s, p);
        e3_ = Conv2d<T>(c2, c3, h_[2], w_[2], k, s, p);
        flat_ = c3 * h_[3] * w_[3];
        fc_mu_ = Linear<T>(flat_, latent_);
        if (variational_) fc_lv_ = Linear<T>(flat_, latent_);
        d_fc_ = Linear<T>(latent_, flat_);
        d1_ = ConvTranspose2d<T>(c3, c2, h_[3], w_[3], k, s, p, h_[2], w_[2]);
        d2_ = ConvTranspose2d<T>(c2, c1, h_[2], w_[2], k, s, p, h_[1], w_[1]);
        d3_ = ConvTranspose2d<T>(c1, 1, h_[1], w_[1], k, s, p, h_[0], w_[0]);
    }

    void init(std::mt19937_64& rng) {
        const double relu_gain = std::numbers::sqrt2;
        e1_.init(rng, relu_gain);
        e2_.init(rng, relu_gain);
        e3_.init(rng, relu_gain);
        fc_mu_.init(rng, 1.0);
        if (variational_) {
            fc_lv_.init(rng, 0.1);
        }
        d_fc_.init(rng, relu_gain);
        d1_.init(rng, relu_gain);
        d2_.init(rng, relu_gain);
        d3_.init(rng, 1.0);
    }

    Encoded encode(const Matrix<T>& x, bool train) const {
        Matrix<T> h = r1_.forward(e1_.forward(x, train), train);
        h = r2_.forward(e2_.forward(h, train), train);
        h = r3_.forward(e3_.forward(h, train), train);
        Encoded out;
        out.mu = fc_mu_.forward(h, train);
        if (variational_) out.log_var = fc_lv_.forward(h, train);
        return out;
    }

    Matrix<T> decode(const Matrix<T>& z, bool train) const {
        Matrix<T> h = r0_.forward(d_fc_.forward(z, train), train);
        h = rd1_.forward(d1_.forward(h, train), train);
        h = rd2_.forward(d2_.forward(h, train), train);
        return d3_.forward(h, train);
    }

    /// Backprop through the decoder of the last training-mode decode; returns dL/dz.
    Matrix<T> decode_backward(const Matrix<T>& d_recon) {
        Matrix<T> g = d3_.backward(d_recon);
        g = d2_.backward(rd2_.backward(g));
        g = d1_.backward(rd1_.backward(g));
        return d_fc_.backward(r0_.backward(g));
    }

    void encode_backward(const Matrix<T>& d_mu, const Matrix<T>* d_log_var) {
        Matrix<T> g = fc_mu_.backward(d_mu);
        if (variational_ && d_log_var) g += fc_lv_.backward(*d_log_var);
        g = e3_.backward(r3_.backward(g));
        g = e2_.backward(r2_.backward(g));
        e1_.backward(r1_.backward(g));
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        auto add = [&out](std::vector<Param<T>*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
        add(e1_.params());
        add(e2_.params());
        add(e3_.params());
        add(fc_mu_.params());
        if (variational_) add(fc_lv_.params());
        add(d_fc_.params());
        add(d1_.params());
        add(d2_.params());
        add(d3_.params());
        return out;
    }

    void zero_grad() {
        for (auto* p : params()) p->grad.setZero();
    }

    Linear<T>& log_var_head() { return fc_lv_; }
    bool variational() const { return variational_; }
    int latent_dim() const { return latent_; }
    int pixels() const { return h_[0] * w_[0]; }

private:
    bool variational_ = false;
    int latent_ = 0;
    int flat_ = 0;
    int h_[4]{}, w_[4]{};
    Conv2d<T> e1_, e2_, e3_;
    ReLU<T> r1_, r2_, r3_;
    Linear<T> fc_mu_, fc_lv_, d_fc_;
    ReLU<T> r0_, rd1_, rd2_;
    ConvTranspose2d<T> d1_, d2_, d3_;
};

template <typename T>
struct StepLoss {
    T total = 0;
    T reconstruction = 0;
    T regularizer = 0;
};

/// Mean over every entry; writes dL/drecon when `grad` is non-null.
template <typename T>
T mean_squared_error(const Matrix<T>& recon, const Matrix<T>& x, Matrix<T>* grad) {
    const Matrix<T> diff = recon - x;
    const T n = static_cast<T>(diff.size());
    if (grad) *grad = (T(2) / n) * diff;
    return diff.squaredNorm() / n;
}

/// Conventional autoencoder objective (MSE); accumulates parameter gradients.
template <typename T>
StepLoss<T> cae_step(ConvAutoencoder<T>& net, const Matrix<T>& x) {
    const auto enc = net.encode(x, true);
    const Matrix<T> recon = net.decode(enc.mu, true);
    Matrix<T> d;
    StepLoss<T> loss;
    loss.reconstruction = mean_squared_error(recon, x, &d);
    loss.total = loss.reconstruction;
    const Matrix<T> dz = net.decode_backward(d);
    net.encode_backward(dz, nullptr);
    return loss;
}

/// Variational objective: per-sample squared error summed over pixels plus
/// kl_weight times KL(q(z|x) || N(0, I)), both averaged over the batch.
/// `eps` supplies the reparameterization noise (latent x batch).
template <typename T>
StepLoss<T> cvae_step(ConvAutoencoder<T>& net, const Matrix<T>& x, const Matrix<T>& eps, T kl_weight) {
    const auto enc = net.encode(x, true);
    const T batch = static_cast<T>(x.cols());
    const Matrix<T> sd = (enc.log_var.array() * T(0.5)).exp().matrix();
    const Matrix<T> z = enc.mu + sd.cwiseProduct(eps);
    const Matrix<T> recon = net.decode(z, true);

    const Matrix<T> diff = recon - x;
    StepLoss<T> loss;
    loss.reconstruction = diff.squaredNorm() / batch;
    const Matrix<T> var = enc.log_var.array().exp().matrix();
    loss.regularizer =
        T(-0.5) * (T(1) + enc.log_var.array() - enc.mu.array().square() - var.array()).sum() / batch;
    loss.total = loss.reconstruction + kl_weight * loss.regularizer;

    const Matrix<T> dz = net.decode_backward((T(2) / batch) * diff);
    Matrix<T> d_mu = dz + (kl_weight / batch) * enc.mu;
    Matrix<T> d_lv = (dz.cwiseProduct(eps).cwiseProduct(sd) * T(0.5)).eval();
    d_lv.array() += (kl_weight * T(0.5) / batch) * (var.array() - T(1));
    net.encode_backward(d_mu, &d_lv);
    return loss;
}

/// Trainable Gaussian-mixture prior: softmax logits, means and log variances
/// stored column-per-component (latent x K).
template <typename T>
struct GmmPrior {
    Param<T> logits;    // K x 1
    Param<T> means;     // d x K
    Param<T> log_vars;  // d x K

    void from_params(const GmmParams& p) {
        const auto k = p.components();
        const auto d = p.dim();
        logits.init(k, 1);
        means.init(d, k);
        log_vars.init(d, k);
        for (int c = 0; c < k; ++c) {
            logits.value(c, 0) = static_cast<T>(std::log(std::max(p.weights[c], 1e-12)));
            for (int j = 0; j < d; ++j) {
                means.value(j, c) = static_cast<T>(p.means(c, j));
                log_vars.value(j, c) = static_cast<T>(std::log(p.variances(c, j)));
            }
        }
    }

    GmmParams to_params() const {
        GmmParams p;
        const auto k = logits.value.rows();
        const auto d = means.value.rows();
        Eigen::VectorXd a = logits.value.col(0).template cast<double>();
        a = (a.array() - a.maxCoeff()).exp();
        p.weights = a / a.sum();
        p.means = means.value.transpose().template cast<double>();
        p.variances = log_vars.value.transpose().template cast<double>().array().exp();
        (void)k;
        (void)d;
        return p;
    }

    /// Returns true if any variance had to be raised to the floor.
    bool clamp_variances(double floor) {
        const T lo = static_cast<T>(std::log(floor));
        const bool hit = (log_vars.value.array() < lo).any();
        log_vars.value = log_vars.value.cwiseMax(lo);
        return hit;
    }

    std::vector<Param<T>*> params() { return {&logits, &means, &log_vars}; }
};

/// Variational deep embedding objective with a Gaussian-mixture prior.
/// gamma = p(c | z) is evaluated at the sampled z and held fixed during
/// differentiation (it plays the role of the optimal q(c | x)).
template <typename T>
StepLoss<T> vade_step(ConvAutoencoder<T>& net, GmmPrior<T>& prior, const Matrix<T>& x, const Matrix<T>& eps) {
    const auto enc = net.encode(x, true);
    const auto batch_n = x.cols();
    const T batch = static_cast<T>(batch_n);
    const Matrix<T> sd = (enc.log_var.array() * T(0.5)).exp().matrix();
    const Matrix<T> var = sd.cwiseProduct(sd);
    const Matrix<T> z = enc.mu + sd.cwiseProduct(eps);
    const Matrix<T> recon = net.decode(z, true);

    const Matrix<T> diff = recon - x;
    StepLoss<T> loss;
    loss.reconstruction = diff.squaredNorm() / batch;

    const auto k = prior.logits.value.rows();
    const auto d = prior.means.value.rows();
    Vector<T> log_pi = prior.logits.value.col(0);
    {
        const T m = log_pi.maxCoeff();
        log_pi.array() -= m + std::log((log_pi.array() - m).exp().sum());
    }
    const Vector<T> pi = log_pi.array().exp();
    const Matrix<T> cvar = prior.log_vars.value.array().exp().matrix();  // d x K

    Matrix<T> d_mu = Matrix<T>::Zero(d, batch_n);
    Matrix<T> d_lv = Matrix<T>::Zero(d, batch_n);
    Vector<T> gamma(k), log_joint(k);
    T reg = 0;
    for (Eigen::Index b = 0; b < batch_n; ++b) {
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto dz = (z.col(b) - prior.means.value.col(c)).array();
            log_joint[c] = log_pi[c] - T(0.5) * (prior.log_vars.value.col(c).array() + dz.square() / cvar.col(c).array()).sum();
        }
        const T m = log_joint.maxCoeff();
        gamma = (log_joint.array() - m).exp();
        gamma /= gamma.sum();

        for (Eigen::Index c = 0; c < k; ++c) {
            const T g = gamma[c];
            const auto dm = (enc.mu.col(b) - prior.means.value.col(c)).array();
            const auto inv = cvar.col(c).array().inverse();
            reg += T(0.5) * g * (prior.log_vars.value.col(c).array() + var.col(b).array() * inv + dm.square() * inv).sum();
            reg -= g * log_pi[c];
            if (g > T(0)) reg += g * std::log(g);

            d_mu.col(b).array() += g * dm * inv;
            d_lv.col(b).array() += T(0.5) * g * var.col(b).array() * inv;
            prior.means.grad.col(c).array() -= (g / batch) * dm * inv;
            prior.log_vars.grad.col(c).array() +=
                (T(0.5) * g / batch) * (T(1) - (var.col(b).array() + dm.square()) * inv);
            prior.logits.grad(c, 0) += (pi[c] - g) / batch;
        }
        reg -= T(0.5) * (T(1) + enc.log_var.col(b).array()).sum();
        d_lv.col(b).array() -= T(0.5);
    }
    loss.regularizer = reg / batch;
    loss.total = loss.reconstruction + loss.regularizer;

    const Matrix<T> dz = net.decode_backward((T(2) / batch) * diff);
    d_mu = d_mu / batch + dz;
    d_lv = d_lv / batch + (dz.cwiseProduct(eps).cwiseProduct(sd) * T(0.5));
    net.encode_backward(d_mu, &d_lv);
    return loss;
}

/// -1/2 * sum(1 + log_var - mu^2 - exp(log_var)).
template <typename Derived>
double kl_unit_gaussian(const Eigen::MatrixBase<Derived>& mu, const Eigen::MatrixBase<Derived>& log_var) {
    const auto m = mu.template cast<double>().array();
    const auto lv = log_var.template cast<double>().array();
    return -0.5 * (1.0 + lv - m.square() - lv.exp()).sum();
}

}  // namespace birduod::models
