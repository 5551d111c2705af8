#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "birduod/models/autoencoder.hpp"

namespace birduod::testing {

// 8x10 inputs through the standard three stride-2 stages, latent 2.
inline models::ModelConfig mini_trunk_config() {
    models::ModelConfig cfg;
    cfg.input_height = 8;
    cfg.input_width = 10;
    cfg.latent_dim = 2;
    cfg.conv_channels = {2, 3, 4};
    return cfg;
}

struct GradientCheckResult {
    double max_relative_error = 0.0;
    int parameters = 0;
};

// Relative error per parameter tensor, ||analytic - numeric|| / max(||analytic||, ||numeric||),
// using central differences of `loss` with step h.
inline GradientCheckResult check_gradients(models::ConvAutoencoder<double>& net,
                                           const std::function<double()>& loss_and_backward, double h = 1e-6) {
    net.zero_grad();
    loss_and_backward();
    const auto params = net.params();
    std::vector<models::Matrix<double>> grads;
    for (auto* p : params) grads.push_back(p->grad);
    GradientCheckResult result;
    for (size_t k = 0; k < params.size(); ++k) {
        auto* p = params[k];
        const auto& analytic = grads[k];
        models::Matrix<double> numeric(analytic.rows(), analytic.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data()[i];
            p->value.data()[i] = saved + h;
            const double up = loss_and_backward();
            p->value.data()[i] = saved - h;
            const double down = loss_and_backward();
            p->value.data()[i] = saved;
            numeric.data()[i] = (up - down) / (2.0 * h);
        }
        const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
        result.max_relative_error = std::max(result.max_relative_error, (analytic - numeric).norm() / scale);
        ++result.parameters;
    }
    return result;
}

inline GradientCheckResult gradient_check(bool variational, uint64_t seed = 3) {
    const auto cfg = mini_trunk_config();
    models::ConvAutoencoder<double> net(cfg, variational);
    std::mt19937_64 rng(seed);
    net.init(rng);
    const int batch = 3;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    // Nonzero biases keep pre-activations off the ReLU kink.
    std::uniform_real_distribution<double> b(-0.1, 0.1);
    for (auto* p : net.params()) {
        if (p->value.cols() != 1) continue;
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = b(rng);
    }
    models::Matrix<double> x(net.pixels(), batch), eps(cfg.latent_dim, batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = g(rng);
    return check_gradients(net, [&] {
        return variational ? models::cvae_step(net, x, eps, 1.0).total : models::cae_step(net, x).total;
    });
}

}  // namespace birduod::testing
