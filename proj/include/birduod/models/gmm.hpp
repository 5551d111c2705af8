#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace birduod::models {

/// Diagonal-covariance Gaussian mixture.
struct GmmParams {
    Eigen::VectorXd weights;    // K
    Eigen::MatrixXd means;      // K x d
    Eigen::MatrixXd variances;  // K x d

    int components() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(means.cols()); }

    /// Throws UsageError unless weights are a distribution (within 1e-9) and
    /// variances are positive.
    void validate() const;
};

void to_json(nlohmann::json& j, const GmmParams& p);
void from_json(const nlohmann::json& j, GmmParams& p);

/// log(w_k) + log N(z; mu_k, diag(var_k)) for each component.
Eigen::VectorXd component_log_densities(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z);

/// Posterior membership probabilities, evaluated in log space.
Eigen::VectorXd gmm_responsibilities(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z);

/// max_k [log w_k + log N(z; mu_k, var_k)]; the default anomaly score.
double max_component_log_density(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z);

/// log sum_k w_k N(z; mu_k, var_k).
double mixture_log_density(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z);

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

struct EmOptions {
    int max_iterations = 200;
    double tolerance = 1e-7;  // relative change in mean log-likelihood
    double variance_floor = 1e-4;
    int kmeans_iterations = 20;
    int n_init = 1;  // restarts; the best final log-likelihood wins
};

struct EmResult {
    GmmParams params;
    // Mean per-point log-likelihood after each E-step.
    std::vector<double> log_likelihood;
    bool variance_floored = false;
};

/// k-means++ seeding, a few Lloyd iterations, then EM, repeated n_init
/// times. `points` is n x d.
EmResult fit_gmm_em(const Eigen::MatrixXd& points, int k, uint64_t seed, const EmOptions& options = {});

}  // namespace birduod::models
