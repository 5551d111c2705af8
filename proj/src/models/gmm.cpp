#include "birduod/models/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "birduod/error.hpp"

namespace birduod::models {

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

void GmmParams::validate() const {
    const auto k = weights.size();
    if (k < 1) throw UsageError("GMM needs at least one component");
    if (means.rows() != k || variances.rows() != k || variances.cols() != means.cols()) {
        throw UsageError("GMM parameter shapes disagree");
    }
    if ((weights.array() < 0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
        throw UsageError("GMM weights must be a probability vector");
    }
    if (!(variances.array() > 0).all()) throw UsageError("GMM variances must be positive");
}

void to_json(nlohmann::json& j, const GmmParams& p) {
    auto rows = [](const Eigen::MatrixXd& m) {
        std::vector<std::vector<double>> out(static_cast<size_t>(m.rows()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            out[r].assign(m.cols(), 0.0);
            for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
        }
        return out;
    };
    j = nlohmann::json{{"weights", std::vector<double>(p.weights.data(), p.weights.data() + p.weights.size())},
                       {"means", rows(p.means)},
                       {"variances", rows(p.variances)}};
}

void from_json(const nlohmann::json& j, GmmParams& p) {
    auto w = j.at("weights").get<std::vector<double>>();
    p.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    auto load = [](const nlohmann::json& a) {
        auto v = a.get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), v.empty() ? 0 : static_cast<Eigen::Index>(v[0].size()));
        for (size_t r = 0; r < v.size(); ++r) {
            for (size_t c = 0; c < v[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c];
        }
        return m;
    };
    p.means = load(j.at("means"));
    p.variances = load(j.at("variances"));
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd component_log_densities(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z) {
    const int k = p.components();
    const double d = static_cast<double>(p.dim());
    Eigen::VectorXd out(k);
    for (int c = 0; c < k; ++c) {
        const auto var = p.variances.row(c).transpose().array();
        const auto diff = z.array() - p.means.row(c).transpose().array();
        const double quad = (diff.square() / var).sum();
        const double log_det = var.log().sum();
        const double log_w = p.weights[c] > 0 ? std::log(p.weights[c]) : -std::numeric_limits<double>::infinity();
        out[c] = log_w - 0.5 * (d * kLog2Pi + log_det + quad);
    }
    return out;
}

Eigen::VectorXd gmm_responsibilities(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z) {
    const auto log_d = component_log_densities(p, z);
    const double norm = log_sum_exp(log_d);
    if (!std::isfinite(norm)) {
        // Every component has zero weight or infinite distance; fall back to uniform.
        return Eigen::VectorXd::Constant(p.components(), 1.0 / p.components());
    }
    return (log_d.array() - norm).exp();
}

double max_component_log_density(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z) {
    return component_log_densities(p, z).maxCoeff();
}

double mixture_log_density(const GmmParams& p, const Eigen::Ref<const Eigen::VectorXd>& z) {
    return log_sum_exp(component_log_densities(p, z));
}

namespace {

Eigen::MatrixXd kmeans_pp_centers(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
    const auto n = x.rows();
    Eigen::MatrixXd centers(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = x.row(pick(rng));
    Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index chosen = pick(rng);
        if (total > 0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (Eigen::Index i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.row(c) = x.row(chosen);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

std::vector<int> assign_nearest(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers) {
    std::vector<int> label(static_cast<size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index best = 0;
        (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
        label[i] = static_cast<int>(best);
    }
    return label;
}

}  // namespace

namespace {

EmResult fit_once(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng, const EmOptions& options) {
    const auto n = points.rows();
    const auto d = points.cols();

    Eigen::MatrixXd centers = kmeans_pp_centers(points, k, rng);
    std::vector<int> label;
    for (int it = 0; it < options.kmeans_iterations; ++it) {
        label = assign_nearest(points, centers);
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(label[i]) += points.row(i);
            counts[label[i]] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
        }
    }
    label = assign_nearest(points, centers);

    EmResult result;
    GmmParams& p = result.params;
    const Eigen::RowVectorXd global_var =
        ((points.rowwise() - points.colwise().mean()).array().square().colwise().sum() / static_cast<double>(n))
            .max(options.variance_floor);
    p.means = centers;
    p.variances = Eigen::MatrixXd(k, d);
    p.weights = Eigen::VectorXd::Zero(k);
    {
        Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(k, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            sq.row(label[i]) += (points.row(i) - centers.row(label[i])).array().square().matrix();
            p.weights[label[i]] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (p.weights[c] > 1) {
                p.variances.row(c) = (sq.row(c) / p.weights[c]).array().max(options.variance_floor).matrix();
            } else {
                p.variances.row(c) = global_var;
            }
        }
        p.weights = (p.weights.array() + 1.0) / static_cast<double>(n + k);
    }

    Eigen::MatrixXd resp(n, k);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.max_iterations; ++it) {
        // E-step
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto log_d = component_log_densities(p, points.row(i).transpose());
            const double norm = log_sum_exp(log_d);
            ll += norm;
            resp.row(i) = (log_d.array() - norm).exp().transpose();
        }
        ll /= static_cast<double>(n);
        result.log_likelihood.push_back(ll);
        if (it > 0 && std::abs(ll - prev) <= options.tolerance * std::max(1.0, std::abs(ll))) break;
        prev = ll;

        // M-step
        const Eigen::VectorXd nk = resp.colwise().sum().transpose().array().max(1e-12);
        p.weights = nk / nk.sum();
        p.means = (resp.transpose() * points).array().colwise() / nk.array();
        for (int c = 0; c < k; ++c) {
            const Eigen::MatrixXd diff = points.rowwise() - p.means.row(c);
            Eigen::RowVectorXd var = (resp.col(c).asDiagonal() * diff.array().square().matrix()).colwise().sum() / nk[c];
            if ((var.array() < options.variance_floor).any()) result.variance_floored = true;
            p.variances.row(c) = var.array().max(options.variance_floor).matrix();
        }
    }
    return result;
}

}  // namespace

EmResult fit_gmm_em(const Eigen::MatrixXd& points, int k, uint64_t seed, const EmOptions& options) {
    if (k < 1) throw UsageError("fit_gmm_em: k must be >= 1");
    if (points.rows() < k) throw UsageError("fit_gmm_em: fewer points than components");
    if (options.n_init < 1) throw UsageError("fit_gmm_em: n_init must be >= 1");
    std::mt19937_64 rng(seed);
    EmResult best;
    for (int attempt = 0; attempt < options.n_init; ++attempt) {
        EmResult r = fit_once(points, k, rng, options);
        if (attempt == 0 || r.log_likelihood.back() > best.log_likelihood.back()) best = std::move(r);
    }
    if (best.variance_floored) {
        spdlog::warn("GMM variance collapse: floored at {}", options.variance_floor);
    }
    return best;
}

}  // namespace birduod::models
