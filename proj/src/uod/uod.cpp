#include "birduod/uod/uod.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "birduod/error.hpp"

namespace birduod::uod {

void UodConfig::validate() const {
    if (n_models < 1) throw UsageError("n_models must be >= 1");
    if (flat_clusters < 1) throw UsageError("flat_clusters must be >= 1");
    if (!(max_discard_fraction >= 0 && max_discard_fraction < 1)) {
        throw UsageError("max_discard_fraction must lie in [0, 1)");
    }
    if (max_discard_count && *max_discard_count < 0) throw UsageError("max_discard_count must be >= 0");
    if (!(big_cluster_pct > 0 && big_cluster_pct < 100)) throw UsageError("big_cluster_pct must lie in (0, 100)");
    if (vote_threshold < 0 || vote_threshold > n_models) {
        throw UsageError(fmt::format("vote_threshold {} outside [1, n_models={}]", vote_threshold, n_models));
    }
}

size_t UodConfig::budget(size_t n) const {
    if (max_discard_count) return std::min(n, static_cast<size_t>(*max_discard_count));
    return static_cast<size_t>(std::floor(max_discard_fraction * static_cast<double>(n) + 1e-9));
}

int UodConfig::resolved_threshold() const { return vote_threshold == 0 ? majority_threshold(n_models) : vote_threshold; }

int majority_threshold(int n_models) { return n_models / 2 + 1; }

void to_json(nlohmann::json& j, const UodConfig& c) {
    j = nlohmann::json{{"n_models", c.n_models},
                       {"flat_clusters", c.flat_clusters},
                       {"max_discard_fraction", c.max_discard_fraction},
                       {"big_cluster_pct", c.big_cluster_pct},
                       {"model_kind", models::to_string(c.model_kind)},
                       {"density_score", c.density_score == DensityScore::max_component ? "max_component" : "mixture"}};
    j["max_discard_count"] = c.max_discard_count ? nlohmann::json(*c.max_discard_count) : nlohmann::json(nullptr);
    j["vote_threshold"] = c.vote_threshold == 0 ? nlohmann::json("majority") : nlohmann::json(c.vote_threshold);
}

void from_json(const nlohmann::json& j, UodConfig& c) {
    const UodConfig d;
    c.n_models = j.value("n_models", d.n_models);
    c.flat_clusters = j.value("flat_clusters", d.flat_clusters);
    c.max_discard_fraction = j.value("max_discard_fraction", d.max_discard_fraction);
    c.max_discard_count.reset();
    if (j.contains("max_discard_count") && !j.at("max_discard_count").is_null()) {
        c.max_discard_count = j.at("max_discard_count").get<int>();
    }
    c.big_cluster_pct = j.value("big_cluster_pct", d.big_cluster_pct);
    c.model_kind = models::model_kind_from_string(j.value("model_kind", std::string(models::to_string(d.model_kind))));
    const auto score = j.value("density_score", std::string("max_component"));
    if (score == "max_component") {
        c.density_score = DensityScore::max_component;
    } else if (score == "mixture") {
        c.density_score = DensityScore::mixture;
    } else {
        throw UsageError("density_score must be max_component or mixture");
    }
    c.vote_threshold = 0;
    if (j.contains("vote_threshold")) {
        const auto& v = j.at("vote_threshold");
        if (v.is_string()) {
            if (v.get<std::string>() != "majority") throw UsageError("vote_threshold must be a count or \"majority\"");
        } else {
            c.vote_threshold = v.get<int>();
            if (c.vote_threshold < 1) throw UsageError("vote_threshold must be >= 1");
        }
    }
}

Method1Result method1(const Eigen::MatrixXd& codes, int c, size_t budget, double big_pct) {
    Method1Result out;
    out.tree = cluster::hac_average_linkage(codes);
    out.flat = cluster::cut_flat_clusters(out.tree, std::min(c, static_cast<int>(codes.rows())));
    cluster::score_big_clusters(codes, out.flat, big_pct);
    auto& flat = out.flat;
    if (std::none_of(flat.big.begin(), flat.big.end(), [](bool b) { return b; })) {
        throw DataError(fmt::format("no flat cluster holds {}% of the clips; lower big_cluster_pct or inspect the data",
                                    big_pct));
    }
    for (int k = 0; k < static_cast<int>(flat.sizes.size()); ++k) {
        if (!flat.big[k]) out.visit_order.push_back(k);
    }
    std::stable_sort(out.visit_order.begin(), out.visit_order.end(), [&](int a, int b) {
        if (flat.d_big[a] != flat.d_big[b]) return flat.d_big[a] > flat.d_big[b];
        return flat.sizes[a] < flat.sizes[b];
    });
    std::vector<bool> take(flat.sizes.size(), false);
    size_t total = 0;
    for (int k : out.visit_order) {
        const auto s = static_cast<size_t>(flat.sizes[k]);
        if (total + s > budget) continue;
        take[k] = true;
        total += s;
    }
    for (size_t i = 0; i < flat.assignment.size(); ++i) {
        if (take[flat.assignment[i]]) out.candidates.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> method1_candidates(const Eigen::MatrixXd& codes, int c, double d_fraction, double big_pct) {
    const auto budget = static_cast<size_t>(std::floor(d_fraction * static_cast<double>(codes.rows()) + 1e-9));
    return method1(codes, c, budget, big_pct).candidates;
}

std::vector<double> method2_scores(const Eigen::MatrixXd& codes, const models::GmmParams& gmm, DensityScore score) {
    gmm.validate();
    if (codes.cols() != gmm.dim()) throw UsageError("method2: latent dimension differs from GMM dimension");
    std::vector<double> out(static_cast<size_t>(codes.rows()));
    for (Eigen::Index i = 0; i < codes.rows(); ++i) {
        const Eigen::VectorXd z = codes.row(i).transpose();
        out[i] = score == DensityScore::max_component ? models::max_component_log_density(gmm, z)
                                                      : models::mixture_log_density(gmm, z);
        if (!std::isfinite(out[i])) throw NumericalError(fmt::format("non-finite GMM score for clip {}", i));
    }
    return out;
}

std::vector<int> method2_candidates(const std::vector<double>& scores, size_t budget) {
    for (double s : scores) {
        if (!std::isfinite(s)) throw NumericalError("method2: non-finite score");
    }
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    idx.resize(std::min(budget, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<int> method2_candidates(const Eigen::MatrixXd& codes, const models::GmmParams& gmm, double d_fraction,
                                    DensityScore score) {
    const auto budget = static_cast<size_t>(std::floor(d_fraction * static_cast<double>(codes.rows()) + 1e-9));
    return method2_candidates(method2_scores(codes, gmm, score), budget);
}

EnsembleResult ensemble_vote(const std::vector<std::vector<int>>& per_model, size_t n_clips, int threshold) {
    const int n_models = static_cast<int>(per_model.size());
    if (n_models < 1) throw UsageError("ensemble_vote needs at least one model");
    if (threshold == 0) threshold = majority_threshold(n_models);
    if (threshold < 1 || threshold > n_models) {
        throw UsageError(fmt::format("vote threshold {} outside [1, {}]", threshold, n_models));
    }
    EnsembleResult r;
    r.threshold = threshold;
    r.per_model_candidates = per_model;
    r.tallies.assign(n_clips, 0);
    for (const auto& set : per_model) {
        std::vector<int> uniq(set);
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (int i : uniq) {
            if (i < 0 || static_cast<size_t>(i) >= n_clips) throw UsageError("candidate index outside clip universe");
            ++r.tallies[i];
        }
    }
    for (size_t i = 0; i < n_clips; ++i) {
        if (r.tallies[i] >= threshold) r.flagged.push_back(static_cast<int>(i));
    }
    return r;
}

EnsembleResult match_outlier_class_size(const std::vector<std::vector<int>>& per_model, size_t n_clips,
                                        size_t target_size) {
    const int n_models = static_cast<int>(per_model.size());
    if (n_models < 1) throw UsageError("match_outlier_class_size needs at least one model");
    EnsembleResult best;
    size_t best_gap = 0;
    for (int t = 1; t <= n_models; ++t) {
        auto r = ensemble_vote(per_model, n_clips, t);
        const size_t size = r.flagged.size();
        const size_t gap = size > target_size ? size - target_size : target_size - size;
        if (t == 1 || gap <= best_gap) {
            best_gap = gap;
            best = std::move(r);
        }
    }
    return best;
}

std::vector<std::string> UodRun::flagged_ids() const {
    std::vector<std::string> out;
    for (int i : result.flagged) out.push_back(clip_ids[i]);
    return out;
}

nlohmann::json UodRun::to_json() const {
    auto ids = [this](const std::vector<int>& idx) {
        std::vector<std::string> out;
        out.reserve(idx.size());
        for (int i : idx) out.push_back(clip_ids[i]);
        return out;
    };
    nlohmann::json per_model = nlohmann::json::array();
    for (size_t m = 0; m < result.per_model_candidates.size(); ++m) {
        nlohmann::json entry{{"candidates", ids(result.per_model_candidates[m])}};
        if (m < models.size()) {
            entry["model_kind"] = models::to_string(models[m].kind);
            entry["seed"] = models[m].seed;
        }
        per_model.push_back(std::move(entry));
    }
    nlohmann::json tallies = nlohmann::json::object();
    for (size_t i = 0; i < clip_ids.size(); ++i) tallies[clip_ids[i]] = result.tallies[i];
    return {{"run_id", run_id},
            {"method", static_cast<int>(method)},
            {"config", config},
            {"vote_threshold", result.threshold},
            {"clip_ids", clip_ids},
            {"per_model", per_model},
            {"tallies", tallies},
            {"flagged", ids(result.flagged)}};
}

UodRun UodRun::from_json(const nlohmann::json& j) {
    UodRun run;
    run.run_id = j.at("run_id").get<std::string>();
    run.method = static_cast<Method>(j.at("method").get<int>());
    run.config = j.at("config").get<UodConfig>();
    run.clip_ids = j.at("clip_ids").get<std::vector<std::string>>();
    std::unordered_map<std::string, int> index;
    for (size_t i = 0; i < run.clip_ids.size(); ++i) index.emplace(run.clip_ids[i], static_cast<int>(i));
    auto lookup = [&index](const std::string& id) {
        auto it = index.find(id);
        if (it == index.end()) throw DataError("UOD result references unknown clip " + id);
        return it->second;
    };
    std::vector<std::vector<int>> per_model;
    for (const auto& entry : j.at("per_model")) {
        std::vector<int> set;
        for (const auto& id : entry.at("candidates")) set.push_back(lookup(id.get<std::string>()));
        per_model.push_back(std::move(set));
        if (entry.contains("model_kind")) {
            run.models.push_back({models::model_kind_from_string(entry.at("model_kind").get<std::string>()),
                                  entry.at("seed").get<uint64_t>()});
        }
    }
    run.result = ensemble_vote(per_model, run.clip_ids.size(), j.at("vote_threshold").get<int>());
    return run;
}

std::string UodRun::csv() const {
    std::string out = "clip_id,tally,flagged\n";
    for (size_t i = 0; i < clip_ids.size(); ++i) {
        out += fmt::format("{},{},{}\n", clip_ids[i], result.tallies[i], result.tallies[i] >= result.threshold ? 1 : 0);
    }
    return out;
}

}  // namespace birduod::uod
