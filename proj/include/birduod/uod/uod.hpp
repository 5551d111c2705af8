#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "birduod/cluster/hac.hpp"
#include "birduod/models/config.hpp"
#include "birduod/models/gmm.hpp"

namespace birduod::uod {

enum class Method { hac_dbig = 1, gmm_density = 2 };
enum class DensityScore { max_component, mixture };

struct UodConfig {
    int n_models = 9;
    int flat_clusters = 50;
    double max_discard_fraction = 0.10;
    std::optional<int> max_discard_count;  // overrides the fraction when set
    double big_cluster_pct = 10.0;
    int vote_threshold = 0;  // 0 means majority
    models::ModelKind model_kind = models::ModelKind::cae;
    DensityScore density_score = DensityScore::max_component;

    void validate() const;
    /// floor(D * n) or the absolute override.
    size_t budget(size_t n) const;
    int resolved_threshold() const;
};

void to_json(nlohmann::json& j, const UodConfig& c);
void from_json(const nlohmann::json& j, UodConfig& c);

int majority_threshold(int n_models);

struct Method1Result {
    std::vector<int> candidates;  // ascending clip indices
    cluster::MergeTree tree;
    cluster::FlatClustering flat;
    std::vector<int> visit_order;  // non-big clusters by decreasing d_big
};

/// HAC over the codes, cut into C flat clusters, rank non-big clusters by
/// d_big and accept whole clusters while the total stays within `budget`.
/// Throws DataError when no cluster reaches big_pct percent of the points.
Method1Result method1(const Eigen::MatrixXd& codes, int c, size_t budget, double big_pct);
std::vector<int> method1_candidates(const Eigen::MatrixXd& codes, int c, double d_fraction, double big_pct);

/// Per-clip log-density scores under the GMM; lower is more anomalous.
std::vector<double> method2_scores(const Eigen::MatrixXd& codes, const models::GmmParams& gmm,
                                   DensityScore score = DensityScore::max_component);
/// The `budget` lowest-scoring clips (ties by index), ascending by index.
std::vector<int> method2_candidates(const std::vector<double>& scores, size_t budget);
std::vector<int> method2_candidates(const Eigen::MatrixXd& codes, const models::GmmParams& gmm, double d_fraction,
                                    DensityScore score = DensityScore::max_component);

struct EnsembleResult {
    std::vector<int> tallies;  // per clip, 0..N
    std::vector<int> flagged;  // ascending clip indices
    std::vector<std::vector<int>> per_model_candidates;
    int threshold = 0;
};

/// threshold 0 resolves to floor(N/2)+1.
EnsembleResult ensemble_vote(const std::vector<std::vector<int>>& per_model, size_t n_clips, int threshold);

/// Threshold in 1..N whose flagged-set size is closest to target; ties go to the larger threshold.
EnsembleResult match_outlier_class_size(const std::vector<std::vector<int>>& per_model, size_t n_clips,
                                        size_t target_size);

struct ModelRef {
    models::ModelKind kind = models::ModelKind::cae;
    uint64_t seed = 0;
};

/// Serialized detection run: `uod/<run_id>.json`.
struct UodRun {
    std::string run_id;
    Method method = Method::hac_dbig;
    UodConfig config;
    std::vector<std::string> clip_ids;
    std::vector<ModelRef> models;
    EnsembleResult result;

    std::vector<std::string> flagged_ids() const;
    nlohmann::json to_json() const;
    static UodRun from_json(const nlohmann::json& j);
    std::string csv() const;
};

}  // namespace birduod::uod
