#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace birduod::cluster {

/// Leaves are nodes 0..n-1; merge i creates node n+i.
struct Merge {
    int left = 0;   // smaller node id
    int right = 0;  // larger node id
    double distance = 0.0;
    int size = 0;
};

struct MergeTree {
    int n_leaves = 0;
    std::vector<Merge> merges;
};

/// Exact average-linkage agglomeration over the rows of `points` with
/// Euclidean distance. Among equally distant pairs the one with the smallest
/// (lower id, higher id) wins. O(n^2) memory.
MergeTree hac_average_linkage(const Eigen::MatrixXd& points);

struct FlatClustering {
    std::vector<int> assignment;  // leaf -> cluster in 0..C-1, numbered by smallest leaf
    std::vector<int> sizes;
    std::vector<bool> big;
    std::vector<double> d_big;  // 0 for big clusters and when no big cluster exists
};

/// Undoes the last C-1 merges.
FlatClustering cut_flat_clusters(const MergeTree& tree, int c);

/// Mean pairwise Euclidean distance between two disjoint, non-empty row sets.
double inter_cluster_distance(const Eigen::MatrixXd& points, const std::vector<int>& a, const std::vector<int>& b);

/// Marks clusters holding at least big_pct percent of the points and fills
/// d_big with each other cluster's minimum average-linkage distance to a big
/// cluster.
void score_big_clusters(const Eigen::MatrixXd& points, FlatClustering& flat, double big_pct);

struct DendrogramView {
    // Nodes present after undoing the last last_k-1 merges, by node id.
    std::vector<int> leaf_nodes;
    std::vector<int> leaf_sizes;
    std::vector<Merge> merges;  // the final last_k-1 merges
};

DendrogramView dendrogram_truncated(const MergeTree& tree, int last_k);

nlohmann::json to_json(const MergeTree& tree);
nlohmann::json to_json(const DendrogramView& view);
std::string dendrogram_svg(const DendrogramView& view, int width = 800, int height = 480);
std::string flat_clusters_csv(const FlatClustering& flat, const std::vector<std::string>& clip_ids);

}  // namespace birduod::cluster
