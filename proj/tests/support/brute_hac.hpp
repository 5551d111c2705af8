#pragma once

#include <limits>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "birduod/cluster/hac.hpp"

namespace birduod::testing {

// Reference average linkage: recompute every cluster-pair mean distance from
// the raw points at each step. O(n^3) per step, fine for n <= 64.
inline cluster::MergeTree brute_force_average_linkage(const Eigen::MatrixXd& points) {
    const int n = static_cast<int>(points.rows());
    struct Node {
        int id;
        std::vector<int> leaves;
    };
    std::vector<Node> live;
    for (int i = 0; i < n; ++i) live.push_back({i, {i}});

    auto mean_distance = [&](const Node& a, const Node& b) {
        double s = 0.0;
        for (int i : a.leaves)
            for (int j : b.leaves) s += (points.row(i) - points.row(j)).norm();
        return s / (static_cast<double>(a.leaves.size()) * static_cast<double>(b.leaves.size()));
    };

    cluster::MergeTree tree;
    tree.n_leaves = n;
    for (int step = 0; step < n - 1; ++step) {
        std::tuple<double, int, int> best{std::numeric_limits<double>::infinity(), 0, 0};
        size_t bi = 0, bj = 0;
        for (size_t i = 0; i < live.size(); ++i) {
            for (size_t j = i + 1; j < live.size(); ++j) {
                const int lo = std::min(live[i].id, live[j].id), hi = std::max(live[i].id, live[j].id);
                const std::tuple<double, int, int> key{mean_distance(live[i], live[j]), lo, hi};
                if (key < best) {
                    best = key;
                    bi = i;
                    bj = j;
                }
            }
        }
        Node merged{n + step, live[bi].leaves};
        merged.leaves.insert(merged.leaves.end(), live[bj].leaves.begin(), live[bj].leaves.end());
        tree.merges.push_back({std::get<1>(best), std::get<2>(best), std::get<0>(best),
                               static_cast<int>(merged.leaves.size())});
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(bi));
        live.push_back(std::move(merged));
    }
    return tree;
}

}  // namespace birduod::testing
