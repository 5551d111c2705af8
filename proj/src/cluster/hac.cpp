#include "birduod/cluster/hac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "birduod/error.hpp"

namespace birduod::cluster {

namespace {

// Upper-triangular storage over slots 0..n-1.
class Condensed {
public:
    explicit Condensed(int n) : n_(n), d_(static_cast<size_t>(n) * (n - 1) / 2) {}
    double& at(int i, int j) {
        if (i > j) std::swap(i, j);
        return d_[offset(i) + static_cast<size_t>(j - i - 1)];
    }

private:
    size_t offset(int i) const { return static_cast<size_t>(i) * (2 * n_ - i - 1) / 2; }
    int n_;
    std::vector<double> d_;
};

struct Disjoint {
    std::vector<int> parent;
    explicit Disjoint(int n) : parent(static_cast<size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
};

}  // namespace

MergeTree hac_average_linkage(const Eigen::MatrixXd& points) {
    const int n = static_cast<int>(points.rows());
    if (n < 2) throw UsageError("hac_average_linkage needs at least 2 points");
    if (!points.allFinite()) throw UsageError("hac_average_linkage: non-finite coordinates");

    Condensed dist(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) dist.at(i, j) = (points.row(i) - points.row(j)).norm();
    }

    std::vector<int> id(n), size(n, 1);
    std::iota(id.begin(), id.end(), 0);
    std::vector<bool> active(n, true);
    std::vector<int> nn(n, -1);
    std::vector<double> nn_d(n, std::numeric_limits<double>::infinity());

    auto rescan = [&](int i) {
        nn[i] = -1;
        nn_d[i] = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (j == i || !active[j]) continue;
            const double d = dist.at(i, j);
            if (d < nn_d[i] || (d == nn_d[i] && id[j] < id[nn[i]])) {
                nn_d[i] = d;
                nn[i] = j;
            }
        }
    };
    for (int i = 0; i < n; ++i) rescan(i);

    MergeTree tree;
    tree.n_leaves = n;
    tree.merges.reserve(static_cast<size_t>(n - 1));
    for (int step = 0; step < n - 1; ++step) {
        int best = -1;
        std::tuple<double, int, int> best_key{std::numeric_limits<double>::infinity(), 0, 0};
        for (int i = 0; i < n; ++i) {
            if (!active[i]) continue;
            const std::tuple<double, int, int> key{nn_d[i], std::min(id[i], id[nn[i]]), std::max(id[i], id[nn[i]])};
            if (best < 0 || key < best_key) {
                best = i;
                best_key = key;
            }
        }
        int a = best, b = nn[best];
        if (b < a) std::swap(a, b);
        const double d_ab = nn_d[best];
        tree.merges.push_back({std::min(id[a], id[b]), std::max(id[a], id[b]), d_ab, size[a] + size[b]});

        // Slot a becomes the merged cluster.
        const double wa = size[a], wb = size[b];
        for (int k = 0; k < n; ++k) {
            if (!active[k] || k == a || k == b) continue;
            dist.at(k, a) = (wa * dist.at(k, a) + wb * dist.at(k, b)) / (wa + wb);
        }
        active[b] = false;
        size[a] += size[b];
        id[a] = n + step;

        if (step == n - 2) break;
        rescan(a);
        for (int k = 0; k < n; ++k) {
            if (!active[k] || k == a) continue;
            if (nn[k] == a || nn[k] == b) {
                rescan(k);
            } else if (dist.at(k, a) < nn_d[k]) {
                // The new cluster carries the largest id, so ties keep the old partner.
                nn_d[k] = dist.at(k, a);
                nn[k] = a;
            }
        }
    }
    return tree;
}

FlatClustering cut_flat_clusters(const MergeTree& tree, int c) {
    const int n = tree.n_leaves;
    if (c < 1 || c > n) throw UsageError(fmt::format("cut_flat_clusters: C={} outside [1, {}]", c, n));
    Disjoint sets(2 * n - 1);
    // Node ids: leaves 0..n-1, merge i -> n+i. Union the leaves under the kept merges.
    std::vector<int> rep(static_cast<size_t>(2 * n - 1));
    std::iota(rep.begin(), rep.begin() + n, 0);
    for (int i = 0; i < n - c; ++i) {
        const auto& m = tree.merges[i];
        const int ra = sets.find(rep[m.left]);
        const int rb = sets.find(rep[m.right]);
        sets.parent[std::max(ra, rb)] = std::min(ra, rb);
        rep[n + i] = std::min(ra, rb);
    }
    FlatClustering flat;
    flat.assignment.assign(static_cast<size_t>(n), -1);
    std::map<int, int> label;  // root -> cluster, in order of first (smallest) leaf
    for (int leaf = 0; leaf < n; ++leaf) {
        const int root = sets.find(leaf);
        auto [it, inserted] = label.try_emplace(root, static_cast<int>(label.size()));
        if (inserted) flat.sizes.push_back(0);
        flat.assignment[leaf] = it->second;
        ++flat.sizes[it->second];
    }
    flat.big.assign(flat.sizes.size(), false);
    flat.d_big.assign(flat.sizes.size(), 0.0);
    return flat;
}

double inter_cluster_distance(const Eigen::MatrixXd& points, const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() || b.empty()) throw UsageError("inter_cluster_distance: empty member set");
    std::vector<int> sa(a), sb(b);
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<int> common;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
    if (!common.empty()) throw UsageError("inter_cluster_distance: member sets overlap");
    double sum = 0.0;
    for (int i : sa) {
        for (int j : sb) sum += (points.row(i) - points.row(j)).norm();
    }
    return sum / (static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
}

void score_big_clusters(const Eigen::MatrixXd& points, FlatClustering& flat, double big_pct) {
    const auto n = static_cast<double>(flat.assignment.size());
    const int c = static_cast<int>(flat.sizes.size());
    std::vector<std::vector<int>> members(static_cast<size_t>(c));
    for (size_t i = 0; i < flat.assignment.size(); ++i) members[flat.assignment[i]].push_back(static_cast<int>(i));
    std::vector<int> big_ids;
    for (int k = 0; k < c; ++k) {
        flat.big[k] = flat.sizes[k] >= big_pct / 100.0 * n;
        if (flat.big[k]) big_ids.push_back(k);
    }
    for (int k = 0; k < c; ++k) {
        flat.d_big[k] = 0.0;
        if (flat.big[k] || big_ids.empty()) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int j : big_ids) best = std::min(best, inter_cluster_distance(points, members[k], members[j]));
        flat.d_big[k] = best;
    }
}

DendrogramView dendrogram_truncated(const MergeTree& tree, int last_k) {
    const int n = tree.n_leaves;
    if (last_k < 1 || last_k > n) throw UsageError(fmt::format("dendrogram_truncated: last_k={} outside [1, {}]", last_k, n));
    DendrogramView view;
    const int first = n - last_k;  // index of the first kept merge
    view.merges.assign(tree.merges.begin() + first, tree.merges.end());

    std::vector<int> node_size(static_cast<size_t>(2 * n - 1), 1);
    for (int i = 0; i < n - 1; ++i) node_size[n + i] = tree.merges[i].size;
    std::vector<bool> consumed(static_cast<size_t>(2 * n - 1), false);
    for (int i = 0; i < first; ++i) {
        consumed[tree.merges[i].left] = true;
        consumed[tree.merges[i].right] = true;
    }
    for (int node = 0; node < n + first; ++node) {
        if (!consumed[node]) {
            view.leaf_nodes.push_back(node);
            view.leaf_sizes.push_back(node_size[node]);
        }
    }
    return view;
}

nlohmann::json to_json(const MergeTree& tree) {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& m : tree.merges) merges.push_back({m.left, m.right, m.distance, m.size});
    return {{"n_leaves", tree.n_leaves}, {"merges", merges}};
}

nlohmann::json to_json(const DendrogramView& view) {
    nlohmann::json leaves = nlohmann::json::array();
    for (size_t i = 0; i < view.leaf_nodes.size(); ++i) {
        leaves.push_back({{"node", view.leaf_nodes[i]}, {"size", view.leaf_sizes[i]}});
    }
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& m : view.merges) {
        merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.distance}, {"size", m.size}});
    }
    return {{"leaves", leaves}, {"merges", merges}};
}

std::string dendrogram_svg(const DendrogramView& view, int width, int height) {
    // Leaf order from a depth-first walk of the kept merges.
    std::map<int, std::pair<int, int>> children;
    int root = view.leaf_nodes.empty() ? -1 : view.leaf_nodes.front();
    std::map<int, double> node_height;
    std::map<int, int> node_size;
    for (size_t i = 0; i < view.leaf_nodes.size(); ++i) {
        node_height[view.leaf_nodes[i]] = 0.0;
        node_size[view.leaf_nodes[i]] = view.leaf_sizes[i];
    }
    // Merge ids are consecutive and end at 2n-2.
    int total_leaves = 0;
    for (int s : view.leaf_sizes) total_leaves += s;
    const int first_merge_id = 2 * total_leaves - 1 - static_cast<int>(view.merges.size());
    for (size_t i = 0; i < view.merges.size(); ++i) {
        const int node = first_merge_id + static_cast<int>(i);
        children[node] = {view.merges[i].left, view.merges[i].right};
        node_height[node] = view.merges[i].distance;
        node_size[node] = view.merges[i].size;
        root = node;
    }

    std::vector<int> order;
    std::vector<int> stack{root};
    while (!stack.empty()) {
        const int node = stack.back();
        stack.pop_back();
        auto it = children.find(node);
        if (it == children.end()) {
            order.push_back(node);
        } else {
            stack.push_back(it->second.second);
            stack.push_back(it->second.first);
        }
    }

    const double top = node_height[root] > 0 ? node_height[root] : 1.0;
    const double margin = 40.0;
    const double plot_w = width - 2 * margin, plot_h = height - 2 * margin;
    auto y_of = [&](double h) { return margin + plot_h * (1.0 - h / top); };
    std::map<int, double> x;
    const double step = order.size() > 1 ? plot_w / static_cast<double>(order.size() - 1) : 0.0;
    std::string body;
    for (size_t i = 0; i < order.size(); ++i) {
        x[order[i]] = margin + step * static_cast<double>(i) + (order.size() == 1 ? plot_w / 2 : 0.0);
        body += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="10" text-anchor="middle">({})</text>)" "\n",
                            x[order[i]], height - margin + 14, node_size[order[i]]);
    }
    for (size_t i = 0; i < view.merges.size(); ++i) {
        const int node = first_merge_id + static_cast<int>(i);
        const auto [l, r] = children[node];
        x[node] = (x[l] + x[r]) / 2.0;
        const double yh = y_of(node_height[node]);
        body += fmt::format(
            R"(<polyline fill="none" stroke="black" points="{:.1f},{:.1f} {:.1f},{:.1f} {:.1f},{:.1f} {:.1f},{:.1f}"/>)"
            "\n",
            x[l], y_of(node_height[l]), x[l], yh, x[r], yh, x[r], y_of(node_height[r]));
    }
    return fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">)"
                       "\n"
                       R"(<text x="10" y="20" font-size="12">max height {:.4g}</text>)"
                       "\n{}</svg>\n",
                       width, height, top, body);
}

std::string flat_clusters_csv(const FlatClustering& flat, const std::vector<std::string>& clip_ids) {
    if (clip_ids.size() != flat.assignment.size()) throw UsageError("flat_clusters_csv: id count mismatch");
    std::string out = "clip_id,cluster,is_big,d_big\n";
    for (size_t i = 0; i < clip_ids.size(); ++i) {
        const int k = flat.assignment[i];
        out += fmt::format("{},{},{},{:.9g}\n", clip_ids[i], k + 1, flat.big[k] ? 1 : 0, flat.d_big[k]);
    }
    return out;
}

}  // namespace birduod::cluster
