#include <random>

#include <gtest/gtest.h>

#include "birduod/cluster/hac.hpp"
#include "birduod/error.hpp"
#include "support/brute_hac.hpp"

using namespace birduod;
using namespace birduod::cluster;

namespace {

Eigen::MatrixXd line(std::initializer_list<double> xs) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) p(i++, 0) = x;
    return p;
}

Eigen::MatrixXd random_points(std::mt19937_64& rng, int n, int d) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd p(n, d);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
    return p;
}

void expect_same_tree(const MergeTree& a, const MergeTree& b) {
    ASSERT_EQ(a.merges.size(), b.merges.size());
    for (size_t i = 0; i < a.merges.size(); ++i) {
        EXPECT_EQ(a.merges[i].left, b.merges[i].left) << "merge " << i;
        EXPECT_EQ(a.merges[i].right, b.merges[i].right) << "merge " << i;
        EXPECT_EQ(a.merges[i].size, b.merges[i].size) << "merge " << i;
        EXPECT_NEAR(a.merges[i].distance, b.merges[i].distance, 1e-9) << "merge " << i;
    }
}

}  // namespace

TEST(Hac, ThreePointsOnALine) {
    const auto t = hac_average_linkage(line({0, 1, 3}));
    ASSERT_EQ(t.merges.size(), 2u);
    EXPECT_EQ(t.merges[0].left, 0);
    EXPECT_EQ(t.merges[0].right, 1);
    EXPECT_DOUBLE_EQ(t.merges[0].distance, 1.0);
    EXPECT_EQ(t.merges[1].left, 2);
    EXPECT_EQ(t.merges[1].right, 3);
    EXPECT_DOUBLE_EQ(t.merges[1].distance, 2.5);
    EXPECT_EQ(t.merges[1].size, 3);
}

TEST(Hac, IdenticalPointsMergeAtZero) {
    const auto t = hac_average_linkage(line({4, 4}));
    ASSERT_EQ(t.merges.size(), 1u);
    EXPECT_EQ(t.merges[0].distance, 0.0);
}

TEST(Hac, RejectsDegenerateInput) {
    EXPECT_THROW(hac_average_linkage(line({1})), UsageError);
    EXPECT_THROW(hac_average_linkage(line({1, std::nan("")})), UsageError);
}

TEST(Hac, TiesPreferTheSmallestPair) {
    // Equilateral spacing: every adjacent pair at distance 1.
    const auto t = hac_average_linkage(line({0, 1, 2, 3}));
    EXPECT_EQ(t.merges[0].left, 0);
    EXPECT_EQ(t.merges[0].right, 1);
    EXPECT_EQ(t.merges[1].left, 2);
    EXPECT_EQ(t.merges[1].right, 3);
}

TEST(Hac, MatchesBruteForceOracle) {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 40), d = 1 + static_cast<int>(rng() % 10);
        const auto p = random_points(rng, n, d);
        expect_same_tree(hac_average_linkage(p), birduod::testing::brute_force_average_linkage(p));
    }
}

TEST(Hac, HeightsAreMonotoneAndEveryLeafReachesTheRoot) {
    std::mt19937_64 rng(5);
    const auto t = hac_average_linkage(random_points(rng, 50, 3));
    for (size_t i = 1; i < t.merges.size(); ++i) EXPECT_GE(t.merges[i].distance, t.merges[i - 1].distance - 1e-12);
    std::vector<int> uses(2 * 50 - 1, 0);
    for (const auto& m : t.merges) {
        ++uses[m.left];
        ++uses[m.right];
        EXPECT_LT(m.left, m.right);
    }
    for (int node = 0; node < 2 * 50 - 2; ++node) EXPECT_EQ(uses[node], 1) << node;
    EXPECT_EQ(t.merges.back().size, 50);
}

TEST(Flat, CutUndoesTheLastMerges) {
    const auto t = hac_average_linkage(line({0, 1, 3, 10, 11}));
    auto f = cut_flat_clusters(t, 2);
    EXPECT_EQ(f.assignment, (std::vector<int>{0, 0, 0, 1, 1}));
    EXPECT_EQ(f.sizes, (std::vector<int>{3, 2}));
    f = cut_flat_clusters(t, 5);
    EXPECT_EQ(f.assignment, (std::vector<int>{0, 1, 2, 3, 4}));
    f = cut_flat_clusters(t, 1);
    EXPECT_EQ(f.sizes, (std::vector<int>{5}));
    EXPECT_THROW(cut_flat_clusters(t, 0), UsageError);
    EXPECT_THROW(cut_flat_clusters(t, 6), UsageError);
}

TEST(Flat, ClustersPartitionTheLeaves) {
    std::mt19937_64 rng(8);
    const auto t = hac_average_linkage(random_points(rng, 64, 4));
    for (int c = 1; c <= 64; c += 7) {
        const auto f = cut_flat_clusters(t, c);
        ASSERT_EQ(static_cast<int>(f.sizes.size()), c);
        int total = 0;
        for (int s : f.sizes) total += s;
        EXPECT_EQ(total, 64);
        // Numbered by smallest leaf: first appearances are 0, 1, 2, ...
        int next = 0;
        for (int a : f.assignment) {
            if (a == next) ++next;
            EXPECT_LT(a, next);
        }
    }
}

TEST(Distance, AverageLinkageExamples) {
    const auto p = line({0, 1, 3, 6});
    EXPECT_DOUBLE_EQ(inter_cluster_distance(p, {0}, {3}), 6.0);
    EXPECT_DOUBLE_EQ(inter_cluster_distance(p, {0, 1}, {2, 3}), (3 + 6 + 2 + 5) / 4.0);
    EXPECT_DOUBLE_EQ(inter_cluster_distance(p, {0, 1}, {2}), 2.5);
    EXPECT_THROW(inter_cluster_distance(p, {0, 1}, {1}), UsageError);
    EXPECT_THROW(inter_cluster_distance(p, {}, {1}), UsageError);
}

TEST(Distance, BigClusterScores) {
    Eigen::MatrixXd p(12, 2);
    p.setZero();
    for (int i = 0; i < 5; ++i) p(i, 0) = 0.01 * i;
    for (int i = 5; i < 10; ++i) p(i, 0) = 100 + 0.01 * i;
    p.row(10) << 0.0, 5.0;
    p.row(11) << 100.0, -3.0;
    const auto t = hac_average_linkage(p);
    auto f = cut_flat_clusters(t, 4);
    score_big_clusters(p, f, 30.0);
    ASSERT_EQ(f.sizes, (std::vector<int>{5, 5, 1, 1}));
    EXPECT_TRUE(f.big[0] && f.big[1] && !f.big[2] && !f.big[3]);
    EXPECT_EQ(f.d_big[0], 0.0);
    EXPECT_DOUBLE_EQ(f.d_big[2], inter_cluster_distance(p, {10}, {0, 1, 2, 3, 4}));
    EXPECT_DOUBLE_EQ(f.d_big[3], inter_cluster_distance(p, {11}, {5, 6, 7, 8, 9}));
}

TEST(Dendrogram, TruncationKeepsTheTopMerges) {
    const auto t = hac_average_linkage(line({0, 1, 3, 10, 11}));
    const auto v = dendrogram_truncated(t, 2);
    ASSERT_EQ(v.merges.size(), 1u);
    EXPECT_EQ(v.merges[0].distance, t.merges.back().distance);
    EXPECT_EQ(v.leaf_sizes, (std::vector<int>{2, 3}));
    const auto full = dendrogram_truncated(t, 5);
    EXPECT_EQ(full.leaf_nodes, (std::vector<int>{0, 1, 2, 3, 4}));
    EXPECT_EQ(full.merges.size(), 4u);
    const auto svg = dendrogram_svg(full);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_EQ(to_json(t)["merges"].size(), 4u);
}

TEST(Dendrogram, FlatCsvUsesOneBasedClusters) {
    const auto t = hac_average_linkage(line({0, 1, 10}));
    const auto csv = flat_clusters_csv(cut_flat_clusters(t, 2), {"a", "b", "c"});
    EXPECT_NE(csv.find("a,1"), std::string::npos);
    EXPECT_NE(csv.find("c,2"), std::string::npos);
}
