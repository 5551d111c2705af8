#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "birduod/preprocess/mel.hpp"

namespace birduod::testing {

struct PrototypeSet {
    std::vector<preprocess::Spectrogram> clips;
    std::vector<int> labels;
};

// Three visually distinct 32x40 patterns (low band, descending diagonal,
// two vertical pulses) with per-clip gain, +-2 frame jitter and additive noise.
inline PrototypeSet make_prototype_clips(int per_class, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 4.0);
    std::uniform_real_distribution<double> gain(0.8, 1.2);
    std::uniform_int_distribution<int> jitter(-2, 2);
    PrototypeSet set;
    for (int i = 0; i < 3 * per_class; ++i) {
        const int label = i % 3;
        const double g = gain(rng);
        const int dt = jitter(rng);
        preprocess::Spectrogram m(32, 40);
        for (int r = 0; r < 32; ++r) {
            for (int c = 0; c < 40; ++c) {
                const int t = c - dt;
                double v = 10.0;
                if (label == 0 && r >= 4 && r <= 8 && t >= 8 && t < 32) v = 70.0;
                if (label == 1 && std::abs((31 - r) - (t - 4)) <= 2 && t >= 4 && t < 36) v = 70.0;
                if (label == 2 && r >= 10 && r <= 26 && ((t >= 10 && t <= 13) || (t >= 24 && t <= 27))) v = 70.0;
                m(r, c) = static_cast<float>(std::clamp(g * v + noise(rng), 0.0, 80.0));
            }
        }
        set.clips.push_back(std::move(m));
        set.labels.push_back(label);
    }
    return set;
}

// Fraction of points whose cluster's majority label matches their own.
inline double cluster_purity(const std::vector<int>& cluster, const std::vector<int>& label, int n_clusters,
                             int n_labels) {
    std::vector<std::vector<int>> counts(static_cast<size_t>(n_clusters), std::vector<int>(n_labels, 0));
    for (size_t i = 0; i < cluster.size(); ++i) ++counts[cluster[i]][label[i]];
    int agree = 0;
    for (const auto& row : counts) agree += *std::max_element(row.begin(), row.end());
    return cluster.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(cluster.size());
}

}  // namespace birduod::testing
