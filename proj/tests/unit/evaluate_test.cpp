#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "birduod/error.hpp"
#include "birduod/evaluate/evaluate.hpp"
#include "birduod/preprocess/clip.hpp"

using namespace birduod;
using namespace birduod::evaluate;

namespace {

std::vector<ReviewVerdict> verdicts(int outliers, int inliers, int unsure = 0) {
    std::vector<ReviewVerdict> v;
    for (int i = 0; i < outliers; ++i) v.push_back({"o" + std::to_string(i), Verdict::outlier, {}, "r", ""});
    for (int i = 0; i < inliers; ++i) v.push_back({"i" + std::to_string(i), Verdict::inlier, {}, "r", ""});
    for (int i = 0; i < unsure; ++i) v.push_back({"u" + std::to_string(i), Verdict::indeterminate, {}, "r", ""});
    return v;
}

std::vector<std::string> ids(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
    return out;
}

}  // namespace

TEST(Rate, MarginOfErrorAtHalf) {
    const auto r = estimate_rate(verdicts(48, 48), Verdict::outlier);
    EXPECT_DOUBLE_EQ(r.rate, 0.5);
    EXPECT_NEAR(r.moe, 0.1000, 1e-4);
    EXPECT_EQ(r.n_sampled, 96);
    EXPECT_NEAR(z_value(0.95), 1.959964, 1e-6);
}

TEST(Rate, UnanimousSampleHasZeroMargin) {
    const auto r = estimate_rate(verdicts(30, 0, 4), Verdict::outlier);
    EXPECT_EQ(r.rate, 1.0);
    EXPECT_EQ(r.moe, 0.0);
    EXPECT_EQ(r.indeterminate, 4);
    EXPECT_EQ(r.n_sampled, 30);
}

TEST(Rate, InlierRateAndFiniteCorrection) {
    auto r = estimate_rate(verdicts(25, 75), Verdict::inlier);
    EXPECT_DOUBLE_EQ(r.rate, 0.75);
    const double plain = r.moe;
    r = estimate_rate(verdicts(25, 75), Verdict::inlier, 0.95, 200, true);
    EXPECT_NEAR(r.moe, plain * std::sqrt(100.0 / 199.0), 1e-12);
    EXPECT_EQ(r.n_population, 200);
    EXPECT_THROW(estimate_rate(verdicts(0, 0, 3), Verdict::outlier), UsageError);
    EXPECT_THROW(estimate_rate(verdicts(1, 1), Verdict::indeterminate), UsageError);
}

TEST(Verdicts, StringsAndJson) {
    EXPECT_EQ(verdict_from_string("inlier"), Verdict::inlier);
    EXPECT_THROW(verdict_from_string("maybe"), UsageError);
    ReviewVerdict v{"a_1", Verdict::outlier, "noisy", "ann", "2024-01-01T00:00:00Z"};
    const auto back = nlohmann::json(v).get<ReviewVerdict>();
    EXPECT_EQ(back.clip_id, "a_1");
    EXPECT_EQ(back.comment, "noisy");
    EXPECT_EQ(back.verdict, Verdict::outlier);
}

TEST(Sampling, SeededAndWithoutReplacement) {
    const auto pool = ids(50);
    const auto a = sample_for_review(pool, 3, 20);
    EXPECT_EQ(a, sample_for_review(pool, 3, 20));
    EXPECT_NE(a, sample_for_review(pool, 4, 20));
    EXPECT_EQ(a.size(), 20u);
    EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), 20u);
    auto all = sample_for_review(pool, 3, 500);
    std::sort(all.begin(), all.end());
    auto sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(all, sorted);
    EXPECT_THROW(sample_for_review({}, 0, 5), UsageError);
}

TEST(Sampling, InclusionIsUniform) {
    const auto pool = ids(20);
    std::map<std::string, int> hits;
    const int trials = 20000;
    for (int s = 0; s < trials; ++s) {
        for (const auto& id : sample_for_review(pool, static_cast<uint64_t>(s), 5)) ++hits[id];
    }
    // Expected 5000 each; binomial sd ~61.
    for (const auto& id : pool) EXPECT_NEAR(hits[id], trials / 4, 300) << id;
}

TEST(Entropy, ClosedForms) {
    EXPECT_EQ(spectrogram_entropy(preprocess::Spectrogram::Zero(32, 40)), 0.0);
    EXPECT_NEAR(spectrogram_entropy(preprocess::Spectrogram::Constant(32, 40, 20.0f)), std::log2(1280.0), 1e-9);
    preprocess::Spectrogram one = preprocess::Spectrogram::Zero(32, 40);
    one(3, 7) = 40.0f;
    EXPECT_NEAR(spectrogram_entropy(one), 0.0, 1e-12);
    preprocess::Spectrogram two = one;
    two(9, 9) = 40.0f;
    EXPECT_NEAR(spectrogram_entropy(two), 1.0, 1e-9);
}

TEST(Entropy, InvariantToScalingThePowerAboveTheFloor) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 60.0);
    preprocess::Spectrogram a(32, 40), b(32, 40);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double v = u(rng);
        a.data()[i] = static_cast<float>(v);
        const double scaled = 7.0 * preprocess::floor_relative_power(v);
        b.data()[i] = static_cast<float>(10.0 * std::log10(scaled + 1.0));
    }
    EXPECT_NEAR(spectrogram_entropy(a), spectrogram_entropy(b), 1e-4);
    EXPECT_GE(spectrogram_entropy(a), 0.0);
    EXPECT_LE(spectrogram_entropy(a), std::log2(1280.0) + 1e-9);
}

TEST(Entropy, ReportGroupsByLabel) {
    const std::vector<preprocess::Spectrogram> clips{preprocess::Spectrogram::Constant(32, 40, 20.0f),
                                                     preprocess::Spectrogram::Zero(32, 40),
                                                     preprocess::Spectrogram::Constant(32, 40, 5.0f)};
    const auto r = entropy_report(clips, {"song", "call", "song"});
    EXPECT_NEAR(r.label_means.at("song"), std::log2(1280.0), 1e-9);
    EXPECT_EQ(r.label_means.at("call"), 0.0);
    EXPECT_EQ(r.label_counts.at("song"), 2);
    EXPECT_NEAR(r.overall_mean, 2 * std::log2(1280.0) / 3, 1e-9);
    EXPECT_THROW(entropy_report(clips, {"song"}), UsageError);
}

TEST(Report, TableAndBestColumn) {
    SpeciesRow row{"AUWA", 1234, 4.5, {{"cae", estimate_rate(verdicts(9, 1), Verdict::outlier)},
                                       {"vade", estimate_rate(verdicts(6, 4), Verdict::outlier)},
                                       {"cvae", std::nullopt}}};
    EXPECT_EQ(row.best(), "cae");
    const auto table = format_report_table({row});
    EXPECT_NE(table.find("no. clips"), std::string::npos);
    EXPECT_NE(table.find("cae TPR"), std::string::npos);
    EXPECT_NE(table.find("0.900"), std::string::npos);
    const auto j = report_json({row});
    EXPECT_EQ(j[0]["best"], "cae");
    EXPECT_TRUE(j[0]["ensembles"]["cvae"].is_null());
    EXPECT_EQ(SpeciesRow{}.best(), "-");
}
