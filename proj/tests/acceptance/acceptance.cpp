// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "birduod/cluster/hac.hpp"
#include "birduod/evaluate/evaluate.hpp"
#include "birduod/fixture.hpp"
#include "birduod/io.hpp"
#include "birduod/models/autoencoder.hpp"
#include "birduod/models/gmm.hpp"
#include "birduod/models/model.hpp"
#include "birduod/pipeline.hpp"
#include "birduod/preprocess/clip.hpp"
#include "birduod/preprocess/segmentation.hpp"
#include "birduod/uod/uod.hpp"
#include "support/brute_hac.hpp"
#include "support/gradient_check.hpp"
#include "support/prototypes.hpp"
#include "support/temp_dir.hpp"

using namespace birduod;
using Clock = std::chrono::steady_clock;

namespace {

// Training length for the benchmark ensembles.
constexpr int kEpochs = 20;
constexpr int kPretrainEpochs = 10;
constexpr int kEnsembleSize = 5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run(const std::string& name, const std::function<Outcome()>& check) {
    try {
        report(name, check());
    } catch (const std::exception& e) {
        report(name, {false, std::string("exception: ") + e.what()});
    }
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome hac_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    int structural = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 63), d = 1 + static_cast<int>(rng() % 10);
        Eigen::MatrixXd p(n, d);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
        const auto fast = cluster::hac_average_linkage(p);
        const auto slow = testing::brute_force_average_linkage(p);
        if (fast.merges.size() != slow.merges.size()) {
            ++structural;
            continue;
        }
        for (size_t i = 0; i < fast.merges.size(); ++i) {
            const auto &a = fast.merges[i], &b = slow.merges[i];
            if (a.left != b.left || a.right != b.right || a.size != b.size) ++structural;
            worst = std::max(worst, std::abs(a.distance - b.distance));
        }
    }
    const double secs = seconds_since(t0);
    return {structural == 0 && worst <= 1e-9 && secs < 30.0,
            fmt::format("200 instances, {} merge mismatches, max height error {:.2e}, {:.1f} s", structural, worst, secs)};
}

Outcome closed_forms() {
    std::vector<std::string> bad;
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1), one = Eigen::MatrixXd::Ones(1, 1);
    const double kl0 = models::kl_unit_gaussian(zero, zero) + 0.0;
    const double kl1 = models::kl_unit_gaussian(one, zero);
    if (std::abs(kl0) > 1e-12) bad.push_back(fmt::format("KL(0,0)={}", kl0));
    if (std::abs(kl1 - 0.5) > 1e-12) bad.push_back(fmt::format("KL(1,1)={}", kl1));

    const preprocess::Spectrogram flat = preprocess::Spectrogram::Constant(32, 40, 37.0f);
    const double h = evaluate::spectrogram_entropy(flat);
    if (std::abs(h - std::log2(1280.0)) > 1e-9) bad.push_back(fmt::format("uniform entropy={:.12f}", h));

    std::vector<evaluate::ReviewVerdict> verdicts;
    for (int i = 0; i < 96; ++i) {
        verdicts.push_back({fmt::format("c_{}", i), i < 48 ? evaluate::Verdict::outlier : evaluate::Verdict::inlier,
                            "", "r", ""});
    }
    const auto rate = evaluate::estimate_rate(verdicts, evaluate::Verdict::outlier);
    if (std::abs(rate.moe - 0.1000) > 1e-4) bad.push_back(fmt::format("MoE={:.6f}", rate.moe));

    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    double worst = 0.0;
    for (int draw = 0; draw < 1000; ++draw) {
        const int k = 1 + static_cast<int>(rng() % 8), d = 1 + static_cast<int>(rng() % 10);
        models::GmmParams p;
        p.weights = Eigen::VectorXd(k);
        for (int c = 0; c < k; ++c) p.weights[c] = u(rng);
        p.weights /= p.weights.sum();
        p.means = Eigen::MatrixXd(k, d);
        p.variances = Eigen::MatrixXd(k, d);
        for (Eigen::Index i = 0; i < p.means.size(); ++i) {
            p.means.data()[i] = 3.0 * g(rng);
            p.variances.data()[i] = u(rng);
        }
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j) z[j] = 5.0 * g(rng);
        const auto r = models::gmm_responsibilities(p, z);
        worst = r.allFinite() ? std::max(worst, std::abs(r.sum() - 1.0)) : INFINITY;
    }
    if (worst > 1e-6) bad.push_back(fmt::format("responsibility sum error {:.2e}", worst));

    std::string detail = fmt::format("KL {:.3g}/{:.3g}, H {:.12f}, MoE {:.5f}, resp err {:.1e}", kl0, kl1, h, rate.moe, worst);
    for (const auto& b : bad) detail += "; bad " + b;
    return {bad.empty(), detail};
}

Outcome gradients() {
    const auto cae = testing::gradient_check(false);
    const auto cvae = testing::gradient_check(true);
    const double worst = std::max(cae.max_relative_error, cvae.max_relative_error);
    return {worst < 1e-3, fmt::format("max relative error CAE {:.2e}, CVAE {:.2e}", cae.max_relative_error,
                                      cvae.max_relative_error)};
}

Outcome preprocess_invariants() {
    using preprocess::Segment;
    const preprocess::PreprocessConfig cfg;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<float> level(0.0f, 70.0f);
    int shift_fail = 0, shift_cases = 0;
    for (int trial = 0; trial < 20; ++trial) {
        preprocess::Spectrogram base = preprocess::Spectrogram::Zero(32, 100);
        for (int t = 30; t < 50; ++t)
            for (int b = 0; b < 32; ++b) base(b, t) = level(rng);
        for (int k : {-17, -9, -1, 1, 9, 17}) {
            preprocess::Spectrogram shifted = preprocess::Spectrogram::Zero(32, 100);
            shifted.middleCols(30 + k, 20) = base.middleCols(30, 20);
            ++shift_cases;
            if (preprocess::extract_clip(base, cfg).mel != preprocess::extract_clip(shifted, cfg).mel) ++shift_fail;
        }
    }

    auto seg = [](double sinr, int64_t at) {
        Segment s;
        s.sinr_db = sinr;
        s.start_sample = at;
        s.end_sample = at + 1;
        return s;
    };
    std::uniform_real_distribution<double> u(-5.0, 40.0);
    int subset_fail = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Segment> segs;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) segs.push_back(seg(u(rng), i));
        preprocess::PreprocessConfig lo, hi;
        lo.abs_min_sinr_db = u(rng);
        hi.abs_min_sinr_db = lo.abs_min_sinr_db + std::abs(u(rng));
        std::set<int64_t> kept_lo;
        for (const auto& s : preprocess::screen_segments(segs, lo)) kept_lo.insert(s.start_sample);
        for (const auto& s : preprocess::screen_segments(segs, hi)) {
            if (!kept_lo.count(s.start_sample)) ++subset_fail;
        }
    }

    std::vector<double> kept;
    for (const auto& s : preprocess::screen_segments({seg(20, 0), seg(18, 1), seg(6, 2), seg(3, 3)}, cfg)) {
        kept.push_back(s.sinr_db);
    }
    const bool example = kept == std::vector<double>{20, 18};
    return {shift_fail == 0 && subset_fail == 0 && example,
            fmt::format("shift {}/{} identical, subset violations {} in 500 trials, [20,18,6,3] keeps [{}]",
                        shift_cases - shift_fail, shift_cases, subset_fail, fmt::join(kept, ","))};
}

Outcome vade_sanity() {
    const auto set = testing::make_prototype_clips(100, 13);
    models::ModelConfig cfg;
    cfg.model_kind = models::ModelKind::vade;
    cfg.batch_size = 32;
    cfg.pretrain_epochs = 15;
    cfg.epochs = 20;
    cfg.n_gmm_components = 3;
    cfg.seed = 5;
    const auto m = models::train(set.clips, cfg);
    const auto z = m.latent_matrix(set.clips);
    std::vector<int> hard;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index k;
        models::gmm_responsibilities(*m.gmm(), z.row(i).transpose()).maxCoeff(&k);
        hard.push_back(static_cast<int>(k));
    }
    const double purity = testing::cluster_purity(hard, set.labels, 3, 3);

    // EM on held-out mixtures.
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    int drops = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const int k = 2 + trial % 4, d = 2 + trial % 3;
        Eigen::MatrixXd centers(k, d), pts(400, d);
        for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 4.0 * g(rng);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const auto c = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(k));
            for (int j = 0; j < d; ++j) pts(i, j) = centers(c, j) + g(rng);
        }
        const auto r = models::fit_gmm_em(pts, k, static_cast<uint64_t>(trial));
        for (size_t i = 1; i < r.log_likelihood.size(); ++i) {
            if (r.log_likelihood[i] < r.log_likelihood[i - 1] - 1e-9) ++drops;
        }
    }
    return {purity >= 0.90 && drops == 0,
            fmt::format("3-prototype purity {:.3f}, EM log-likelihood decreases {}", purity, drops)};
}

Outcome size_matching() {
    // Five models; flagged-set sizes per threshold 1..5 are {100,60,40,20,5}.
    const size_t n = 200;
    std::vector<std::vector<int>> per_model(5);
    const std::vector<int> at_least{100, 60, 40, 20, 5};
    for (int m = 0; m < 5; ++m) {
        for (int i = 0; i < at_least[static_cast<size_t>(m)]; ++i) per_model[static_cast<size_t>(m)].push_back(i);
    }
    const auto r = uod::match_outlier_class_size(per_model, n, 38);
    return {r.threshold == 3 && r.flagged.size() == 40,
            fmt::format("target 38 -> threshold {} ({} flagged)", r.threshold, r.flagged.size())};
}

// Injection benchmark state shared by the detection and ensemble checks.
struct Bench {
    pipeline::PipelineConfig cfg;
    fixture::FixtureTruth truth;
};

Bench make_bench(const std::filesystem::path& dir, uint64_t fixture_seed, uint64_t model_seed) {
    fixture::FixtureSpec spec;
    spec.seed = fixture_seed;
    Bench b;
    b.truth = fixture::write_fixture(dir / "mirror", spec);
    auto& c = b.cfg;
    c.species_code = spec.species_code;
    c.genus = spec.genus;
    c.species = spec.species;
    c.common_name = spec.common_name;
    c.root = dir / "data";
    c.source.kind = "mirror";
    c.source.mirror_dir = dir / "mirror";
    c.model.epochs = kEpochs;
    c.model.pretrain_epochs = kPretrainEpochs;
    c.model.seed = model_seed;
    c.uod.n_models = kEnsembleSize;
    c.uod.flat_clusters = 50;
    c.uod.max_discard_fraction = 0.10;
    c.uod.big_cluster_pct = 10.0;
    pipeline::run_fetch(c);
    pipeline::run_preprocess(c);
    return b;
}

// TPR: share of flagged clips that come from injected outlier recordings.
double tpr(const std::vector<int>& flagged, const uod::UodRun& run, const fixture::FixtureTruth& truth) {
    if (flagged.empty()) return 0.0;
    int hits = 0;
    for (int i : flagged) hits += truth.outliers.count(fixture::recording_of_clip(run.clip_ids[static_cast<size_t>(i)]));
    return static_cast<double>(hits) / static_cast<double>(flagged.size());
}

double recall(const std::vector<int>& flagged, const uod::UodRun& run, const fixture::FixtureTruth& truth) {
    std::set<std::string> found;
    for (int i : flagged) {
        const auto rec = fixture::recording_of_clip(run.clip_ids[static_cast<size_t>(i)]);
        if (truth.outliers.count(rec)) found.insert(rec);
    }
    return static_cast<double>(found.size()) / static_cast<double>(truth.outliers.size());
}

uod::UodRun detect(const Bench& b, models::ModelKind kind, models::ModelConfig model) {
    auto cfg = b.cfg;
    cfg.model = model;
    cfg.model.model_kind = kind;
    pipeline::run_train(cfg, kind);
    pipeline::DetectOptions o;
    o.kind = kind;
    pipeline::run_detect(cfg, o);
    return uod::UodRun::from_json(io::read_json(cfg.layout().uod_result(pipeline::run_id_for(kind, o.method.value_or(
        kind == models::ModelKind::vade ? uod::Method::gmm_density : uod::Method::hac_dbig)))));
}

struct EnsembleScore {
    double majority = 0.0;
    double mean_individual = 0.0;
};

EnsembleScore ensemble_score(const uod::UodRun& run, const fixture::FixtureTruth& truth) {
    EnsembleScore s;
    s.majority = tpr(run.result.flagged, run, truth);
    for (const auto& c : run.result.per_model_candidates) s.mean_individual += tpr(c, run, truth);
    s.mean_individual /= static_cast<double>(run.result.per_model_candidates.size());
    return s;
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);

    run("hac-oracle", hac_oracle);
    run("closed-forms", closed_forms);
    run("gradient-check", gradients);
    run("preprocess-invariants", preprocess_invariants);
    run("vade-clustering-sanity", vade_sanity);
    run("size-matching", size_matching);

    testing::TempDir tmp("acceptance");
    std::vector<EnsembleScore> reruns;
    try {
        const auto t0 = Clock::now();
        const Bench bench = make_bench(tmp / "bench", 7, 0);
        const models::ModelConfig base = bench.cfg.model;
        struct Case {
            std::string name;
            models::ModelKind kind;
            double threshold;
        };
        const std::vector<Case> cases{{"injection-cae-method1", models::ModelKind::cae, 0.80},
                                      {"injection-cvae-method1", models::ModelKind::cvae, 0.80},
                                      {"injection-vade-method2", models::ModelKind::vade, 0.70}};
        for (const auto& c : cases) {
            run(c.name, [&] {
                auto model = base;
                if (c.kind == models::ModelKind::vade) model.n_gmm_components = 3;
                const auto r = detect(bench, c.kind, model);
                const double t = tpr(r.result.flagged, r, bench.truth);
                if (c.kind == models::ModelKind::cae) reruns.push_back(ensemble_score(r, bench.truth));
                return Outcome{t >= c.threshold,
                               fmt::format("TPR {:.3f} (>= {:.2f}), recall {:.3f}, {} flagged, vote threshold {}", t,
                                           c.threshold, recall(r.result.flagged, r, bench.truth),
                                           r.result.flagged.size(), r.result.threshold)};
            });
        }
        const double secs = seconds_since(t0);
        report("injection-runtime", {secs < 20 * 60.0, fmt::format("{:.0f} s for fixture, preprocessing and three ensembles "
                                                                   "({} epochs per model, {} models)",
                                                                   secs, kEpochs, kEnsembleSize)});
    } catch (const std::exception& e) {
        report("injection-benchmark", {false, std::string("exception: ") + e.what()});
    }

    run("ensemble-benefit", [&] {
        for (uint64_t rerun = 1; reruns.size() < 5; ++rerun) {
            const Bench b = make_bench(tmp / fmt::format("rerun{}", rerun), 7 + 1000 * rerun, 100 * rerun);
            reruns.push_back(ensemble_score(detect(b, models::ModelKind::cae, b.cfg.model), b.truth));
        }
        double majority = 0.0, individual = 0.0;
        std::vector<std::string> parts;
        for (const auto& s : reruns) {
            majority += s.majority / 5.0;
            individual += s.mean_individual / 5.0;
            parts.push_back(fmt::format("{:.3f}/{:.3f}", s.majority, s.mean_individual));
        }
        return Outcome{majority >= individual,
                       fmt::format("mean majority TPR {:.3f} vs mean individual TPR {:.3f} (per rerun {})", majority,
                                   individual, fmt::join(parts, " "))};
    });

    std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
