#include <cstdlib>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "birduod/error.hpp"
#include "birduod/fixture.hpp"
#include "birduod/io.hpp"
#include "birduod/pipeline.hpp"
#include "birduod/review/session.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using namespace birduod;
using namespace birduod::pipeline;
using birduod::testing::TempDir;

namespace {

// A small fixture species run once for the whole suite.
class PipelineSuite : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("birduod-pipeline");
        fixture::FixtureSpec spec;
        spec.n_songs = 30;
        spec.n_calls = 30;
        spec.n_outliers = 8;
        fixture::write_fixture(dir_->path() / "mirror", spec);
        cfg_ = new PipelineConfig;
        cfg_->species_code = spec.species_code;
        cfg_->genus = spec.genus;
        cfg_->species = spec.species;
        cfg_->root = dir_->path() / "data";
        cfg_->source.kind = "mirror";
        cfg_->source.mirror_dir = dir_->path() / "mirror";
        cfg_->model.epochs = 2;
        cfg_->model.pretrain_epochs = 1;
        cfg_->model.batch_size = 16;
        cfg_->model.n_gmm_components = 3;
        cfg_->uod.n_models = 3;
        cfg_->uod.flat_clusters = 10;
    }
    static void TearDownTestSuite() {
        delete cfg_;
        delete dir_;
    }

    static inline TempDir* dir_ = nullptr;
    static inline PipelineConfig* cfg_ = nullptr;
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BIRDUOD_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(PipelineSuite, StagesRunInOrderAndSkipWhenCurrent) {
    const auto& cfg = *cfg_;
    const auto layout = cfg.layout();
    EXPECT_THROW(run_preprocess(cfg), DataError);

    EXPECT_FALSE(run_fetch(cfg).skipped);
    EXPECT_TRUE(run_fetch(cfg).skipped);
    EXPECT_FALSE(run_preprocess(cfg).skipped);
    EXPECT_TRUE(run_preprocess(cfg).skipped);
    const auto clips = load_clips(layout);
    EXPECT_GE(clips.ids.size(), 60u);

    try {
        run_detect(cfg, {});
        FAIL() << "detect before train must fail";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("run train"), std::string::npos);
    }

    EXPECT_FALSE(run_train(cfg, models::ModelKind::cae).skipped);
    EXPECT_TRUE(run_train(cfg, models::ModelKind::cae).skipped);
    for (uint64_t seed = 0; seed < 3; ++seed) {
        EXPECT_TRUE(fs::exists(layout.models_dir() / ("cae_" + std::to_string(seed) + ".ckpt")));
        EXPECT_TRUE(fs::exists(layout.models_dir() / ("cae_" + std::to_string(seed) + ".json")));
        EXPECT_TRUE(fs::exists(layout.models_dir() / ("cae_" + std::to_string(seed) + ".latent.csv")));
    }

    EXPECT_FALSE(run_detect(cfg, {}).skipped);
    EXPECT_TRUE(run_detect(cfg, {}).skipped);
    const auto run = uod::UodRun::from_json(io::read_json(layout.uod_result("cae-m1")));
    EXPECT_EQ(run.result.threshold, 2);
    EXPECT_EQ(run.clip_ids, clips.ids);
    for (const auto& set : run.result.per_model_candidates) EXPECT_LE(set.size(), cfg.uod.budget(clips.ids.size()));
    EXPECT_TRUE(fs::exists(layout.uod_dir() / "cae-m1.csv"));
    EXPECT_TRUE(fs::exists(layout.uod_dir() / "cae-m1_0.dendrogram.svg"));
    EXPECT_TRUE(fs::exists(layout.uod_dir() / "cae-m1_0.clusters.csv"));

    DetectOptions matched;
    matched.target_size = 4;
    run_detect(cfg, matched);

    EXPECT_THROW(run_detect(cfg, {.kind = models::ModelKind::cae, .method = uod::Method::gmm_density, .target_size = {}}), UsageError);
    run_train(cfg, models::ModelKind::vade);
    run_detect(cfg, {.kind = models::ModelKind::vade, .method = {}, .target_size = {}});
    EXPECT_TRUE(fs::exists(layout.uod_result("vade-m2")));

    EXPECT_THROW(run_report(cfg), DataError);
    review::SessionStore store(layout);
    const auto s = store.create("cae-m1", review::ReviewClass::outlier_class, 0, 0);
    store.submit(s.session_id, {s.sample_order[0], evaluate::Verdict::outlier, {}, "t", review::utc_timestamp()}, false);
    run_evaluate(cfg);
    const auto eval = io::read_json(layout.reports_dir() / "evaluation.json");
    EXPECT_EQ(eval.at("sessions").size(), 1u);
    EXPECT_GT(eval.at("entropy").at("overall_mean").get<double>(), 0.0);
    const auto report = run_report(cfg);
    EXPECT_NE(report.summary.find("SYNF"), std::string::npos);
    EXPECT_NE(report.summary.find("1.000"), std::string::npos);
    EXPECT_TRUE(fs::exists(layout.reports_dir() / "report.json"));
}

TEST(PipelineConfig, JsonRoundTripAndDefaults) {
    TempDir dir;
    PipelineConfig cfg;
    cfg.species_code = "AUWA";
    cfg.uod.flat_clusters = 12;
    cfg.review.static_dir = "ui";
    nlohmann::json j = cfg;
    j["model"].erase("n_gmm_components");
    j["root"] = "data";
    io::write_text_atomic(dir / "cfg.json", j.dump());
    const auto back = load_config(dir / "cfg.json");
    EXPECT_EQ(back.model.n_gmm_components, 12);
    EXPECT_EQ(back.root, dir / "data");
    EXPECT_EQ(*back.review.static_dir, dir / "ui");
    EXPECT_EQ(back.uod.flat_clusters, 12);

    io::write_text_atomic(dir / "bad.json", "{\"uod\": {\"vote_threshold\": []}}");
    EXPECT_THROW(load_config(dir / "bad.json"), UsageError);
    cfg.species_code = "../x";
    EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Manifest, DetectsChangedInputsAndMissingOutputs) {
    TempDir dir;
    const SpeciesLayout layout{dir.path(), "T"};
    io::write_text_atomic(layout.dir() / "out.txt", "x");
    const Manifest m{"stage", {{"a", 1}}, {"out.txt"}};
    EXPECT_FALSE(manifest_current(layout, m));
    write_manifest(layout, m);
    EXPECT_TRUE(manifest_current(layout, m));
    EXPECT_FALSE(manifest_current(layout, {"stage", {{"a", 2}}, {"out.txt"}}));
    fs::remove(layout.dir() / "out.txt");
    EXPECT_FALSE(manifest_current(layout, m));
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("train"), 1);
    EXPECT_EQ(run_cli("-c " + (dir / "missing.json").string() + " preprocess"), 2);
    EXPECT_EQ(run_cli("detect --method 3"), 1);

    EXPECT_EQ(run_cli("fixture --out " + (dir / "mirror").string() + " --songs 6 --calls 6 --outliers 2 --write-config " +
                      (dir / "cfg.json").string()),
              0);
    const auto cfg = "-c " + (dir / "cfg.json").string();
    EXPECT_EQ(run_cli(cfg + " detect"), 2);
    EXPECT_EQ(run_cli(cfg + " fetch"), 0);
    EXPECT_EQ(run_cli(cfg + " report"), 2);
    EXPECT_EQ(run_cli(cfg + " train --kind gan"), 1);
    EXPECT_EQ(run_cli(cfg + " review --terminal"), 1);
}
