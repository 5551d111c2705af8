#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "birduod/error.hpp"
#include "birduod/fixture.hpp"
#include "birduod/io.hpp"
#include "birduod/pipeline.hpp"
#include "birduod/review/server.hpp"

namespace fs = std::filesystem;
using namespace birduod;

namespace {

review::ReviewServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

struct Common {
    std::string config;
    std::string root;
    std::string species;
    int threads = -1;
    bool verbose = false;

    pipeline::PipelineConfig load() const {
        if (config.empty()) throw UsageError("--config is required");
        auto cfg = pipeline::load_config(config);
        if (!root.empty()) cfg.root = root;
        if (!species.empty()) cfg.species_code = species;
        if (threads >= 0) cfg.threads = threads;
        cfg.validate();
        return cfg;
    }
};

void print(const pipeline::StageResult& r) {
    std::cout << (r.skipped ? "[skipped] " : "") << r.summary << (r.summary.ends_with('\n') ? "" : "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bird-sound label-noise cleaning: fetch, preprocess, train, detect, review, evaluate"};
    app.require_subcommand(1);
    Common common;
    app.add_option("-c,--config", common.config, "pipeline config (JSON)");
    app.add_option("--root", common.root, "override the data root");
    app.add_option("--species", common.species, "override the species code");
    app.add_option("--threads", common.threads, "worker threads (0: all cores)");
    app.add_flag("-v,--verbose", common.verbose, "debug logging");

    auto* fixture_cmd = app.add_subcommand("fixture", "write the synthetic test species as a local mirror");
    std::string fixture_out;
    fixture::FixtureSpec spec;
    std::string write_config;
    fixture_cmd->add_option("--out", fixture_out, "mirror directory")->required();
    fixture_cmd->add_option("--songs", spec.n_songs);
    fixture_cmd->add_option("--calls", spec.n_calls);
    fixture_cmd->add_option("--outliers", spec.n_outliers);
    fixture_cmd->add_option("--seed", spec.seed);
    fixture_cmd->add_option("--write-config", write_config, "also write a pipeline config using this mirror");

    auto* fetch_cmd = app.add_subcommand("fetch", "download recordings and metadata");
    auto* preprocess_cmd = app.add_subcommand("preprocess", "segment recordings and extract clips");

    auto* train_cmd = app.add_subcommand("train", "train the ensemble members");
    std::string kind_name;
    train_cmd->add_option("--kind", kind_name, "cae, cvae or vade (default: model.model_kind)");

    auto* detect_cmd = app.add_subcommand("detect", "flag outliers with an ensemble vote");
    int method = 0;
    std::optional<size_t> target_size;
    detect_cmd->add_option("--kind", kind_name, "cae, cvae or vade (default: model.model_kind)");
    detect_cmd->add_option("--method", method, "1 (HAC d_big) or 2 (GMM density)")->check(CLI::Range(1, 2));
    detect_cmd->add_option("--target-size", target_size, "choose the vote threshold matching this outlier class size");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "entropy report and rate estimates from review sessions");

    auto* review_cmd = app.add_subcommand("review", "serve the review UI, or review in the terminal");
    std::string run_id, review_class = "outlier_class";
    std::optional<uint64_t> review_seed;
    std::optional<size_t> review_max_n;
    std::optional<int> port;
    bool terminal = false;
    std::string player;
    review_cmd->add_option("--run", run_id, "detection run id, e.g. cae-m1 (terminal mode)");
    review_cmd->add_option("--class", review_class, "outlier_class or inlier_class");
    review_cmd->add_option("--seed", review_seed);
    review_cmd->add_option("--max-n", review_max_n);
    review_cmd->add_option("--port", port);
    review_cmd->add_flag("--terminal", terminal, "console review loop instead of the HTTP service");
    review_cmd->add_option("--player", player, "command used to play segment audio in terminal mode");

    auto* report_cmd = app.add_subcommand("report", "summary table per species");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::usage);
    }
    spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (fixture_cmd->parsed()) {
            const auto truth = fixture::write_fixture(fixture_out, spec);
            std::cout << "wrote " << spec.n_songs + spec.n_calls + spec.n_outliers << " recordings ("
                      << truth.outliers.size() << " injected outliers) to " << fixture_out << "\n";
            if (!write_config.empty()) {
                pipeline::PipelineConfig cfg;
                cfg.species_code = spec.species_code;
                cfg.genus = spec.genus;
                cfg.species = spec.species;
                cfg.common_name = spec.common_name;
                cfg.source.kind = "mirror";
                cfg.source.mirror_dir = fs::absolute(fixture_out);
                cfg.root = fs::absolute(fs::path(write_config).parent_path() / "data");
                io::write_text_atomic(write_config, io::dump_json(cfg));
                std::cout << "config: " << write_config << "\n";
            }
            return 0;
        }

        const auto cfg = common.load();
        const auto kind = kind_name.empty() ? cfg.model.model_kind : models::model_kind_from_string(kind_name);
        if (fetch_cmd->parsed()) print(pipeline::run_fetch(cfg));
        if (preprocess_cmd->parsed()) print(pipeline::run_preprocess(cfg));
        if (train_cmd->parsed()) print(pipeline::run_train(cfg, kind));
        if (detect_cmd->parsed()) {
            pipeline::DetectOptions o;
            o.kind = kind;
            if (method) o.method = static_cast<uod::Method>(method);
            o.target_size = target_size;
            print(pipeline::run_detect(cfg, o));
        }
        if (evaluate_cmd->parsed()) print(pipeline::run_evaluate(cfg));
        if (report_cmd->parsed()) print(pipeline::run_report(cfg));
        if (review_cmd->parsed()) {
            const auto layout = cfg.layout();
            if (terminal) {
                if (run_id.empty()) throw UsageError("--run is required with --terminal");
                review::SessionStore store(layout);
                const review::ClipCatalog clips(layout);
                const auto s = store.create(run_id, review::review_class_from_string(review_class),
                                            review_seed.value_or(cfg.review.seed), review_max_n.value_or(cfg.review.max_n));
                std::cout << "session " << s.session_id << ": " << s.sample_order.size() << " clips\n";
                review::run_terminal_review(store, clips, s.session_id, std::cin, std::cout, cfg.review.reviewer,
                                            layout.review_dir() / "current_segment.wav", player);
            } else {
                review::ServerOptions o;
                o.host = cfg.review.host;
                o.port = port.value_or(cfg.review.port);
                o.static_dir = cfg.review.static_dir;
                o.reviewer = cfg.review.reviewer;
                o.max_n = cfg.review.max_n;
                review::ReviewServer server(layout, o);
                const int bound = server.bind();
                g_server = &server;
                std::signal(SIGINT, on_signal);
                std::signal(SIGTERM, on_signal);
                std::cout << "review service on http://" << o.host << ":" << bound << "\n" << std::flush;
                server.serve();
                g_server = nullptr;
            }
        }
        return static_cast<int>(ExitCode::ok);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::usage);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return static_cast<int>(ExitCode::numerical);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
    }
}
