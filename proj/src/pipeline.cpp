#include "birduod/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "birduod/cluster/hac.hpp"
#include "birduod/error.hpp"
#include "birduod/ingest/audio.hpp"
#include "birduod/ingest/fetcher.hpp"
#include "birduod/io.hpp"
#include "birduod/models/model.hpp"
#include "birduod/preprocess/clip_store.hpp"
#include "birduod/review/session.hpp"

namespace birduod::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
    if (species_code.empty()) throw UsageError("species_code is required");
    if (species_code.find_first_of("/\\. ") != std::string::npos) throw UsageError("species_code must be a plain name");
    preprocess.validate();
    model.validate();
    uod.validate();
    if (!(review.confidence > 0 && review.confidence < 1)) throw UsageError("review.confidence must lie in (0, 1)");
    if (threads < 0) throw UsageError("threads must be >= 0");
}

void to_json(json& j, const PipelineConfig& c) {
    json source{{"kind", c.source.kind},
                {"mirror_dir", c.source.mirror_dir.string()},
                {"base_url", c.source.base_url},
                {"api_key_env", c.source.api_key_env}};
    source["limit"] = c.source.limit ? json(*c.source.limit) : json(nullptr);
    json review{{"seed", c.review.seed},
                {"max_n", c.review.max_n},
                {"host", c.review.host},
                {"port", c.review.port},
                {"confidence", c.review.confidence},
                {"finite_population_correction", c.review.finite_population_correction},
                {"reviewer", c.review.reviewer}};
    review["static_dir"] = c.review.static_dir ? json(c.review.static_dir->string()) : json(nullptr);
    j = json{{"species_code", c.species_code},
             {"genus", c.genus},
             {"species", c.species},
             {"common_name", c.common_name},
             {"root", c.root.string()},
             {"source", source},
             {"preprocess", c.preprocess},
             {"model", c.model},
             {"uod", c.uod},
             {"review", review},
             {"threads", c.threads}};
}

void from_json(const json& j, PipelineConfig& c) {
    const PipelineConfig d;
    c.species_code = j.value("species_code", d.species_code);
    c.genus = j.value("genus", d.genus);
    c.species = j.value("species", d.species);
    c.common_name = j.value("common_name", d.common_name);
    c.root = j.value("root", d.root.string());
    c.threads = j.value("threads", d.threads);
    c.source = d.source;
    if (j.contains("source")) {
        const auto& s = j.at("source");
        c.source.kind = s.value("kind", d.source.kind);
        c.source.mirror_dir = s.value("mirror_dir", std::string());
        c.source.base_url = s.value("base_url", d.source.base_url);
        c.source.api_key_env = s.value("api_key_env", d.source.api_key_env);
        if (s.contains("limit") && !s.at("limit").is_null()) c.source.limit = s.at("limit").get<size_t>();
    }
    c.preprocess = j.value("preprocess", json::object()).get<preprocess::PreprocessConfig>();
    c.uod = j.value("uod", json::object()).get<uod::UodConfig>();
    const json model = j.value("model", json::object());
    c.model = model.get<models::ModelConfig>();
    if (!model.contains("n_gmm_components")) c.model.n_gmm_components = c.uod.flat_clusters;
    c.review = d.review;
    if (j.contains("review")) {
        const auto& r = j.at("review");
        c.review.seed = r.value("seed", d.review.seed);
        c.review.max_n = r.value("max_n", d.review.max_n);
        c.review.host = r.value("host", d.review.host);
        c.review.port = r.value("port", d.review.port);
        c.review.confidence = r.value("confidence", d.review.confidence);
        c.review.finite_population_correction =
            r.value("finite_population_correction", d.review.finite_population_correction);
        c.review.reviewer = r.value("reviewer", d.review.reviewer);
        if (r.contains("static_dir") && !r.at("static_dir").is_null()) {
            c.review.static_dir = r.at("static_dir").get<std::string>();
        }
    }
}

PipelineConfig load_config(const fs::path& path) {
    PipelineConfig cfg;
    try {
        cfg = io::read_json(path).get<PipelineConfig>();
    } catch (const json::exception& e) {
        throw UsageError("invalid config " + path.string() + ": " + e.what());
    }
    // Relative paths in the config are relative to the config file.
    const auto base = path.parent_path();
    if (cfg.root.is_relative()) cfg.root = base / cfg.root;
    if (!cfg.source.mirror_dir.empty() && cfg.source.mirror_dir.is_relative()) {
        cfg.source.mirror_dir = base / cfg.source.mirror_dir;
    }
    if (cfg.review.static_dir && cfg.review.static_dir->is_relative()) cfg.review.static_dir = base / *cfg.review.static_dir;
    return cfg;
}

namespace {

fs::path manifest_path(const SpeciesLayout& layout, const std::string& stage) {
    return layout.manifests_dir() / (stage + ".json");
}

std::string hash_files(const std::vector<fs::path>& files) {
    std::string all;
    for (const auto& f : files) all += io::sha256_file(f);
    return io::sha256_hex(all);
}

int worker_count(const PipelineConfig& cfg, size_t jobs) {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int want = cfg.threads > 0 ? cfg.threads : hw;
    return std::max(1, std::min(want, static_cast<int>(jobs)));
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    pool.clear();
    if (error) std::rethrow_exception(error);
}

std::string clip_store_hash(const SpeciesLayout& layout) {
    const preprocess::ClipStorePaths paths{layout.clips_dir()};
    if (!fs::exists(paths.index()) || !fs::exists(paths.bin())) {
        throw DataError("no clip store under " + layout.clips_dir().string() + "; run preprocess");
    }
    return hash_files({paths.index(), paths.bin()});
}

}  // namespace

bool manifest_current(const SpeciesLayout& layout, const Manifest& m) {
    const auto path = manifest_path(layout, m.stage);
    if (!fs::exists(path)) return false;
    json stored;
    try {
        stored = io::read_json(path);
    } catch (const DataError&) {
        return false;
    }
    if (stored.value("inputs", json()) != m.inputs) return false;
    for (const auto& out : stored.value("outputs", std::vector<std::string>{})) {
        if (!fs::exists(layout.dir() / out)) return false;
    }
    return true;
}

void write_manifest(const SpeciesLayout& layout, const Manifest& m) {
    fs::create_directories(layout.manifests_dir());
    io::write_text_atomic(manifest_path(layout, m.stage),
                          io::dump_json({{"stage", m.stage}, {"inputs", m.inputs}, {"outputs", m.outputs}}));
}

StageResult run_fetch(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.genus.empty() || cfg.species.empty()) throw UsageError("fetch needs genus and species in the config");
    std::unique_ptr<ingest::RecordingSource> source;
    if (cfg.source.kind == "mirror") {
        if (cfg.source.mirror_dir.empty()) throw UsageError("source.mirror_dir is required for a mirror source");
        source = std::make_unique<ingest::LocalMirrorSource>(cfg.source.mirror_dir);
    } else if (cfg.source.kind == "xeno-canto") {
        ingest::RemoteApiSource::Options o;
        o.base_url = cfg.source.base_url;
        if (const char* key = std::getenv(cfg.source.api_key_env.c_str())) o.api_key = key;
        source = std::make_unique<ingest::RemoteApiSource>(o);
    } else {
        throw UsageError("source.kind must be xeno-canto or mirror");
    }
    ingest::FetchOptions options;
    options.limit = cfg.source.limit;
    const auto r = ingest::fetch_species_recordings(*source, {cfg.genus, cfg.species, cfg.species_code, cfg.common_name},
                                                    cfg.root, options);
    for (const auto& f : r.failures) spdlog::warn("recording {} failed: {}", f.recording_id, f.reason);
    StageResult out;
    out.skipped = r.downloaded == 0 && r.failures.empty();
    out.summary = fmt::format("{} recordings ({} downloaded, {} cached, {} malformed, {} failed)", r.recordings.size(),
                              r.downloaded, r.skipped_cached, r.skipped_malformed, r.failures.size());
    if (!r.failures.empty() && r.recordings.empty()) throw DataError("fetch failed for every recording");
    return out;
}

StageResult run_preprocess(const PipelineConfig& cfg) {
    cfg.validate();
    const auto layout = cfg.layout();
    ingest::MetadataStore store(cfg.root, cfg.species_code);
    if (!fs::exists(store.index_path())) throw DataError("no recordings for " + cfg.species_code + "; run fetch");
    const auto recordings = store.load();

    std::vector<fs::path> inputs{store.index_path()};
    for (const auto& m : recordings) {
        inputs.push_back(store.meta_path(m.recording_id));
        inputs.push_back(layout.dir() / m.audio_path);
    }
    Manifest manifest{"preprocess", {{"config", cfg.preprocess}, {"recordings", hash_files(inputs)}},
                      {"clips/clips.bin", "clips/clips.index.json"}};
    if (manifest_current(layout, manifest)) return {true, "clip store up to date"};

    std::vector<std::vector<preprocess::Clip>> per_recording(recordings.size());
    std::atomic<size_t> failed{0};
    parallel_for(recordings.size(), worker_count(cfg, recordings.size()), [&](size_t i) {
        const auto& meta = recordings[i];
        try {
            const auto w = ingest::decode_audio(layout.dir() / meta.audio_path);
            per_recording[i] = preprocess::clips_from_recording(meta, w, cfg.preprocess);
        } catch (const DataError& e) {
            spdlog::warn("skipping recording {}: {}", meta.recording_id, e.what());
            ++failed;
        }
    });
    std::vector<preprocess::Clip> clips;
    for (auto& v : per_recording) {
        for (auto& c : v) clips.push_back(std::move(c));
    }
    if (clips.empty()) throw DataError("preprocess produced no clips for " + cfg.species_code);
    preprocess::write_clip_store({layout.clips_dir()}, clips, cfg.species_code);
    write_manifest(layout, manifest);
    return {false, fmt::format("{} clips from {} recordings ({} unreadable)", clips.size(), recordings.size(),
                               failed.load())};
}

LoadedClips load_clips(const SpeciesLayout& layout) {
    const auto clips = preprocess::load_clip_store({layout.clips_dir()});
    LoadedClips out;
    for (const auto& c : clips) {
        out.ids.push_back(c.clip_id);
        out.mels.push_back(c.mel);
        out.categories.emplace_back(ingest::to_string(c.category));
    }
    return out;
}

StageResult run_train(const PipelineConfig& cfg, models::ModelKind kind) {
    cfg.validate();
    const auto layout = cfg.layout();
    const std::string clips_hash = clip_store_hash(layout);
    const auto clips = load_clips(layout);

    std::vector<size_t> todo;
    std::vector<Manifest> manifests;
    for (int i = 0; i < cfg.uod.n_models; ++i) {
        models::ModelConfig mc = cfg.model;
        mc.model_kind = kind;
        mc.seed = cfg.model.seed + static_cast<uint64_t>(i);
        const auto ckpt = models::checkpoint_path(layout.models_dir(), kind, mc.seed);
        const auto rel = fs::relative(ckpt, layout.dir()).string();
        Manifest m{fmt::format("train_{}_{}", models::to_string(kind), mc.seed),
                   {{"clips", clips_hash}, {"model", mc}},
                   {rel}};
        manifests.push_back(m);
        if (!manifest_current(layout, m)) todo.push_back(static_cast<size_t>(i));
    }
    if (todo.empty()) return {true, fmt::format("{} {} checkpoints up to date", cfg.uod.n_models, models::to_string(kind))};

    fs::create_directories(layout.models_dir());
    parallel_for(todo.size(), worker_count(cfg, todo.size()), [&](size_t t) {
        const size_t i = todo[t];
        models::ModelConfig mc = cfg.model;
        mc.model_kind = kind;
        mc.seed = cfg.model.seed + static_cast<uint64_t>(i);
        const auto model = models::train(clips.mels, mc, [&](const models::EpochStats& s) {
            if (s.epoch % 10 == 0) {
                spdlog::info("{} seed {} {} epoch {}: loss {:.5g}", models::to_string(kind), mc.seed, s.phase, s.epoch,
                             s.loss);
            }
        });
        const auto ckpt = models::checkpoint_path(layout.models_dir(), kind, mc.seed);
        models::save_checkpoint(model, ckpt);
        auto codes = model.encode_all(clips.mels, clips.ids);
        auto csv = ckpt;
        csv.replace_extension(".latent.csv");
        models::write_latent_csv(csv, codes);
        write_manifest(layout, manifests[i]);
    });
    return {false, fmt::format("trained {} of {} {} models", todo.size(), cfg.uod.n_models, models::to_string(kind))};
}

std::string run_id_for(models::ModelKind kind, uod::Method method) {
    return fmt::format("{}-m{}", models::to_string(kind), static_cast<int>(method));
}

StageResult run_detect(const PipelineConfig& cfg, const DetectOptions& options) {
    cfg.validate();
    const auto layout = cfg.layout();
    const auto method = options.method.value_or(options.kind == models::ModelKind::vade ? uod::Method::gmm_density
                                                                                          : uod::Method::hac_dbig);
    if (method == uod::Method::gmm_density && options.kind != models::ModelKind::vade) {
        throw UsageError("method 2 needs vade models");
    }
    std::vector<fs::path> ckpts;
    std::vector<uod::ModelRef> refs;
    for (int i = 0; i < cfg.uod.n_models; ++i) {
        const uint64_t seed = cfg.model.seed + static_cast<uint64_t>(i);
        const auto p = models::checkpoint_path(layout.models_dir(), options.kind, seed);
        if (fs::exists(p)) {
            ckpts.push_back(p);
            refs.push_back({options.kind, seed});
        }
    }
    if (ckpts.empty()) throw DataError("no model checkpoints found; run train");
    if (static_cast<int>(ckpts.size()) < cfg.uod.n_models) {
        throw DataError(fmt::format("only {} of {} {} checkpoints found; run train", ckpts.size(), cfg.uod.n_models,
                                    models::to_string(options.kind)));
    }

    const std::string run_id = run_id_for(options.kind, method);
    json ckpt_hashes = json::array();
    for (const auto& p : ckpts) ckpt_hashes.push_back(io::sha256_file(p));
    json target = options.target_size ? json(*options.target_size) : json(nullptr);
    Manifest manifest{"detect_" + run_id,
                      {{"clips", clip_store_hash(layout)},
                       {"checkpoints", ckpt_hashes},
                       {"uod", cfg.uod},
                       {"method", static_cast<int>(method)},
                       {"target_size", target}},
                      {"uod/" + run_id + ".json"}};
    if (manifest_current(layout, manifest)) return {true, "detection run " + run_id + " up to date"};

    const auto clips = load_clips(layout);
    const size_t n = clips.ids.size();
    const size_t budget = cfg.uod.budget(n);
    std::vector<std::vector<int>> per_model(ckpts.size());
    fs::create_directories(layout.uod_dir());
    parallel_for(ckpts.size(), worker_count(cfg, ckpts.size()), [&](size_t m) {
        const auto model = models::TrainedModel::load(ckpts[m]);
        const Eigen::MatrixXd codes = model.latent_matrix(clips.mels);
        if (method == uod::Method::hac_dbig) {
            auto r = uod::method1(codes, cfg.uod.flat_clusters, budget, cfg.uod.big_cluster_pct);
            per_model[m] = std::move(r.candidates);
            const auto stem = layout.uod_dir() / fmt::format("{}_{}", run_id, refs[m].seed);
            const auto view = cluster::dendrogram_truncated(r.tree, std::min<int>(cfg.uod.flat_clusters, static_cast<int>(n)));
            io::write_text_atomic(stem.string() + ".dendrogram.json", io::dump_json(cluster::to_json(view)));
            io::write_text_atomic(stem.string() + ".dendrogram.svg", cluster::dendrogram_svg(view));
            io::write_text_atomic(stem.string() + ".clusters.csv", cluster::flat_clusters_csv(r.flat, clips.ids));
        } else {
            if (!model.gmm()) throw DataError("checkpoint " + ckpts[m].string() + " has no GMM parameters");
            per_model[m] = uod::method2_candidates(uod::method2_scores(codes, *model.gmm(), cfg.uod.density_score), budget);
        }
    });

    uod::UodRun run;
    run.run_id = run_id;
    run.method = method;
    run.config = cfg.uod;
    run.config.model_kind = options.kind;
    run.clip_ids = clips.ids;
    run.models = refs;
    run.result = options.target_size ? uod::match_outlier_class_size(per_model, n, *options.target_size)
                                     : uod::ensemble_vote(per_model, n, cfg.uod.resolved_threshold());
    io::write_text_atomic(layout.uod_result(run_id), io::dump_json(run.to_json()));
    io::write_text_atomic(layout.uod_dir() / (run_id + ".csv"), run.csv());
    write_manifest(layout, manifest);
    return {false, fmt::format("{}: {} of {} clips flagged (vote threshold {})", run_id, run.result.flagged.size(), n,
                               run.result.threshold)};
}

namespace {

std::vector<review::ReviewSession> load_sessions(const SpeciesLayout& layout) {
    std::vector<review::ReviewSession> out;
    if (!fs::exists(layout.review_dir())) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(layout.review_dir())) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(io::read_json(f).get<review::ReviewSession>());
    return out;
}

}  // namespace

StageResult run_evaluate(const PipelineConfig& cfg) {
    cfg.validate();
    const auto layout = cfg.layout();
    const auto clips = load_clips(layout);
    const auto entropy = evaluate::entropy_report(clips.mels, clips.categories);

    json sessions = json::array();
    for (const auto& s : load_sessions(layout)) {
        json entry{{"session_id", s.session_id},
                   {"run_id", s.run_id},
                   {"class", review::to_string(s.review_class)},
                   {"tallies", s.tallies()},
                   {"reviewed", s.verdicts.size()},
                   {"total", s.sample_order.size()}};
        try {
            entry["estimate"] = s.estimate(cfg.review.confidence, cfg.review.finite_population_correction);
        } catch (const UsageError&) {
            entry["estimate"] = nullptr;
        }
        sessions.push_back(std::move(entry));
    }
    const json out{{"species_code", cfg.species_code}, {"n_clips", clips.ids.size()}, {"entropy", entropy},
                   {"sessions", sessions}};
    fs::create_directories(layout.reports_dir());
    const bool changed = io::write_text_if_changed(layout.reports_dir() / "evaluation.json", io::dump_json(out));
    return {!changed, fmt::format("mean entropy {:.4f} bits over {} clips; {} review sessions", entropy.overall_mean,
                                  clips.ids.size(), sessions.size())};
}

StageResult run_report(const PipelineConfig& cfg) {
    cfg.validate();
    const auto layout = cfg.layout();
    const auto eval_path = layout.reports_dir() / "evaluation.json";
    if (!fs::exists(eval_path)) throw DataError("no evaluation results; run evaluate");
    const auto eval = io::read_json(eval_path);

    evaluate::SpeciesRow row;
    row.species = cfg.species_code;
    row.n_clips = eval.at("n_clips").get<int>();
    row.entropy = eval.at("entropy").at("overall_mean").get<double>();
    // One column pair per ensemble kind; the outlier-class session with the most verdicts wins.
    std::map<std::string, std::pair<size_t, evaluate::RateEstimate>> best;
    for (const auto& s : eval.at("sessions")) {
        if (s.at("class") != "outlier_class" || s.at("estimate").is_null()) continue;
        const auto run = s.at("run_id").get<std::string>();
        const auto kind = run.substr(0, run.find('-'));
        const auto& e = s.at("estimate");
        evaluate::RateEstimate r;
        r.rate = e.at("rate");
        r.moe = e.at("moe");
        r.confidence = e.at("confidence");
        r.n_sampled = e.at("n_sampled");
        r.n_population = e.at("n_population");
        r.positives = e.at("positives");
        r.indeterminate = e.at("indeterminate");
        const auto reviewed = s.at("reviewed").get<size_t>();
        if (!best.contains(kind) || reviewed > best[kind].first) best[kind] = {reviewed, r};
    }
    for (const auto kind : {models::ModelKind::cae, models::ModelKind::cvae, models::ModelKind::vade}) {
        const std::string name(models::to_string(kind));
        evaluate::EnsembleRate er{name, std::nullopt};
        if (best.contains(name)) er.tpr = best[name].second;
        row.ensembles.push_back(er);
    }
    const auto table = evaluate::format_report_table({row});
    io::write_text_if_changed(layout.reports_dir() / "report.txt", table);
    io::write_text_if_changed(layout.reports_dir() / "report.json", io::dump_json(evaluate::report_json({row})));
    return {false, table};
}

}  // namespace birduod::pipeline
