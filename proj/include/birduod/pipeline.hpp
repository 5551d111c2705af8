#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "birduod/evaluate/evaluate.hpp"
#include "birduod/layout.hpp"
#include "birduod/models/config.hpp"
#include "birduod/preprocess/clip.hpp"
#include "birduod/preprocess/config.hpp"
#include "birduod/uod/uod.hpp"

namespace birduod::pipeline {

struct SourceOptions {
    std::string kind = "xeno-canto";  // or "mirror"
    std::filesystem::path mirror_dir;
    std::string base_url = "https://xeno-canto.org/api/3/recordings";
    std::string api_key_env = "XC_API_KEY";
    std::optional<size_t> limit;
};

struct ReviewOptions {
    uint64_t seed = 0;
    size_t max_n = 96;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;
    double confidence = 0.95;
    bool finite_population_correction = false;
    std::string reviewer = "reviewer";
};

struct PipelineConfig {
    std::string species_code;
    std::string genus;
    std::string species;
    std::string common_name;
    std::filesystem::path root = "data";
    SourceOptions source;
    preprocess::PreprocessConfig preprocess;
    models::ModelConfig model;
    uod::UodConfig uod;
    ReviewOptions review;
    int threads = 0;  // 0: one per hardware thread

    SpeciesLayout layout() const { return {root, species_code}; }
    void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Missing keys take defaults; model.n_gmm_components defaults to uod.flat_clusters.
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

/// Stage manifests record input hashes; a stage whose manifest matches its
/// current inputs and whose outputs exist is skipped.
struct Manifest {
    std::string stage;
    nlohmann::json inputs;
    std::vector<std::string> outputs;  // relative to the species directory
};

bool manifest_current(const SpeciesLayout& layout, const Manifest& m);
void write_manifest(const SpeciesLayout& layout, const Manifest& m);

struct StageResult {
    bool skipped = false;
    std::string summary;
};

StageResult run_fetch(const PipelineConfig& cfg);
StageResult run_preprocess(const PipelineConfig& cfg);
/// Trains uod.n_models members of `kind` with seeds model.seed + i.
StageResult run_train(const PipelineConfig& cfg, models::ModelKind kind);

struct DetectOptions {
    models::ModelKind kind = models::ModelKind::cae;
    std::optional<uod::Method> method;  // default: 1 for cae/cvae, 2 for vade
    std::optional<size_t> target_size;  // match the outlier class size instead of voting by threshold
};

std::string run_id_for(models::ModelKind kind, uod::Method method);
StageResult run_detect(const PipelineConfig& cfg, const DetectOptions& options);
StageResult run_evaluate(const PipelineConfig& cfg);
/// Writes reports/report.txt and report.json; summary holds the table.
StageResult run_report(const PipelineConfig& cfg);

struct LoadedClips {
    std::vector<std::string> ids;
    std::vector<preprocess::Spectrogram> mels;
    std::vector<std::string> categories;
};

LoadedClips load_clips(const SpeciesLayout& layout);

}  // namespace birduod::pipeline
