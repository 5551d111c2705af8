#pragma once

#include <filesystem>
#include <string>

namespace birduod {

/// On-disk layout of one species under the data root.
struct SpeciesLayout {
    std::filesystem::path root;
    std::string species_code;

    std::filesystem::path dir() const { return root / species_code; }
    std::filesystem::path clips_dir() const { return dir() / "clips"; }
    std::filesystem::path models_dir() const { return dir() / "models"; }
    std::filesystem::path uod_dir() const { return dir() / "uod"; }
    std::filesystem::path review_dir() const { return dir() / "review"; }
    std::filesystem::path reports_dir() const { return dir() / "reports"; }
    std::filesystem::path manifests_dir() const { return dir() / "manifests"; }
    std::filesystem::path uod_result(const std::string& run_id) const { return uod_dir() / (run_id + ".json"); }
    std::filesystem::path session_file(const std::string& session_id) const {
        return review_dir() / (session_id + ".json");
    }
};

}  // namespace birduod
