#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace birduod::fixture {

/// Offline stand-in for a single-species download: descending-chirp songs,
/// tone-burst calls, and mislabeled outliers of several kinds, one
/// vocalization per recording.
struct FixtureSpec {
    int n_songs = 500;
    int n_calls = 500;
    int n_outliers = 100;
    uint64_t seed = 7;
    std::string genus = "Synthetica";
    std::string species = "fixtura";
    std::string common_name = "Synthetic Fixture Bird";
    std::string species_code = "SYNF";
};

struct FixtureTruth {
    std::set<std::string> outliers;              // recording ids
    std::map<std::string, std::string> kind_of;  // recording id -> song, call, or outlier kind
};

/// Outlier kinds, assigned round-robin.
const std::vector<std::string>& outlier_kinds();

/// One recording's samples at 22050 Hz for `kind` (song, call, or an outlier kind).
std::vector<float> synthesize(const std::string& kind, std::mt19937_64& rng);

/// Writes `<dir>/recordings.json`, `<dir>/audio/<id>.wav` and `<dir>/truth.json`.
FixtureTruth write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec);

FixtureTruth load_truth(const std::filesystem::path& dir);

/// Recording id of a clip id (`<recording>_<segment>`).
std::string recording_of_clip(const std::string& clip_id);

}  // namespace birduod::fixture
