#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "birduod/ingest/recording.hpp"

namespace birduod::ingest {

struct SpeciesQuery {
    std::string genus;
    std::string species;
    std::string species_code;
    std::string common_name;
};

/// One listing entry as published by a recording source. Field names follow
/// the repository API ("id", "gen", "sp", "en", "type", "also", "file").
struct SourceRecord {
    std::string id;
    std::string genus;
    std::string species;
    std::string common_name;
    std::string type_field;
    std::optional<std::vector<std::string>> also;
    // URL for the remote backend, mirror-relative path for the local one.
    std::string location;
    // ".mp3" unless the source file name says otherwise.
    std::string extension;
};

/// Returns nullopt for records missing an id or a file reference.
std::optional<SourceRecord> parse_source_record(const nlohmann::json& j);

/// Thrown for failures that may succeed on retry (network, HTTP 5xx, ...).
class TransientFetchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RecordingSource {
public:
    virtual ~RecordingSource() = default;
    virtual std::vector<nlohmann::json> list(const SpeciesQuery& query) = 0;
    virtual void download(const SourceRecord& record, const std::filesystem::path& dest) = 0;
};

/// A directory holding `recordings.json` ({"recordings": [...]}, API-shaped
/// records whose "file" is a path relative to the directory) plus audio.
class LocalMirrorSource final : public RecordingSource {
public:
    explicit LocalMirrorSource(std::filesystem::path dir);
    std::vector<nlohmann::json> list(const SpeciesQuery& query) override;
    void download(const SourceRecord& record, const std::filesystem::path& dest) override;

private:
    std::filesystem::path dir_;
};

/// Paged JSON recordings API reached over HTTP(S).
class RemoteApiSource final : public RecordingSource {
public:
    struct Options {
        std::string base_url = "https://xeno-canto.org/api/3/recordings";
        std::string api_key;
        long timeout_seconds = 60;
    };

    explicit RemoteApiSource(Options options);
    std::vector<nlohmann::json> list(const SpeciesQuery& query) override;
    void download(const SourceRecord& record, const std::filesystem::path& dest) override;

private:
    Options options_;
};

struct FetchFailure {
    std::string recording_id;
    std::string reason;
};

struct FetchResult {
    std::vector<RecordingMeta> recordings;
    std::size_t downloaded = 0;
    std::size_t skipped_cached = 0;
    std::size_t skipped_malformed = 0;
    std::vector<FetchFailure> failures;
};

struct FetchOptions {
    std::optional<std::size_t> limit;
    int max_attempts = 3;
};

/// Single-writer store for `<root>/<code>/meta/*.json` and `index.json`.
class MetadataStore {
public:
    MetadataStore(std::filesystem::path root, std::string species_code);

    std::filesystem::path species_dir() const { return root_ / code_; }
    std::filesystem::path raw_dir() const { return species_dir() / "raw"; }
    std::filesystem::path meta_path(const std::string& recording_id) const;
    std::filesystem::path index_path() const { return species_dir() / "index.json"; }

    void put(const RecordingMeta& meta);
    void write_index(const SpeciesQuery& query, const std::vector<std::string>& recording_ids);

    /// Recordings listed in index.json, in index order.
    std::vector<RecordingMeta> load() const;

private:
    std::filesystem::path root_;
    std::string code_;
    mutable std::mutex mutex_;
};

/// Lists, downloads (skipping cached files), and persists metadata for one
/// species. Malformed listing entries are skipped with a warning; download
/// failures are retried and then reported per recording.
FetchResult fetch_species_recordings(RecordingSource& source, const SpeciesQuery& query,
                                     const std::filesystem::path& root, const FetchOptions& options = {});

}  // namespace birduod::ingest
