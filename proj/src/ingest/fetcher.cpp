#include "birduod/ingest/fetcher.hpp"

#include <curl/curl.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include <spdlog/spdlog.h>

#include "birduod/error.hpp"
#include "birduod/io.hpp"

namespace birduod::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string string_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    return {};
}

bool safe_id(const std::string& id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_';
    });
}

std::string extension_of(const std::string& name) {
    auto ext = lower(fs::path(name).extension().string());
    if (ext == ".mp3" || ext == ".wav" || ext == ".flac" || ext == ".ogg") return ext;
    return ".mp3";
}

}  // namespace

std::optional<SourceRecord> parse_source_record(const json& j) {
    if (!j.is_object()) return std::nullopt;
    SourceRecord r;
    r.id = string_field(j, "id");
    r.location = string_field(j, "file");
    if (!safe_id(r.id) || r.location.empty()) return std::nullopt;
    r.genus = string_field(j, "gen");
    r.species = string_field(j, "sp");
    r.common_name = string_field(j, "en");
    r.type_field = string_field(j, "type");
    if (auto it = j.find("also"); it != j.end() && it->is_array()) {
        std::vector<std::string> also;
        for (const auto& a : *it) {
            if (a.is_string() && !a.get<std::string>().empty()) also.push_back(a.get<std::string>());
        }
        r.also = std::move(also);
    }
    auto file_name = string_field(j, "file-name");
    r.extension = extension_of(file_name.empty() ? r.location : file_name);
    return r;
}

// ---------------------------------------------------------------- local mirror

LocalMirrorSource::LocalMirrorSource(fs::path dir) : dir_(std::move(dir)) {}

std::vector<json> LocalMirrorSource::list(const SpeciesQuery& query) {
    const auto listing = io::read_json(dir_ / "recordings.json");
    std::vector<json> out;
    if (!listing.contains("recordings") || !listing["recordings"].is_array()) {
        throw DataError("mirror listing " + (dir_ / "recordings.json").string() + " has no recordings array");
    }
    const auto gen = lower(query.genus);
    const auto sp = lower(query.species);
    for (const auto& rec : listing["recordings"]) {
        if (!rec.is_object()) {
            out.push_back(rec);  // surfaces as malformed downstream
            continue;
        }
        if (lower(string_field(rec, "gen")) == gen && lower(string_field(rec, "sp")) == sp) out.push_back(rec);
    }
    return out;
}

void LocalMirrorSource::download(const SourceRecord& record, const fs::path& dest) {
    const auto src = dir_ / record.location;
    std::error_code ec;
    if (!fs::exists(src, ec)) throw TransientFetchError("mirror file missing: " + src.string());
    fs::create_directories(dest.parent_path());
    auto tmp = dest;
    tmp += ".part";
    fs::copy_file(src, tmp, fs::copy_options::overwrite_existing, ec);
    if (ec) throw TransientFetchError("copy failed for " + src.string() + ": " + ec.message());
    fs::rename(tmp, dest);
}

// ---------------------------------------------------------------- remote API

namespace {

struct CurlGlobal {
    CurlGlobal() { curl_global_init(CURL_GLOBAL_DEFAULT); }
    ~CurlGlobal() { curl_global_cleanup(); }
};

void ensure_curl() { static CurlGlobal global; }

size_t append_to_string(char* ptr, size_t size, size_t nmemb, void* userdata) {
    static_cast<std::string*>(userdata)->append(ptr, size * nmemb);
    return size * nmemb;
}

size_t append_to_file(char* ptr, size_t size, size_t nmemb, void* userdata) {
    return std::fwrite(ptr, size, nmemb, static_cast<std::FILE*>(userdata)) * size;
}

struct CurlHandle {
    CURL* h = curl_easy_init();
    ~CurlHandle() {
        if (h) curl_easy_cleanup(h);
    }
};

std::string escape(CURL* h, const std::string& s) {
    char* e = curl_easy_escape(h, s.c_str(), static_cast<int>(s.size()));
    std::string out(e ? e : "");
    curl_free(e);
    return out;
}

void check_transfer(CURL* h, CURLcode rc, const std::string& url) {
    if (rc != CURLE_OK) throw TransientFetchError(url + ": " + curl_easy_strerror(rc));
    long status = 0;
    curl_easy_getinfo(h, CURLINFO_RESPONSE_CODE, &status);
    if (status >= 400) throw TransientFetchError(url + ": HTTP " + std::to_string(status));
}

}  // namespace

RemoteApiSource::RemoteApiSource(Options options) : options_(std::move(options)) { ensure_curl(); }

std::vector<json> RemoteApiSource::list(const SpeciesQuery& query) {
    CurlHandle curl;
    if (!curl.h) throw TransientFetchError("curl init failed");
    std::vector<json> out;
    const auto q = escape(curl.h, "gen:" + query.genus + " sp:" + query.species);
    int page = 1;
    int pages = 1;
    do {
        std::string url = options_.base_url + "?query=" + q + "&page=" + std::to_string(page);
        if (!options_.api_key.empty()) url += "&key=" + escape(curl.h, options_.api_key);
        std::string body;
        curl_easy_reset(curl.h);
        curl_easy_setopt(curl.h, CURLOPT_URL, url.c_str());
        curl_easy_setopt(curl.h, CURLOPT_FOLLOWLOCATION, 1L);
        curl_easy_setopt(curl.h, CURLOPT_TIMEOUT, options_.timeout_seconds);
        curl_easy_setopt(curl.h, CURLOPT_WRITEFUNCTION, append_to_string);
        curl_easy_setopt(curl.h, CURLOPT_WRITEDATA, &body);
        check_transfer(curl.h, curl_easy_perform(curl.h), url);
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::parse_error& e) {
            throw TransientFetchError(url + ": unparsable response: " + e.what());
        }
        if (doc.contains("numPages")) {
            const auto& np = doc["numPages"];
            pages = np.is_string() ? std::stoi(np.get<std::string>()) : np.get<int>();
        }
        if (doc.contains("recordings") && doc["recordings"].is_array()) {
            for (auto& rec : doc["recordings"]) out.push_back(std::move(rec));
        }
        ++page;
    } while (page <= pages);
    return out;
}

void RemoteApiSource::download(const SourceRecord& record, const fs::path& dest) {
    CurlHandle curl;
    if (!curl.h) throw TransientFetchError("curl init failed");
    fs::create_directories(dest.parent_path());
    auto tmp = dest;
    tmp += ".part";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw DataError("cannot write " + tmp.string());
    std::string url = record.location;
    if (url.rfind("//", 0) == 0) url = "https:" + url;
    curl_easy_setopt(curl.h, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl.h, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl.h, CURLOPT_TIMEOUT, options_.timeout_seconds);
    curl_easy_setopt(curl.h, CURLOPT_WRITEFUNCTION, append_to_file);
    curl_easy_setopt(curl.h, CURLOPT_WRITEDATA, f);
    const auto rc = curl_easy_perform(curl.h);
    std::fclose(f);
    try {
        check_transfer(curl.h, rc, url);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    fs::rename(tmp, dest);
}

// ---------------------------------------------------------------- store

MetadataStore::MetadataStore(fs::path root, std::string species_code)
    : root_(std::move(root)), code_(std::move(species_code)) {}

fs::path MetadataStore::meta_path(const std::string& recording_id) const {
    return species_dir() / "meta" / (recording_id + ".json");
}

void MetadataStore::put(const RecordingMeta& meta) {
    std::lock_guard lock(mutex_);
    io::write_text_if_changed(meta_path(meta.recording_id), io::dump_json(json(meta)));
}

void MetadataStore::write_index(const SpeciesQuery& query, const std::vector<std::string>& recording_ids) {
    std::lock_guard lock(mutex_);
    json idx{{"species_code", code_},
             {"genus", query.genus},
             {"species", query.species},
             {"common_name", query.common_name},
             {"recordings", recording_ids}};
    io::write_text_if_changed(index_path(), io::dump_json(idx));
}

std::vector<RecordingMeta> MetadataStore::load() const {
    std::lock_guard lock(mutex_);
    if (!fs::exists(index_path())) {
        throw DataError("no index at " + index_path().string() + "; run fetch");
    }
    const auto idx = io::read_json(index_path());
    std::vector<RecordingMeta> out;
    for (const auto& id : idx.at("recordings")) {
        out.push_back(io::read_json(meta_path(id.get<std::string>())).get<RecordingMeta>());
    }
    return out;
}

// ---------------------------------------------------------------- fetch

FetchResult fetch_species_recordings(RecordingSource& source, const SpeciesQuery& query, const fs::path& root,
                                     const FetchOptions& options) {
    FetchResult result;
    if (options.limit && *options.limit == 0) return result;
    if (query.species_code.empty()) throw UsageError("species code is required");

    MetadataStore store(root, query.species_code);
    std::set<std::string> seen;
    std::vector<SourceRecord> records;
    for (const auto& raw : source.list(query)) {
        auto rec = parse_source_record(raw);
        if (!rec) {
            spdlog::warn("skipping malformed metadata record: {}", raw.dump().substr(0, 200));
            ++result.skipped_malformed;
            continue;
        }
        if (!seen.insert(rec->id).second) continue;
        records.push_back(std::move(*rec));
        if (options.limit && records.size() >= *options.limit) break;
    }

    std::vector<std::string> ids;
    for (const auto& rec : records) {
        RecordingMeta meta;
        meta.recording_id = rec.id;
        meta.species_code = query.species_code;
        meta.genus = rec.genus.empty() ? query.genus : rec.genus;
        meta.species = rec.species.empty() ? query.species : rec.species;
        meta.common_name = rec.common_name.empty() ? query.common_name : rec.common_name;
        meta.type_field = rec.type_field;
        meta.category = categorize_type_field(rec.type_field);
        meta.audio_path = "raw/" + rec.id + rec.extension;
        meta.extra_species = rec.also;

        const auto dest = store.species_dir() / meta.audio_path;
        if (fs::exists(dest)) {
            ++result.skipped_cached;
        } else {
            std::string last_error;
            bool ok = false;
            for (int attempt = 0; attempt < std::max(1, options.max_attempts) && !ok; ++attempt) {
                try {
                    source.download(rec, dest);
                    ok = true;
                } catch (const TransientFetchError& e) {
                    last_error = e.what();
                }
            }
            if (!ok) {
                spdlog::warn("download failed for {}: {}", rec.id, last_error);
                result.failures.push_back({rec.id, last_error});
                continue;
            }
            ++result.downloaded;
        }
        store.put(meta);
        ids.push_back(meta.recording_id);
        result.recordings.push_back(std::move(meta));
    }
    store.write_index(query, ids);
    return result;
}

}  // namespace birduod::ingest
