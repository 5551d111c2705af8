#include "birduod/preprocess/clip_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "birduod/error.hpp"
#include "birduod/io.hpp"

namespace birduod::preprocess {

static_assert(std::endian::native == std::endian::little, "clip store assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

void write_clip_store(const ClipStorePaths& paths, const std::vector<Clip>& clips, const std::string& species_code) {
    std::string bin;
    json entries = json::object();
    json order = json::array();
    for (const auto& c : clips) {
        if (entries.contains(c.clip_id)) throw DataError("duplicate clip id " + c.clip_id);
        const auto offset = bin.size();
        const auto bytes = static_cast<size_t>(c.mel.size()) * sizeof(float);
        bin.resize(offset + bytes);
        std::memcpy(bin.data() + offset, c.mel.data(), bytes);
        json sinr = std::isfinite(c.sinr_db) ? json(c.sinr_db) : json(nullptr);
        entries[c.clip_id] = json{{"offset", offset},
                                  {"bands", c.mel.rows()},
                                  {"frames", c.mel.cols()},
                                  {"recording_id", c.recording_id},
                                  {"species_code", species_code},
                                  {"audio_path", c.audio_path},
                                  {"segment_index", c.segment_index},
                                  {"start_sample", c.start_sample},
                                  {"end_sample", c.end_sample},
                                  {"sinr_db", sinr},
                                  {"category", ingest::to_string(c.category)},
                                  {"padded_frames", c.padded_frames}};
        order.push_back(c.clip_id);
    }
    json index{{"species_code", species_code}, {"count", clips.size()}, {"order", order}, {"clips", entries}};
    io::write_text_if_changed(paths.bin(), bin);
    io::write_text_if_changed(paths.index(), io::dump_json(index));
}

std::vector<Clip> load_clip_store(const ClipStorePaths& paths) {
    if (!fs::exists(paths.index()) || !fs::exists(paths.bin())) {
        throw DataError("no clip store in " + paths.dir.string() + "; run preprocess");
    }
    const auto index = io::read_json(paths.index());
    const auto bin = io::read_text(paths.bin());
    std::vector<Clip> clips;
    for (const auto& id_json : index.at("order")) {
        const auto id = id_json.get<std::string>();
        const auto& e = index.at("clips").at(id);
        Clip c;
        c.clip_id = id;
        c.recording_id = e.at("recording_id").get<std::string>();
        c.audio_path = e.value("audio_path", "");
        c.segment_index = e.at("segment_index").get<int>();
        c.start_sample = e.at("start_sample").get<int64_t>();
        c.end_sample = e.at("end_sample").get<int64_t>();
        c.sinr_db = e.at("sinr_db").is_null() ? std::numeric_limits<double>::infinity() : e.at("sinr_db").get<double>();
        c.category = ingest::category_from_string(e.at("category").get<std::string>());
        c.padded_frames = e.at("padded_frames").get<int>();
        const auto rows = e.at("bands").get<Eigen::Index>();
        const auto cols = e.at("frames").get<Eigen::Index>();
        const auto offset = e.at("offset").get<size_t>();
        const auto bytes = static_cast<size_t>(rows * cols) * sizeof(float);
        if (offset + bytes > bin.size()) throw DataError("clip store truncated at " + id);
        c.mel.resize(rows, cols);
        std::memcpy(c.mel.data(), bin.data() + offset, bytes);
        clips.push_back(std::move(c));
    }
    return clips;
}

}  // namespace birduod::preprocess
