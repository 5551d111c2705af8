#include "birduod/ingest/recording.hpp"

#include <algorithm>
#include <cctype>

#include "birduod/error.hpp"

namespace birduod::ingest {

std::string_view to_string(Category c) {
    switch (c) {
        case Category::song: return "song";
        case Category::call: return "call";
        case Category::both: return "both";
        case Category::other: return "other";
    }
    return "other";
}

Category category_from_string(std::string_view s) {
    if (s == "song") return Category::song;
    if (s == "call") return Category::call;
    if (s == "both") return Category::both;
    if (s == "other") return Category::other;
    throw DataError("unknown category '" + std::string(s) + "'");
}

Category categorize_type_field(std::string_view type_field) {
    std::string lower(type_field);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    const bool song = lower.find("song") != std::string::npos;
    const bool call = lower.find("call") != std::string::npos;
    if (song && call) return Category::both;
    if (song) return Category::song;
    if (call) return Category::call;
    return Category::other;
}

void to_json(nlohmann::json& j, const RecordingMeta& m) {
    j = nlohmann::json{{"recording_id", m.recording_id},
                       {"species_code", m.species_code},
                       {"genus", m.genus},
                       {"species", m.species},
                       {"common_name", m.common_name},
                       {"type_field", m.type_field},
                       {"category", to_string(m.category)},
                       {"audio_path", m.audio_path}};
    if (m.extra_species) {
        j["extra_species"] = *m.extra_species;
    } else {
        j["extra_species"] = nullptr;
    }
}

void from_json(const nlohmann::json& j, RecordingMeta& m) {
    j.at("recording_id").get_to(m.recording_id);
    j.at("species_code").get_to(m.species_code);
    j.at("genus").get_to(m.genus);
    j.at("species").get_to(m.species);
    m.common_name = j.value("common_name", "");
    m.type_field = j.value("type_field", "");
    m.category = categorize_type_field(m.type_field);
    j.at("audio_path").get_to(m.audio_path);
    if (auto it = j.find("extra_species"); it != j.end() && !it->is_null()) {
        m.extra_species = it->get<std::vector<std::string>>();
    } else {
        m.extra_species.reset();
    }
}

}  // namespace birduod::ingest
