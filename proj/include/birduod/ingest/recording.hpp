#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace birduod::ingest {

// Coarse sound category derived from the repository's free-form type field.
enum class Category { song, call, both, other };

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

/// Case-insensitive keyword search: "song" only -> song, "call" only -> call,
/// both keywords -> both, neither -> other.
Category categorize_type_field(std::string_view type_field);

struct RecordingMeta {
    std::string recording_id;
    std::string species_code;
    std::string genus;
    std::string species;
    std::string common_name;
    std::string type_field;
    Category category = Category::other;
    // Relative to the species directory, e.g. "raw/12345.mp3".
    std::string audio_path;
    std::optional<std::vector<std::string>> extra_species;

    bool operator==(const RecordingMeta&) const = default;
};

void to_json(nlohmann::json& j, const RecordingMeta& m);
void from_json(const nlohmann::json& j, RecordingMeta& m);

inline constexpr int kSampleRate = 22050;

struct Waveform {
    std::vector<float> samples;
    int sample_rate = kSampleRate;

    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

}  // namespace birduod::ingest
