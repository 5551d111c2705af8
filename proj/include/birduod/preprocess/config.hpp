#pragma once

#include <nlohmann/json.hpp>

namespace birduod::preprocess {

struct PreprocessConfig {
    // Frames quieter than this, relative to the recording's peak amplitude, are silence.
    double silence_floor_db = -48.0;
    double min_silence_ms = 200.0;
    double min_segment_ms = 50.0;
    double abs_min_sinr_db = 5.0;
    // Segments more than this far below the recording's 75th-percentile SINR are dropped.
    double rel_sinr_margin_db = 5.0;
    int clip_frames = 40;
    int fft_size = 1024;
    int hop_samples = 512;
    int mel_bands = 32;
    double fmin_hz = 0.0;
    double fmax_hz = 11025.0;
    // Dynamic range kept below the per-segment peak before shifting to >= 0.
    double db_range = 80.0;

    /// Throws UsageError on inconsistent values.
    void validate() const;
};

void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);

}  // namespace birduod::preprocess
