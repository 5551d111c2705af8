#include "birduod/preprocess/config.hpp"

#include "birduod/error.hpp"

namespace birduod::preprocess {

void PreprocessConfig::validate() const {
    if (clip_frames < 1) throw UsageError("clip_frames must be >= 1");
    if (mel_bands < 1) throw UsageError("mel_bands must be >= 1");
    if (rel_sinr_margin_db < 0) throw UsageError("rel_sinr_margin_db must be >= 0");
    if (fft_size < 16 || (fft_size & (fft_size - 1)) != 0) throw UsageError("fft_size must be a power of two >= 16");
    if (hop_samples < 1) throw UsageError("hop_samples must be >= 1");
    if (!(fmin_hz >= 0 && fmax_hz > fmin_hz)) throw UsageError("require 0 <= fmin_hz < fmax_hz");
    if (min_silence_ms < 0 || min_segment_ms < 0) throw UsageError("durations must be non-negative");
    if (!(db_range > 0)) throw UsageError("db_range must be positive");
}

void to_json(nlohmann::json& j, const PreprocessConfig& c) {
    j = nlohmann::json{{"silence_floor_db", c.silence_floor_db},
                       {"min_silence_ms", c.min_silence_ms},
                       {"min_segment_ms", c.min_segment_ms},
                       {"abs_min_sinr_db", c.abs_min_sinr_db},
                       {"rel_sinr_margin_db", c.rel_sinr_margin_db},
                       {"clip_frames", c.clip_frames},
                       {"fft_size", c.fft_size},
                       {"hop_samples", c.hop_samples},
                       {"mel_bands", c.mel_bands},
                       {"fmin_hz", c.fmin_hz},
                       {"fmax_hz", c.fmax_hz},
                       {"db_range", c.db_range}};
}

void from_json(const nlohmann::json& j, PreprocessConfig& c) {
    const PreprocessConfig d;
    c.silence_floor_db = j.value("silence_floor_db", d.silence_floor_db);
    c.min_silence_ms = j.value("min_silence_ms", d.min_silence_ms);
    c.min_segment_ms = j.value("min_segment_ms", d.min_segment_ms);
    c.abs_min_sinr_db = j.value("abs_min_sinr_db", d.abs_min_sinr_db);
    c.rel_sinr_margin_db = j.value("rel_sinr_margin_db", d.rel_sinr_margin_db);
    c.clip_frames = j.value("clip_frames", d.clip_frames);
    c.fft_size = j.value("fft_size", d.fft_size);
    c.hop_samples = j.value("hop_samples", d.hop_samples);
    c.mel_bands = j.value("mel_bands", d.mel_bands);
    c.fmin_hz = j.value("fmin_hz", d.fmin_hz);
    c.fmax_hz = j.value("fmax_hz", d.fmax_hz);
    c.db_range = j.value("db_range", d.db_range);
}

}  // namespace birduod::preprocess
