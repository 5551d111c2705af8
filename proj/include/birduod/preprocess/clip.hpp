#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "birduod/ingest/recording.hpp"
#include "birduod/preprocess/config.hpp"
#include "birduod/preprocess/mel.hpp"
#include "birduod/preprocess/segmentation.hpp"

namespace birduod::preprocess {

inline constexpr int kClipBands = 32;
inline constexpr int kClipFrames = 40;

struct Clip {
    std::string clip_id;
    std::string recording_id;
    int segment_index = 0;
    int64_t start_sample = 0;
    int64_t end_sample = 0;
    double sinr_db = 0.0;
    ingest::Category category = ingest::Category::other;
    int padded_frames = 0;
    // Source audio, relative to the species directory.
    std::string audio_path;
    Spectrogram mel;
};

/// Linear power above the spectrogram floor for a shifted-dB value:
/// 10^(db/10) - 1, so floor cells (db == 0) carry no energy.
inline double floor_relative_power(double shifted_db) { return std::pow(10.0, shifted_db / 10.0) - 1.0; }

/// Energy-weighted mean frame index, or T/2 when the spectrogram carries no
/// energy above its floor.
double center_of_energy(const Spectrogram& spec);

struct ClipWindow {
    Spectrogram mel;
    int padded_frames = 0;
};

/// Cuts a clip_frames-wide window whose middle sits on the spectrogram's
/// center of energy. Frames that fall outside the spectrogram are filled
/// with the spectrogram's minimum value and counted in padded_frames.
ClipWindow extract_clip(const Spectrogram& spec, const PreprocessConfig& cfg);

/// Full chain for one decoded recording: silence split, SINR, screening,
/// mel spectrogram, clip extraction.
std::vector<Clip> clips_from_recording(const ingest::RecordingMeta& meta, const ingest::Waveform& w,
                                       const PreprocessConfig& cfg);

}  // namespace birduod::preprocess
