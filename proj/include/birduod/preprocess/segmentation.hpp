#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "birduod/ingest/recording.hpp"
#include "birduod/preprocess/config.hpp"

namespace birduod::preprocess {

struct Segment {
    std::string recording_id;
    int64_t start_sample = 0;  // inclusive
    int64_t end_sample = 0;    // exclusive
    double sinr_db = 0.0;

    int64_t length() const { return end_sample - start_sample; }
};

struct SilenceSplit {
    std::vector<Segment> segments;
    // Mean linear power over every sample classified as silence (0 if none).
    double silence_baseline_power = 0.0;
};

/// Frame-level (hop-sized frames) silence split. Loud runs separated by gaps
/// shorter than min_silence_ms are joined; runs shorter than min_segment_ms
/// are discarded and excluded from the silence baseline.
SilenceSplit detect_silence(const ingest::Waveform& w, const PreprocessConfig& cfg,
                            const std::string& recording_id = {});

/// 10*log10(segment power / baseline); +inf when the baseline is zero.
double compute_sinr(const ingest::Waveform& w, const Segment& seg, double silence_baseline_power);

/// q-th quantile (q in [0,1]) interpolated at 1-based rank q*(n+1), clamped to
/// the sample range.
double quantile_weibull(std::vector<double> values, double q);

/// Keeps segments at or above both the absolute SINR floor and the
/// recording-relative floor (75th percentile minus the margin).
std::vector<Segment> screen_segments(const std::vector<Segment>& segments, const PreprocessConfig& cfg);

}  // namespace birduod::preprocess
