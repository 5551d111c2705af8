#include "birduod/preprocess/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "birduod/error.hpp"

namespace birduod::preprocess {

SilenceSplit detect_silence(const ingest::Waveform& w, const PreprocessConfig& cfg, const std::string& recording_id) {
    if (w.samples.empty()) throw UsageError("detect_silence: empty waveform");
    const auto n = static_cast<int64_t>(w.samples.size());
    const int64_t hop = cfg.hop_samples;
    const int64_t n_frames = (n + hop - 1) / hop;

    float peak = 0.0f;
    for (float s : w.samples) peak = std::max(peak, std::abs(s));
    SilenceSplit out;
    if (peak == 0.0f) return out;

    const double threshold = static_cast<double>(peak) * peak * std::pow(10.0, cfg.silence_floor_db / 10.0);
    std::vector<char> loud(static_cast<size_t>(n_frames));
    for (int64_t f = 0; f < n_frames; ++f) {
        const int64_t a = f * hop;
        const int64_t b = std::min(n, a + hop);
        double acc = 0.0;
        for (int64_t i = a; i < b; ++i) acc += static_cast<double>(w.samples[i]) * w.samples[i];
        loud[f] = (acc / static_cast<double>(b - a)) >= threshold;
    }

    // Loud runs as [first_frame, last_frame + 1).
    std::vector<std::pair<int64_t, int64_t>> runs;
    for (int64_t f = 0; f < n_frames;) {
        if (!loud[f]) {
            ++f;
            continue;
        }
        int64_t g = f;
        while (g < n_frames && loud[g]) ++g;
        runs.emplace_back(f, g);
        f = g;
    }

    const double min_gap = cfg.min_silence_ms * w.sample_rate / 1000.0;
    std::vector<std::pair<int64_t, int64_t>> merged;
    for (const auto& r : runs) {
        if (!merged.empty() && static_cast<double>((r.first - merged.back().second) * hop) < min_gap) {
            merged.back().second = r.second;
        } else {
            merged.push_back(r);
        }
    }

    const double min_len = cfg.min_segment_ms * w.sample_rate / 1000.0;
    std::vector<char> excluded(static_cast<size_t>(n_frames), 0);
    for (const auto& [f0, f1] : merged) {
        Segment s;
        s.recording_id = recording_id;
        s.start_sample = f0 * hop;
        s.end_sample = std::min(n, f1 * hop);
        for (int64_t f = f0; f < f1; ++f) excluded[f] = 1;
        if (static_cast<double>(s.length()) >= min_len) out.segments.push_back(std::move(s));
    }

    double acc = 0.0;
    int64_t count = 0;
    for (int64_t f = 0; f < n_frames; ++f) {
        if (excluded[f]) continue;
        const int64_t b = std::min(n, (f + 1) * hop);
        for (int64_t i = f * hop; i < b; ++i) acc += static_cast<double>(w.samples[i]) * w.samples[i];
        count += b - f * hop;
    }
    out.silence_baseline_power = count > 0 ? acc / static_cast<double>(count) : 0.0;
    return out;
}

double compute_sinr(const ingest::Waveform& w, const Segment& seg, double silence_baseline_power) {
    if (seg.start_sample < 0 || seg.end_sample > static_cast<int64_t>(w.samples.size()) ||
        seg.start_sample >= seg.end_sample) {
        throw UsageError("compute_sinr: segment outside waveform");
    }
    if (silence_baseline_power <= 0.0) return std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (int64_t i = seg.start_sample; i < seg.end_sample; ++i) {
        acc += static_cast<double>(w.samples[i]) * w.samples[i];
    }
    const double power = acc / static_cast<double>(seg.length());
    return 10.0 * std::log10(power / silence_baseline_power);
}

double quantile_weibull(std::vector<double> values, double q) {
    if (values.empty()) throw UsageError("quantile of empty set");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    const double rank = std::clamp(q * (n + 1.0), 1.0, n);  // 1-based
    const auto lo = static_cast<size_t>(std::floor(rank)) - 1;
    const double frac = rank - std::floor(rank);
    if (lo + 1 >= values.size() || frac == 0.0) return values[lo];
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<Segment> screen_segments(const std::vector<Segment>& segments, const PreprocessConfig& cfg) {
    if (segments.empty()) return {};
    std::vector<double> sinrs;
    sinrs.reserve(segments.size());
    for (const auto& s : segments) sinrs.push_back(s.sinr_db);
    const double p75 = quantile_weibull(sinrs, 0.75);
    // inf - margin stays inf, so all-infinite recordings keep everything.
    const double relative_floor = p75 - cfg.rel_sinr_margin_db;
    std::vector<Segment> kept;
    for (const auto& s : segments) {
        if (s.sinr_db >= cfg.abs_min_sinr_db && s.sinr_db >= relative_floor) kept.push_back(s);
    }
    return kept;
}

}  // namespace birduod::preprocess
