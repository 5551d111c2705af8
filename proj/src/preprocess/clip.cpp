#include "birduod/preprocess/clip.hpp"

#include <cmath>

#include "birduod/error.hpp"

namespace birduod::preprocess {

double center_of_energy(const Spectrogram& spec) {
    const auto frames = spec.cols();
    std::vector<double> energy(static_cast<size_t>(frames), 0.0);
    for (Eigen::Index t = 0; t < frames; ++t) {
        double acc = 0.0;
        for (Eigen::Index b = 0; b < spec.rows(); ++b) acc += floor_relative_power(spec(b, t));
        energy[t] = acc;
    }
    // Accumulate relative to the first energetic frame so a whole-frame shift
    // of the input shifts the result by exactly that many frames.
    Eigen::Index first = 0;
    while (first < frames && energy[first] <= 0.0) ++first;
    if (first == frames) return static_cast<double>(frames) / 2.0;
    double num = 0.0, den = 0.0;
    for (Eigen::Index t = first; t < frames; ++t) {
        num += static_cast<double>(t - first) * energy[t];
        den += energy[t];
    }
    return static_cast<double>(first) + num / den;
}

ClipWindow extract_clip(const Spectrogram& spec, const PreprocessConfig& cfg) {
    if (spec.rows() != cfg.mel_bands) throw UsageError("extract_clip: expected " + std::to_string(cfg.mel_bands) + " bands");
    if (spec.cols() < 1) throw UsageError("extract_clip: empty spectrogram");
    const int width = cfg.clip_frames;
    const double c = center_of_energy(spec);
    const auto start = static_cast<Eigen::Index>(std::floor(c - (width - 1) / 2.0 + 0.5));
    const float pad = spec.minCoeff();

    ClipWindow out;
    out.mel = Spectrogram::Constant(spec.rows(), width, pad);
    for (int i = 0; i < width; ++i) {
        const Eigen::Index t = start + i;
        if (t < 0 || t >= spec.cols()) {
            ++out.padded_frames;
        } else {
            out.mel.col(i) = spec.col(t);
        }
    }
    return out;
}

std::vector<Clip> clips_from_recording(const ingest::RecordingMeta& meta, const ingest::Waveform& w,
                                       const PreprocessConfig& cfg) {
    std::vector<Clip> clips;
    if (w.samples.empty()) return clips;
    auto split = detect_silence(w, cfg, meta.recording_id);
    for (auto& seg : split.segments) seg.sinr_db = compute_sinr(w, seg, split.silence_baseline_power);

    // Index within the recording's full segment list, so ids stay stable when
    // screening thresholds change.
    std::vector<int> kept_index;
    const auto kept = screen_segments(split.segments, cfg);
    for (const auto& k : kept) {
        for (size_t i = 0; i < split.segments.size(); ++i) {
            if (split.segments[i].start_sample == k.start_sample) {
                kept_index.push_back(static_cast<int>(i));
                break;
            }
        }
    }

    MelAnalyzer analyzer(cfg, w.sample_rate);
    for (size_t i = 0; i < kept.size(); ++i) {
        const auto& seg = kept[i];
        const auto spec = analyzer.mel_db(std::span<const float>(w.samples).subspan(
            static_cast<size_t>(seg.start_sample), static_cast<size_t>(seg.length())));
        auto window = extract_clip(spec, cfg);
        Clip clip;
        clip.recording_id = meta.recording_id;
        clip.segment_index = kept_index[i];
        clip.clip_id = meta.recording_id + "_" + std::to_string(clip.segment_index);
        clip.start_sample = seg.start_sample;
        clip.end_sample = seg.end_sample;
        clip.sinr_db = seg.sinr_db;
        clip.category = meta.category;
        clip.padded_frames = window.padded_frames;
        clip.audio_path = meta.audio_path;
        clip.mel = std::move(window.mel);
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace birduod::preprocess
