#include "birduod/preprocess/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "birduod/error.hpp"

namespace birduod::preprocess {

namespace {

constexpr double kFsp = 200.0 / 3.0;
constexpr double kMinLogHz = 1000.0;
constexpr double kMinLogMel = kMinLogHz / kFsp;
const double kLogStep = std::log(6.4) / 27.0;

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

double hz_to_mel(double hz) {
    if (hz < kMinLogHz) return hz / kFsp;
    return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
    if (mel < kMinLogMel) return mel * kFsp;
    return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

MelFilterbank::MelFilterbank(int sample_rate, int fft_size, int n_mels, double fmin_hz, double fmax_hz) {
    const int n_bins = fft_size / 2 + 1;
    weights_ = Eigen::MatrixXd::Zero(n_mels, n_bins);
    centers_hz_.resize(n_mels);

    const double mel_lo = hz_to_mel(fmin_hz);
    const double mel_hi = hz_to_mel(fmax_hz);
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    for (size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
    }
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        centers_hz_[m] = mid;
        const double norm = 2.0 / (hi - lo);
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / fft_size;
            const double up = (f - lo) / (mid - lo);
            const double down = (hi - f) / (hi - mid);
            weights_(m, k) = std::max(0.0, std::min(up, down)) * norm;
        }
    }
}

int MelFilterbank::band_of(double hz) const {
    Eigen::Index best = 0;
    (centers_hz_.array() - hz).abs().minCoeff(&best);
    return static_cast<int>(best);
}

struct MelAnalyzer::Plan {
    double* in = nullptr;
    fftw_complex* out = nullptr;
    fftw_plan plan = nullptr;
};

MelAnalyzer::MelAnalyzer(const PreprocessConfig& cfg, int sample_rate)
    : cfg_(cfg), bank_(sample_rate, cfg.fft_size, cfg.mel_bands, cfg.fmin_hz, cfg.fmax_hz) {
    cfg_.validate();
    const int n = cfg_.fft_size;
    window_.resize(n);
    for (int i = 0; i < n; ++i) window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);  // periodic Hann
    plan_ = std::make_unique<Plan>();
    std::lock_guard lock(planner_mutex());
    plan_->in = fftw_alloc_real(static_cast<size_t>(n));
    plan_->out = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    plan_->plan = fftw_plan_dft_r2c_1d(n, plan_->in, plan_->out, FFTW_ESTIMATE);
}

MelAnalyzer::~MelAnalyzer() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_->plan);
    fftw_free(plan_->in);
    fftw_free(plan_->out);
}

Eigen::MatrixXd MelAnalyzer::mel_power(std::span<const float> samples) {
    const int n = cfg_.fft_size;
    const int hop = cfg_.hop_samples;
    const auto len = static_cast<int64_t>(samples.size());
    const int64_t frames = len <= n ? 1 : 1 + (len - n) / hop;
    const int n_bins = n / 2 + 1;

    Eigen::MatrixXd power(n_bins, frames);
    for (int64_t t = 0; t < frames; ++t) {
        const int64_t start = t * hop;
        for (int i = 0; i < n; ++i) {
            const int64_t idx = start + i;
            plan_->in[i] = idx < len ? samples[static_cast<size_t>(idx)] * window_[i] : 0.0;
        }
        fftw_execute(plan_->plan);
        for (int k = 0; k < n_bins; ++k) {
            power(k, t) = plan_->out[k][0] * plan_->out[k][0] + plan_->out[k][1] * plan_->out[k][1];
        }
    }
    return bank_.weights() * power;
}

Spectrogram MelAnalyzer::mel_db(std::span<const float> samples) {
    return power_to_shifted_db(mel_power(samples), cfg_.db_range);
}

Spectrogram power_to_shifted_db(const Eigen::MatrixXd& power, double db_range) {
    constexpr double kAmin = 1e-10;
    Eigen::MatrixXd db = 10.0 * power.array().max(kAmin).log10();
    const double floor = std::max(db.maxCoeff() - db_range, 10.0 * std::log10(kAmin));
    db = db.array().max(floor) - floor;
    return db.cast<float>();
}

Spectrogram mel_spectrogram(const ingest::Waveform& w, const Segment& seg, const PreprocessConfig& cfg) {
    if (seg.start_sample < 0 || seg.end_sample > static_cast<int64_t>(w.samples.size()) ||
        seg.start_sample >= seg.end_sample) {
        throw UsageError("mel_spectrogram: segment outside waveform");
    }
    MelAnalyzer analyzer(cfg, w.sample_rate);
    return analyzer.mel_db(std::span<const float>(w.samples).subspan(static_cast<size_t>(seg.start_sample),
                                                                     static_cast<size_t>(seg.length())));
}

}  // namespace birduod::preprocess
