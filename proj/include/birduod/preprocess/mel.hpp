#pragma once

#include <memory>
#include <span>

#include <Eigen/Dense>

#include "birduod/ingest/recording.hpp"
#include "birduod/preprocess/config.hpp"
#include "birduod/preprocess/segmentation.hpp"

namespace birduod::preprocess {

// Rows are mel bands (row 0 = lowest frequency), columns are time frames.
using Spectrogram = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the Slaney mel scale with area normalization, so a
/// flat power spectrum produces equal output in every band.
class MelFilterbank {
public:
    MelFilterbank(int sample_rate, int fft_size, int n_mels, double fmin_hz, double fmax_hz);

    // n_mels x (fft_size / 2 + 1)
    const Eigen::MatrixXd& weights() const { return weights_; }
    int n_mels() const { return static_cast<int>(weights_.rows()); }
    /// Band whose triangle peaks closest to `hz`.
    int band_of(double hz) const;

private:
    Eigen::MatrixXd weights_;
    Eigen::VectorXd centers_hz_;
};

/// Short-time power spectrum -> mel power. Owns its FFT plan; not thread safe,
/// use one instance per thread.
class MelAnalyzer {
public:
    MelAnalyzer(const PreprocessConfig& cfg, int sample_rate = ingest::kSampleRate);
    ~MelAnalyzer();
    MelAnalyzer(const MelAnalyzer&) = delete;
    MelAnalyzer& operator=(const MelAnalyzer&) = delete;

    /// Linear mel power, n_mels x T with T = 1 + (len - fft) / hop. Inputs
    /// shorter than one window are zero-padded to one window.
    Eigen::MatrixXd mel_power(std::span<const float> samples);

    /// mel_power converted to dB, floored db_range below the peak (never below
    /// -100 dB), and shifted so the floor is 0. A full-scale peak maps to db_range.
    Spectrogram mel_db(std::span<const float> samples);

    const MelFilterbank& filterbank() const { return bank_; }

private:
    PreprocessConfig cfg_;
    MelFilterbank bank_;
    Eigen::VectorXd window_;
    struct Plan;
    std::unique_ptr<Plan> plan_;
};

/// Power -> shifted dB as described for MelAnalyzer::mel_db.
Spectrogram power_to_shifted_db(const Eigen::MatrixXd& power, double db_range);

/// Mel spectrogram (shifted dB) of one segment of a waveform.
Spectrogram mel_spectrogram(const ingest::Waveform& w, const Segment& seg, const PreprocessConfig& cfg);

}  // namespace birduod::preprocess
