#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "birduod/ingest/recording.hpp"

namespace birduod::ingest {

/// Decodes any container/codec FFmpeg understands (MP3 and WAV in practice),
/// resamples to 22050 Hz, and averages channels to mono. Samples are clamped
/// to [-1, 1]. Throws DataError when the file cannot be decoded.
Waveform decode_audio(const std::filesystem::path& audio_path);

/// 16-bit PCM mono RIFF/WAVE bytes.
std::string encode_wav_pcm16(std::span<const float> samples, int sample_rate);

void write_wav_pcm16(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);

}  // namespace birduod::ingest
