#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "birduod/preprocess/mel.hpp"

namespace birduod::preprocess {

/// 8-bit grayscale PNG bytes; `pixels` is row-major, top row first.
std::string encode_png_gray(int width, int height, const std::vector<uint8_t>& pixels);

/// Spectrogram image with each cell drawn as a scale x scale block,
/// low frequencies at the bottom. Intensity maps [0, max(db_max, 1)] to [0, 255].
std::string spectrogram_png(const Spectrogram& mel, int scale = 8, double db_max = 80.0);

void write_spectrogram_png(const std::filesystem::path& path, const Spectrogram& mel, int scale = 8);

}  // namespace birduod::preprocess
