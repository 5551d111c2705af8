#pragma once

#include <filesystem>
#include <span>

namespace birduod::testing {

// Mono MP3 via libmp3lame, for decoder tests.
void write_mp3(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);

}  // namespace birduod::testing
