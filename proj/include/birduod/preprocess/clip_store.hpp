#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "birduod/preprocess/clip.hpp"

namespace birduod::preprocess {

/// `clips.bin` holds consecutive little-endian float32 matrices (row-major,
/// bands x frames); `clips.index.json` maps clip_id to its byte offset and
/// provenance.
struct ClipStorePaths {
    std::filesystem::path dir;
    std::filesystem::path bin() const { return dir / "clips.bin"; }
    std::filesystem::path index() const { return dir / "clips.index.json"; }
};

void write_clip_store(const ClipStorePaths& paths, const std::vector<Clip>& clips, const std::string& species_code);

/// Clips in on-disk order.
std::vector<Clip> load_clip_store(const ClipStorePaths& paths);

}  // namespace birduod::preprocess
