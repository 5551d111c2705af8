#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace birduod::io {

std::string read_text(const std::filesystem::path& path);

/// Writes via a temporary sibling, fsyncs, then renames over `path`, so a
/// reader never observes a partially written file.
void write_text_atomic(const std::filesystem::path& path, std::string_view contents);

/// Like write_text_atomic but leaves the file untouched when the contents
/// already match. Returns true if the file was (re)written.
bool write_text_if_changed(const std::filesystem::path& path, std::string_view contents);

nlohmann::json read_json(const std::filesystem::path& path);

// Canonical serialization: sorted keys, two-space indent, trailing newline.
std::string dump_json(const nlohmann::json& j);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace birduod::io
