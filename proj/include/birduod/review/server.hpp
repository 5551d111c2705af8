#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>

#include "birduod/preprocess/clip.hpp"
#include "birduod/review/session.hpp"

namespace birduod::review {

/// Clip lookups for asset rendering.
class ClipCatalog {
public:
    explicit ClipCatalog(const SpeciesLayout& layout);

    const preprocess::Clip* find(const std::string& clip_id) const;
    std::string spectrogram_png(const preprocess::Clip& clip) const;
    /// Whole source segment as 16-bit WAV; nullopt with `reason` set when the
    /// source audio is unavailable.
    std::optional<std::string> segment_wav(const preprocess::Clip& clip, std::string& reason) const;

private:
    std::filesystem::path species_dir_;
    std::vector<preprocess::Clip> clips_;
    std::unordered_map<std::string, size_t> index_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> static_dir;
    std::string reviewer = "reviewer";
    size_t max_n = 96;  // sample size when a create request omits max_n
};

class ReviewServer {
public:
    ReviewServer(SpeciesLayout layout, ServerOptions options);
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds the socket; throws DataError when the port is unavailable.
    /// Returns the bound port.
    int bind();
    /// Serves until stop(); call bind() first.
    void serve();
    /// Blocks until serve() is accepting connections.
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Console review loop: shows each clip, reads o / i / u (optionally
/// followed by a comment) and records the verdict. Any other input replays
/// the audio by rewriting the segment WAV to `play_path` and running
/// `player` on it when set. Returns the number of verdicts recorded.
int run_terminal_review(SessionStore& store, const ClipCatalog& clips, const std::string& session_id,
                        std::istream& in, std::ostream& out, const std::string& reviewer,
                        const std::filesystem::path& play_path, const std::string& player = {});

}  // namespace birduod::review
