#include "birduod/review/server.hpp"

#include <cstdlib>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "birduod/error.hpp"
#include "birduod/ingest/audio.hpp"
#include "birduod/io.hpp"
#include "birduod/preprocess/clip_store.hpp"
#include "birduod/preprocess/image.hpp"

namespace birduod::review {

namespace fs = std::filesystem;
using nlohmann::json;

ClipCatalog::ClipCatalog(const SpeciesLayout& layout) : species_dir_(layout.dir()) {
    clips_ = preprocess::load_clip_store({layout.clips_dir()});
    for (size_t i = 0; i < clips_.size(); ++i) index_.emplace(clips_[i].clip_id, i);
}

const preprocess::Clip* ClipCatalog::find(const std::string& clip_id) const {
    auto it = index_.find(clip_id);
    return it == index_.end() ? nullptr : &clips_[it->second];
}

std::string ClipCatalog::spectrogram_png(const preprocess::Clip& clip) const {
    return preprocess::spectrogram_png(clip.mel);
}

std::optional<std::string> ClipCatalog::segment_wav(const preprocess::Clip& clip, std::string& reason) const {
    const fs::path audio = species_dir_ / clip.audio_path;
    if (!fs::exists(audio)) {
        reason = "source audio missing: " + clip.audio_path;
        return std::nullopt;
    }
    ingest::Waveform w;
    try {
        w = ingest::decode_audio(audio);
    } catch (const std::exception& e) {
        reason = std::string("source audio unreadable: ") + e.what();
        return std::nullopt;
    }
    const auto begin = static_cast<size_t>(std::clamp<int64_t>(clip.start_sample, 0, static_cast<int64_t>(w.samples.size())));
    const auto end = static_cast<size_t>(std::clamp<int64_t>(clip.end_sample, static_cast<int64_t>(begin),
                                                             static_cast<int64_t>(w.samples.size())));
    return ingest::encode_wav_pcm16(std::span<const float>(w.samples).subspan(begin, end - begin), w.sample_rate);
}

namespace {

json clip_descriptor(const preprocess::Clip& c) {
    json j{{"clip_id", c.clip_id},
           {"recording_id", c.recording_id},
           {"segment_index", c.segment_index},
           {"category", ingest::to_string(c.category)},
           {"start_sample", c.start_sample},
           {"end_sample", c.end_sample},
           {"spectrogram_url", "/api/clips/" + c.clip_id + "/spectrogram.png"},
           {"audio_url", "/api/clips/" + c.clip_id + "/segment.wav"}};
    j["sinr_db"] = std::isfinite(c.sinr_db) ? json(c.sinr_db) : json(nullptr);
    return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

json next_payload(const ReviewSession& s, const ClipCatalog& clips) {
    json j{{"session_id", s.session_id}, {"cursor", s.cursor}, {"total", s.sample_order.size()}, {"tallies", s.tallies()}};
    if (s.complete()) {
        j["status"] = "complete";
        return j;
    }
    j["status"] = "pending";
    const auto& id = s.sample_order[s.cursor];
    if (const auto* c = clips.find(id)) {
        j["clip"] = clip_descriptor(*c);
    } else {
        j["clip"] = {{"clip_id", id}};
    }
    return j;
}

json report_payload(const ReviewSession& s) {
    json j{{"session_id", s.session_id},
           {"class", to_string(s.review_class)},
           {"tallies", s.tallies()},
           {"reviewed", s.verdicts.size()},
           {"total", s.sample_order.size()}};
    try {
        j["estimate"] = s.estimate();
    } catch (const UsageError&) {
        j["estimate"] = nullptr;
    }
    return j;
}

}  // namespace

struct ReviewServer::Impl {
    SpeciesLayout layout;
    ServerOptions options;
    SessionStore store;
    ClipCatalog clips;
    httplib::Server http;
    int port = 0;

    Impl(SpeciesLayout l, ServerOptions o)
        : layout(std::move(l)), options(std::move(o)), store(layout), clips(layout) {
        routes();
    }

    void routes() {
        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const UsageError& e) {
                send_error(res, 400, e.what());
            } catch (const DataError& e) {
                send_error(res, 404, e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        });

        http.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "request body must be a JSON object");
            const auto species = body.value("species_code", layout.species_code);
            if (species != layout.species_code) {
                return send_error(res, 404, "this service serves species " + layout.species_code);
            }
            if (!body.contains("run_id")) return send_error(res, 400, "run_id is required");
            const auto cls = review_class_from_string(body.value("class", std::string("outlier_class")));
            const auto s = store.create(body.at("run_id").get<std::string>(), cls, body.value("seed", uint64_t{0}),
                                        body.value("max_n", options.max_n));
            send_json(res, 200,
                      {{"session_id", s.session_id},
                       {"species_code", s.species_code},
                       {"run_id", s.run_id},
                       {"class", to_string(s.review_class)},
                       {"total", s.sample_order.size()},
                       {"cursor", s.cursor}});
        });

        http.Get(R"(/api/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto s = store.get(req.matches[1]);
            if (!s) return send_error(res, 404, "unknown session");
            send_json(res, 200, next_payload(*s, clips));
        });

        http.Post(R"(/api/sessions/([^/]+)/verdicts)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!store.get(id)) return send_error(res, 404, "unknown session");
            const json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.contains("clip_id") || !body.contains("verdict")) {
                return send_error(res, 400, "body needs clip_id and verdict");
            }
            evaluate::ReviewVerdict v;
            v.clip_id = body.at("clip_id").get<std::string>();
            v.verdict = evaluate::verdict_from_string(body.at("verdict").get<std::string>());
            if (body.contains("comment") && body.at("comment").is_string()) v.comment = body.at("comment").get<std::string>();
            v.reviewer = body.value("reviewer", options.reviewer);
            v.timestamp = utc_timestamp();
            const auto r = store.submit(id, v, body.value("override", false));
            switch (r.status) {
                case SubmitStatus::not_sampled: return send_error(res, 404, r.message);
                case SubmitStatus::not_current: return send_error(res, 409, r.message);
                default: break;
            }
            json out = next_payload(*store.get(id), clips);
            out["result"] = r.message;
            send_json(res, 200, out);
        });

        http.Get(R"(/api/sessions/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto s = store.get(req.matches[1]);
            if (!s) return send_error(res, 404, "unknown session");
            send_json(res, 200, report_payload(*s));
        });

        http.Get(R"(/api/clips/([^/]+)/spectrogram\.png)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto* c = clips.find(req.matches[1]);
            if (!c) return send_error(res, 404, "unknown clip");
            res.set_content(clips.spectrogram_png(*c), "image/png");
        });

        http.Get(R"(/api/clips/([^/]+)/segment\.wav)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto* c = clips.find(req.matches[1]);
            if (!c) return send_error(res, 404, "unknown clip");
            std::string reason;
            auto wav = clips.segment_wav(*c, reason);
            if (!wav) return send_error(res, 404, reason);
            res.set_content(std::move(*wav), "audio/wav");
        });

        if (options.static_dir) {
            if (!http.set_mount_point("/", options.static_dir->string())) {
                spdlog::warn("static directory {} not found; serving the API only", options.static_dir->string());
            }
        }
    }
};

ReviewServer::ReviewServer(SpeciesLayout layout, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(layout), std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind() {
    auto& o = impl_->options;
    // No SO_REUSEPORT: binding a busy port must fail.
    impl_->http.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    if (o.port == 0) {
        impl_->port = impl_->http.bind_to_any_port(o.host);
        if (impl_->port < 0) throw DataError("could not bind any port on " + o.host);
    } else {
        if (!impl_->http.bind_to_port(o.host, o.port)) {
            throw DataError(fmt::format("cannot listen on {}:{} (port busy or not permitted)", o.host, o.port));
        }
        impl_->port = o.port;
    }
    return impl_->port;
}

void ReviewServer::serve() { impl_->http.listen_after_bind(); }

void ReviewServer::wait_until_ready() const { impl_->http.wait_until_ready(); }

void ReviewServer::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

int run_terminal_review(SessionStore& store, const ClipCatalog& clips, const std::string& session_id,
                        std::istream& in, std::ostream& out, const std::string& reviewer, const fs::path& play_path,
                        const std::string& player) {
    int recorded = 0;
    auto play = [&](const preprocess::Clip& c) {
        std::string reason;
        auto wav = clips.segment_wav(c, reason);
        if (!wav) {
            out << "  (" << reason << ")\n";
            return;
        }
        io::write_text_atomic(play_path, *wav);
        if (!player.empty()) {
            const std::string cmd = player + " '" + play_path.string() + "' >/dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) out << "  (player exited with an error)\n";
        } else {
            out << "  audio: " << play_path.string() << "\n";
        }
    };

    while (true) {
        const auto s = store.get(session_id);
        if (!s) throw DataError("unknown session '" + session_id + "'");
        if (s->complete()) {
            const auto t = s->tallies();
            out << fmt::format("session complete: {} outlier, {} inlier, {} indeterminate\n", t.at("outlier"),
                               t.at("inlier"), t.at("indeterminate"));
            break;
        }
        const auto& id = s->sample_order[s->cursor];
        const auto* c = clips.find(id);
        out << fmt::format("[{}/{}] {}", s->cursor + 1, s->sample_order.size(), id);
        if (c) out << fmt::format("  ({}, {:.2f}s)", ingest::to_string(c->category),
                                  static_cast<double>(c->end_sample - c->start_sample) / ingest::kSampleRate);
        out << "\n";
        if (c) play(*c);
        out << "verdict [o]utlier / [i]nlier / [u]ndetermined, optional comment; anything else replays: " << std::flush;

        std::string line;
        if (!std::getline(in, line)) break;
        const auto space = line.find(' ');
        const std::string key = line.substr(0, space);
        std::optional<evaluate::Verdict> verdict;
        if (key == "o") verdict = evaluate::Verdict::outlier;
        if (key == "i") verdict = evaluate::Verdict::inlier;
        if (key == "u") verdict = evaluate::Verdict::indeterminate;
        if (!verdict) continue;  // replay on the next iteration

        evaluate::ReviewVerdict v;
        v.clip_id = id;
        v.verdict = *verdict;
        if (space != std::string::npos) {
            const auto from = line.find_first_not_of(" \t", space);
            if (from != std::string::npos) v.comment = line.substr(from, line.find_last_not_of(" \t\r") - from + 1);
        }
        v.reviewer = reviewer;
        v.timestamp = utc_timestamp();
        if (store.submit(session_id, v, false).status == SubmitStatus::accepted) ++recorded;
    }
    return recorded;
}

}  // namespace birduod::review
