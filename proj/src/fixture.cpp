#include "birduod/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "birduod/error.hpp"
#include "birduod/ingest/audio.hpp"
#include "birduod/ingest/recording.hpp"
#include "birduod/io.hpp"

namespace birduod::fixture {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSr = ingest::kSampleRate;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Smooth 10 ms attack and release.
double envelope(size_t i, size_t n) {
    const double ramp = 0.010 * kSr;
    const double x = std::min({1.0, static_cast<double>(i) / ramp, static_cast<double>(n - 1 - i) / ramp});
    return 0.5 - 0.5 * std::cos(std::numbers::pi * std::max(0.0, x));
}

// Sweeps linearly from f0 to f1 over n samples.
void add_sweep(std::vector<float>& out, size_t at, size_t n, double f0, double f1, double amp) {
    double phase = 0.0;
    for (size_t i = 0; i < n && at + i < out.size(); ++i) {
        const double f = f0 + (f1 - f0) * static_cast<double>(i) / static_cast<double>(n);
        phase += kTwoPi * f / kSr;
        out[at + i] += static_cast<float>(amp * envelope(i, n) * std::sin(phase));
    }
}

std::vector<float> vocalization(const std::string& kind, std::mt19937_64& rng) {
    const double amp = uniform(rng, 0.25, 0.6);
    std::vector<float> v;
    if (kind == "song") {
        v.assign(static_cast<size_t>(uniform(rng, 0.50, 0.56) * kSr), 0.0f);
        add_sweep(v, 0, v.size(), uniform(rng, 6900, 7100), uniform(rng, 3450, 3550), amp);
    } else if (kind == "call") {
        const int bursts = 3;
        const double f = uniform(rng, 4400, 4600);
        const auto burst = static_cast<size_t>(uniform(rng, 0.045, 0.055) * kSr);
        const auto gap = static_cast<size_t>(uniform(rng, 0.070, 0.080) * kSr);
        v.assign(bursts * burst + (bursts - 1) * gap, 0.0f);
        for (int b = 0; b < bursts; ++b) add_sweep(v, b * (burst + gap), burst, f, f, amp);
    } else if (kind == "noise_burst") {
        v.assign(static_cast<size_t>(uniform(rng, 0.30, 0.45) * kSr), 0.0f);
        std::normal_distribution<double> g(0.0, amp / 2.5);
        for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(std::clamp(g(rng), -1.0, 1.0) * envelope(i, v.size()));
    } else if (kind == "rising_chirp") {
        v.assign(static_cast<size_t>(uniform(rng, 0.40, 0.60) * kSr), 0.0f);
        add_sweep(v, 0, v.size(), uniform(rng, 1000, 1400), uniform(rng, 2400, 2800), amp);
    } else if (kind == "harmonic_stack") {
        v.assign(static_cast<size_t>(uniform(rng, 0.40, 0.55) * kSr), 0.0f);
        const double f0 = uniform(rng, 600, 800);
        for (int h = 1; h <= 5; ++h) add_sweep(v, 0, v.size(), f0 * h, f0 * h, amp / (1.5 * h));
    } else if (kind == "warble") {
        v.assign(static_cast<size_t>(uniform(rng, 0.40, 0.60) * kSr), 0.0f);
        const double fc = uniform(rng, 2200, 2800), depth = uniform(rng, 400, 700), rate = uniform(rng, 10, 14);
        double phase = 0.0;
        for (size_t i = 0; i < v.size(); ++i) {
            const double t = static_cast<double>(i) / kSr;
            phase += kTwoPi * (fc + depth * std::sin(kTwoPi * rate * t)) / kSr;
            v[i] = static_cast<float>(amp * envelope(i, v.size()) * std::sin(phase));
        }
    } else {
        throw UsageError("unknown fixture sound kind '" + kind + "'");
    }
    return v;
}

}  // namespace

const std::vector<std::string>& outlier_kinds() {
    static const std::vector<std::string> kinds{"noise_burst", "rising_chirp", "harmonic_stack", "warble"};
    return kinds;
}

std::vector<float> synthesize(const std::string& kind, std::mt19937_64& rng) {
    const auto voc = vocalization(kind, rng);
    const auto lead = static_cast<size_t>(uniform(rng, 0.30, 0.45) * kSr);
    const auto tail = static_cast<size_t>(uniform(rng, 0.30, 0.45) * kSr);
    std::vector<float> out(lead + voc.size() + tail);
    std::normal_distribution<double> bg(0.0, 2e-4);
    for (auto& s : out) s = static_cast<float>(bg(rng));
    for (size_t i = 0; i < voc.size(); ++i) out[lead + i] = std::clamp(out[lead + i] + voc[i], -1.0f, 1.0f);
    return out;
}

FixtureTruth write_fixture(const fs::path& dir, const FixtureSpec& spec) {
    std::vector<std::string> kinds;
    kinds.insert(kinds.end(), static_cast<size_t>(spec.n_songs), "song");
    kinds.insert(kinds.end(), static_cast<size_t>(spec.n_calls), "call");
    for (int i = 0; i < spec.n_outliers; ++i) kinds.push_back(outlier_kinds()[i % outlier_kinds().size()]);
    std::mt19937_64 rng(spec.seed);
    std::shuffle(kinds.begin(), kinds.end(), rng);

    fs::create_directories(dir / "audio");
    FixtureTruth truth;
    json records = json::array();
    for (size_t i = 0; i < kinds.size(); ++i) {
        const std::string id = fmt::format("{}", 100000 + i);
        const auto& kind = kinds[i];
        const bool outlier = kind != "song" && kind != "call";
        std::string type = kind;
        if (outlier) type = std::bernoulli_distribution(0.5)(rng) ? "song" : "call";
        const auto samples = synthesize(kind, rng);
        const std::string file = "audio/" + id + ".wav";
        ingest::write_wav_pcm16(dir / file, samples, ingest::kSampleRate);
        records.push_back({{"id", id},
                           {"gen", spec.genus},
                           {"sp", spec.species},
                           {"en", spec.common_name},
                           {"type", type},
                           {"also", json::array()},
                           {"file", file},
                           {"file-name", id + ".wav"}});
        truth.kind_of[id] = kind;
        if (outlier) truth.outliers.insert(id);
    }
    io::write_text_atomic(dir / "recordings.json", io::dump_json({{"recordings", records}}));
    io::write_text_atomic(dir / "truth.json", io::dump_json({{"kinds", truth.kind_of},
                                                             {"outliers", truth.outliers}}));
    return truth;
}

FixtureTruth load_truth(const fs::path& dir) {
    const auto j = io::read_json(dir / "truth.json");
    FixtureTruth t;
    t.kind_of = j.at("kinds").get<std::map<std::string, std::string>>();
    t.outliers = j.at("outliers").get<std::set<std::string>>();
    return t;
}

std::string recording_of_clip(const std::string& clip_id) {
    const auto pos = clip_id.rfind('_');
    return pos == std::string::npos ? clip_id : clip_id.substr(0, pos);
}

}  // namespace birduod::fixture
