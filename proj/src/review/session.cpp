#include "birduod/review/session.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "birduod/error.hpp"
#include "birduod/io.hpp"
#include "birduod/uod/uod.hpp"

namespace birduod::review {

namespace fs = std::filesystem;

std::string_view to_string(ReviewClass c) { return c == ReviewClass::outlier_class ? "outlier_class" : "inlier_class"; }

ReviewClass review_class_from_string(std::string_view s) {
    if (s == "outlier_class" || s == "outlier" || s == "outliers") return ReviewClass::outlier_class;
    if (s == "inlier_class" || s == "inlier" || s == "inliers") return ReviewClass::inlier_class;
    throw UsageError("class must be outlier_class or inlier_class, got '" + std::string(s) + "'");
}

std::string utc_timestamp() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", now);
}

const evaluate::ReviewVerdict* ReviewSession::verdict_for(const std::string& clip_id) const {
    auto it = std::find_if(verdicts.begin(), verdicts.end(), [&](const auto& v) { return v.clip_id == clip_id; });
    return it == verdicts.end() ? nullptr : &*it;
}

std::map<std::string, int> ReviewSession::tallies() const {
    std::map<std::string, int> t{{"outlier", 0}, {"inlier", 0}, {"indeterminate", 0}};
    for (const auto& v : verdicts) ++t[std::string(evaluate::to_string(v.verdict))];
    return t;
}

evaluate::RateEstimate ReviewSession::estimate(double confidence, bool fpc) const {
    return evaluate::estimate_rate(verdicts, evaluate::Verdict::outlier, confidence, population, fpc);
}

void to_json(nlohmann::json& j, const ReviewSession& s) {
    j = nlohmann::json{{"session_id", s.session_id},
                       {"species_code", s.species_code},
                       {"run_id", s.run_id},
                       {"class", to_string(s.review_class)},
                       {"seed", s.seed},
                       {"max_n", s.max_n},
                       {"population", s.population},
                       {"sample_order", s.sample_order},
                       {"cursor", s.cursor},
                       {"verdicts", s.verdicts},
                       {"audit", s.audit}};
}

void from_json(const nlohmann::json& j, ReviewSession& s) {
    s.session_id = j.at("session_id").get<std::string>();
    s.species_code = j.at("species_code").get<std::string>();
    s.run_id = j.at("run_id").get<std::string>();
    s.review_class = review_class_from_string(j.at("class").get<std::string>());
    s.seed = j.at("seed").get<uint64_t>();
    s.max_n = j.at("max_n").get<size_t>();
    s.population = j.at("population").get<int>();
    s.sample_order = j.at("sample_order").get<std::vector<std::string>>();
    s.cursor = j.at("cursor").get<size_t>();
    s.verdicts = j.at("verdicts").get<std::vector<evaluate::ReviewVerdict>>();
    s.audit = j.value("audit", nlohmann::json::array());
    if (s.cursor > s.sample_order.size()) throw DataError("session " + s.session_id + ": cursor beyond sample");
}

SessionStore::SessionStore(SpeciesLayout layout) : layout_(std::move(layout)) {}

void SessionStore::persist(const ReviewSession& s) const {
    fs::create_directories(layout_.review_dir());
    io::write_text_atomic(layout_.session_file(s.session_id), io::dump_json(s));
}

ReviewSession SessionStore::create(const std::string& run_id, ReviewClass cls, uint64_t seed, size_t max_n) {
    const auto result_path = layout_.uod_result(run_id);
    if (!fs::exists(result_path)) throw DataError("unknown detection run '" + run_id + "'; run detect");
    const auto run = uod::UodRun::from_json(io::read_json(result_path));

    std::vector<std::string> population;
    std::vector<bool> flagged(run.clip_ids.size(), false);
    for (int i : run.result.flagged) flagged[i] = true;
    for (size_t i = 0; i < run.clip_ids.size(); ++i) {
        if (flagged[i] == (cls == ReviewClass::outlier_class)) population.push_back(run.clip_ids[i]);
    }
    if (population.empty()) throw DataError("run '" + run_id + "' has no clips in the " + std::string(to_string(cls)));

    const std::string id =
        fmt::format("{}-{}-s{}", run_id, cls == ReviewClass::outlier_class ? "out" : "in", seed);
    std::lock_guard lock(mutex_);
    if (fs::exists(layout_.session_file(id))) return io::read_json(layout_.session_file(id)).get<ReviewSession>();

    ReviewSession s;
    s.session_id = id;
    s.species_code = layout_.species_code;
    s.run_id = run_id;
    s.review_class = cls;
    s.seed = seed;
    s.max_n = max_n == 0 ? population.size() : max_n;
    s.population = static_cast<int>(population.size());
    s.sample_order = evaluate::sample_for_review(population, seed, s.max_n);
    persist(s);
    return s;
}

std::optional<ReviewSession> SessionStore::get(const std::string& session_id) const {
    if (session_id.empty() || session_id.find_first_of("/\\") != std::string::npos || session_id.starts_with('.')) {
        return std::nullopt;
    }
    std::lock_guard lock(mutex_);
    const auto path = layout_.session_file(session_id);
    if (!fs::exists(path)) return std::nullopt;
    return io::read_json(path).get<ReviewSession>();
}

SubmitResult SessionStore::submit(const std::string& session_id, const evaluate::ReviewVerdict& verdict,
                                  bool override_current) {
    std::lock_guard lock(mutex_);
    const auto path = layout_.session_file(session_id);
    if (!fs::exists(path)) throw DataError("unknown session '" + session_id + "'");
    auto s = io::read_json(path).get<ReviewSession>();

    if (std::find(s.sample_order.begin(), s.sample_order.end(), verdict.clip_id) == s.sample_order.end()) {
        return {SubmitStatus::not_sampled, "clip " + verdict.clip_id + " is not in this session's sample"};
    }
    auto existing = std::find_if(s.verdicts.begin(), s.verdicts.end(),
                                 [&](const auto& v) { return v.clip_id == verdict.clip_id; });
    if (existing != s.verdicts.end()) {
        if (existing->verdict == verdict.verdict && existing->comment == verdict.comment) {
            return {SubmitStatus::unchanged, "verdict already recorded"};
        }
        if (!override_current) {
            return {SubmitStatus::not_current, "clip " + verdict.clip_id + " already has a verdict; set override to replace it"};
        }
        s.audit.push_back({{"clip_id", verdict.clip_id},
                           {"previous", evaluate::to_string(existing->verdict)},
                           {"replacement", evaluate::to_string(verdict.verdict)},
                           {"timestamp", verdict.timestamp}});
        *existing = verdict;
        persist(s);
        return {SubmitStatus::overwritten, "verdict replaced"};
    }
    if (s.complete() || s.sample_order[s.cursor] != verdict.clip_id) {
        if (!override_current) {
            return {SubmitStatus::not_current,
                    "clip " + verdict.clip_id + " is not the current clip; set override to record it anyway"};
        }
        s.audit.push_back({{"clip_id", verdict.clip_id}, {"note", "recorded out of order"}, {"timestamp", verdict.timestamp}});
        s.verdicts.push_back(verdict);
    } else {
        s.verdicts.push_back(verdict);
        ++s.cursor;
    }
    // Skip past clips already decided out of order.
    while (!s.complete() && s.verdict_for(s.sample_order[s.cursor])) ++s.cursor;
    persist(s);
    return {SubmitStatus::accepted, "verdict recorded"};
}

}  // namespace birduod::review
