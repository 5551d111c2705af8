#include "birduod/evaluate/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "birduod/error.hpp"
#include "birduod/preprocess/clip.hpp"

namespace birduod::evaluate {

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::outlier: return "outlier";
        case Verdict::inlier: return "inlier";
        case Verdict::indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

Verdict verdict_from_string(std::string_view s) {
    if (s == "outlier") return Verdict::outlier;
    if (s == "inlier") return Verdict::inlier;
    if (s == "indeterminate") return Verdict::indeterminate;
    throw UsageError("verdict must be outlier, inlier or indeterminate, got '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const ReviewVerdict& v) {
    j = nlohmann::json{{"clip_id", v.clip_id},
                       {"verdict", to_string(v.verdict)},
                       {"reviewer", v.reviewer},
                       {"timestamp", v.timestamp}};
    j["comment"] = v.comment ? nlohmann::json(*v.comment) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ReviewVerdict& v) {
    v.clip_id = j.at("clip_id").get<std::string>();
    v.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    v.reviewer = j.value("reviewer", std::string());
    v.timestamp = j.value("timestamp", std::string());
    v.comment.reset();
    if (j.contains("comment") && !j.at("comment").is_null()) v.comment = j.at("comment").get<std::string>();
}

void to_json(nlohmann::json& j, const RateEstimate& r) {
    j = nlohmann::json{{"rate", r.rate},
                       {"moe", r.moe},
                       {"confidence", r.confidence},
                       {"n_sampled", r.n_sampled},
                       {"n_population", r.n_population},
                       {"positives", r.positives},
                       {"indeterminate", r.indeterminate}};
}

std::vector<std::string> sample_for_review(const std::vector<std::string>& flagged, uint64_t seed, size_t max_n) {
    if (flagged.empty()) throw UsageError("sample_for_review: nothing flagged");
    std::vector<std::string> out(flagged);
    std::mt19937_64 rng(seed);
    // Fisher-Yates with rejection sampling, independent of the standard library's distributions.
    auto below = [&rng](uint64_t bound) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        return r % bound;
    };
    for (size_t i = out.size() - 1; i > 0; --i) std::swap(out[i], out[below(i + 1)]);
    if (max_n < out.size()) out.resize(max_n);
    return out;
}

double z_value(double confidence) {
    if (!(confidence > 0 && confidence < 1)) throw UsageError("confidence must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - confidence) / 2.0);
}

RateEstimate estimate_rate(const std::vector<ReviewVerdict>& verdicts, Verdict positive, double confidence,
                           int n_population, bool finite_population_correction) {
    if (positive == Verdict::indeterminate) throw UsageError("estimate_rate: positive class must be determinate");
    RateEstimate r;
    r.confidence = confidence;
    for (const auto& v : verdicts) {
        if (v.verdict == Verdict::indeterminate) {
            ++r.indeterminate;
            continue;
        }
        ++r.n_sampled;
        if (v.verdict == positive) ++r.positives;
    }
    if (r.n_sampled == 0) throw UsageError("estimate_rate: no determinate verdicts");
    r.n_population = n_population > 0 ? n_population : r.n_sampled;
    const double n = r.n_sampled;
    r.rate = r.positives / n;
    r.moe = z_value(confidence) * std::sqrt(r.rate * (1.0 - r.rate) / n);
    if (finite_population_correction && r.n_population > 1) {
        const double big_n = r.n_population;
        r.moe *= std::sqrt(std::max(0.0, (big_n - n) / (big_n - 1.0)));
    }
    return r;
}

double spectrogram_entropy(const preprocess::Spectrogram& mel) {
    Eigen::ArrayXd p(mel.size());
    for (Eigen::Index i = 0; i < mel.size(); ++i) {
        p[i] = std::max(0.0, preprocess::floor_relative_power(static_cast<double>(mel.data()[i])));
    }
    const double total = p.sum();
    if (!(total > 0)) return 0.0;
    p /= total;
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0) h -= p[i] * std::log2(p[i]);
    }
    return h;
}

EntropyReport entropy_report(const std::vector<preprocess::Spectrogram>& clips, const std::vector<std::string>& labels) {
    if (clips.empty()) throw UsageError("entropy_report: no clips");
    if (clips.size() != labels.size()) throw UsageError("entropy_report: label count differs from clip count");
    EntropyReport r;
    std::map<std::string, double> sums;
    double total = 0.0;
    for (size_t i = 0; i < clips.size(); ++i) {
        const double h = spectrogram_entropy(clips[i]);
        sums[labels[i]] += h;
        ++r.label_counts[labels[i]];
        total += h;
    }
    for (const auto& [label, sum] : sums) r.label_means[label] = sum / r.label_counts[label];
    r.count = static_cast<int>(clips.size());
    r.overall_mean = total / static_cast<double>(clips.size());
    return r;
}

void to_json(nlohmann::json& j, const EntropyReport& r) {
    j = nlohmann::json{{"label_means", r.label_means},
                       {"label_counts", r.label_counts},
                       {"overall_mean", r.overall_mean},
                       {"count", r.count}};
}

std::string SpeciesRow::best() const {
    const EnsembleRate* top = nullptr;
    for (const auto& e : ensembles) {
        if (e.tpr && (!top || e.tpr->rate > top->tpr->rate)) top = &e;
    }
    return top ? top->name : "-";
}

std::string format_report_table(const std::vector<SpeciesRow>& rows) {
    std::vector<std::string> names;
    for (const auto& row : rows) {
        for (const auto& e : row.ensembles) {
            if (std::find(names.begin(), names.end(), e.name) == names.end()) names.push_back(e.name);
        }
    }
    std::string out = fmt::format("{:<10} {:>9} {:>8}", "species", "no. clips", "entropy");
    for (const auto& n : names) out += fmt::format(" {:>9} {:>9}", n + " TPR", n + " MoE");
    out += fmt::format(" {:>6}\n", "best");
    for (const auto& row : rows) {
        out += fmt::format("{:<10} {:>9} {:>8.4f}", row.species, row.n_clips, row.entropy);
        for (const auto& n : names) {
            auto it = std::find_if(row.ensembles.begin(), row.ensembles.end(),
                                   [&n](const EnsembleRate& e) { return e.name == n; });
            if (it != row.ensembles.end() && it->tpr) {
                out += fmt::format(" {:>9.3f} {:>9.3f}", it->tpr->rate, it->tpr->moe);
            } else {
                out += fmt::format(" {:>9} {:>9}", "-", "-");
            }
        }
        out += fmt::format(" {:>6}\n", row.best());
    }
    return out;
}

nlohmann::json report_json(const std::vector<SpeciesRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json ens = nlohmann::json::object();
        for (const auto& e : row.ensembles) ens[e.name] = e.tpr ? nlohmann::json(*e.tpr) : nlohmann::json(nullptr);
        arr.push_back({{"species", row.species},
                       {"n_clips", row.n_clips},
                       {"entropy", row.entropy},
                       {"ensembles", ens},
                       {"best", row.best()}});
    }
    return arr;
}

}  // namespace birduod::evaluate
