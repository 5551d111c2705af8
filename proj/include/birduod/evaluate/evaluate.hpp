#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "birduod/preprocess/mel.hpp"

namespace birduod::evaluate {

enum class Verdict { outlier, inlier, indeterminate };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

struct ReviewVerdict {
    std::string clip_id;
    Verdict verdict = Verdict::indeterminate;
    std::optional<std::string> comment;
    std::string reviewer;
    std::string timestamp;  // ISO-8601 UTC
};

void to_json(nlohmann::json& j, const ReviewVerdict& v);
void from_json(const nlohmann::json& j, ReviewVerdict& v);

struct RateEstimate {
    double rate = 0.0;
    double moe = 0.0;
    double confidence = 0.95;
    int n_sampled = 0;  // determinate verdicts
    int n_population = 0;
    int positives = 0;
    int indeterminate = 0;
};

void to_json(nlohmann::json& j, const RateEstimate& r);

/// Seeded uniform sample without replacement; max_n beyond the set size
/// returns the whole set shuffled.
std::vector<std::string> sample_for_review(const std::vector<std::string>& flagged, uint64_t seed, size_t max_n);

/// Two-sided normal critical value, e.g. 1.959964 at 0.95.
double z_value(double confidence);

/// p = positives / determinate verdicts, moe = z sqrt(p(1-p)/n), optionally
/// times sqrt((N-n)/(N-1)). Throws UsageError without determinate verdicts.
RateEstimate estimate_rate(const std::vector<ReviewVerdict>& verdicts, Verdict positive, double confidence = 0.95,
                           int n_population = 0, bool finite_population_correction = false);

/// Shannon entropy in bits of the clip's linear power normalized over cells.
double spectrogram_entropy(const preprocess::Spectrogram& mel);

struct EntropyReport {
    std::map<std::string, double> label_means;
    std::map<std::string, int> label_counts;
    double overall_mean = 0.0;
    int count = 0;
};

EntropyReport entropy_report(const std::vector<preprocess::Spectrogram>& clips, const std::vector<std::string>& labels);

void to_json(nlohmann::json& j, const EntropyReport& r);

struct EnsembleRate {
    std::string name;  // e.g. "cae"
    std::optional<RateEstimate> tpr;
};

struct SpeciesRow {
    std::string species;
    int n_clips = 0;
    double entropy = 0.0;
    std::vector<EnsembleRate> ensembles;

    /// Name of the ensemble with the highest TPR, or "-" when none was reviewed.
    std::string best() const;
};

/// Columns: species, no. clips, entropy, then TPR and MoE per ensemble, best.
std::string format_report_table(const std::vector<SpeciesRow>& rows);
nlohmann::json report_json(const std::vector<SpeciesRow>& rows);

}  // namespace birduod::evaluate
