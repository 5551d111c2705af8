#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "birduod/evaluate/evaluate.hpp"
#include "birduod/layout.hpp"

namespace birduod::review {

enum class ReviewClass { outlier_class, inlier_class };

std::string_view to_string(ReviewClass c);
ReviewClass review_class_from_string(std::string_view s);

struct ReviewSession {
    std::string session_id;
    std::string species_code;
    std::string run_id;
    ReviewClass review_class = ReviewClass::outlier_class;
    uint64_t seed = 0;
    size_t max_n = 0;
    int population = 0;
    std::vector<std::string> sample_order;
    size_t cursor = 0;
    std::vector<evaluate::ReviewVerdict> verdicts;
    nlohmann::json audit = nlohmann::json::array();

    bool complete() const { return cursor >= sample_order.size(); }
    const evaluate::ReviewVerdict* verdict_for(const std::string& clip_id) const;
    std::map<std::string, int> tallies() const;
    /// Outlier rate over determinate verdicts (TPR for the outlier class,
    /// FNR for the inlier class). Throws UsageError with none recorded.
    evaluate::RateEstimate estimate(double confidence = 0.95, bool fpc = false) const;
};

void to_json(nlohmann::json& j, const ReviewSession& s);
void from_json(const nlohmann::json& j, ReviewSession& s);

enum class SubmitStatus { accepted, unchanged, overwritten, not_sampled, not_current };

struct SubmitResult {
    SubmitStatus status;
    std::string message;
};

/// Owns the session files of one species. Every mutation is serialized and
/// persisted atomically before it is acknowledged.
class SessionStore {
public:
    explicit SessionStore(SpeciesLayout layout);

    /// Samples the flagged (or unflagged) clips of a detection run. A session
    /// with the same run, class and seed is reopened rather than recreated.
    ReviewSession create(const std::string& run_id, ReviewClass cls, uint64_t seed, size_t max_n);
    std::optional<ReviewSession> get(const std::string& session_id) const;
    SubmitResult submit(const std::string& session_id, const evaluate::ReviewVerdict& verdict, bool override_current);

    const SpeciesLayout& layout() const { return layout_; }

private:
    void persist(const ReviewSession& s) const;

    SpeciesLayout layout_;
    mutable std::mutex mutex_;
};

std::string utc_timestamp();

}  // namespace birduod::review
