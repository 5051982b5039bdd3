#pragma once

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "certgate/core.hpp"

namespace certgate {

class EmptyTally : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class EmptyInput : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Accuracy, unc-rate, overconfidence, conservativeness and alignment of a
/// tally. Throws EmptyTally when the tally is empty.
BoundaryMetrics boundary_metrics(const OutcomeTally& t);

/// c from the vanilla pass, c_hat from the punish_explain pass.
/// (0,0)->0, (0,1)->1, (1,0)->2, (1,1)->3.
ConfidenceLevel confidence_level(CertaintyFlag c, CertaintyFlag c_hat);

/// Words that never count as overlap evidence.
class StopwordList {
public:
    StopwordList();
    explicit StopwordList(std::set<std::string> words);

    bool contains(const std::string& w) const { return words_.contains(w); }
    const std::set<std::string>& words() const { return words_; }

private:
    std::set<std::string> words_;
};

/// Number of distinct normalized non-stopword tokens of `answer` that occur
/// among the normalized tokens of `document`.
std::size_t overlap(std::string_view answer, std::string_view document, const StopwordList& stopwords = StopwordList());

/// overlap(a_hat, d) - overlap(a, d) > gamma.
bool relies_on_document(std::string_view plain_answer, std::string_view augmented_answer, std::string_view document,
                        double gamma = 0.0, const StopwordList& stopwords = StopwordList());

struct RelianceRecord {
    std::string item_id;
    ConfidenceLevel level;
    std::string plain_answer;
    std::string augmented_answer;
    std::string document;
    bool plain_correct = false;
    bool augmented_correct = false;
};

struct RelianceOptions {
    double gamma = 0.0;
    /// When true, corruption_rate divides by plain-correct records instead of
    /// all records.
    bool corruption_over_plain_correct = false;
    StopwordList stopwords;
};

/// Fraction of records whose augmented answer relies on the document.
/// Throws EmptyInput on no records.
double utilization_ratio(std::span<const RelianceRecord> records, const RelianceOptions& opts = {});

/// Fraction of records answered right without the document and wrong with it.
/// Throws EmptyInput on no records (or, with the plain-correct denominator,
/// when no record was answered right).
double corruption_rate(std::span<const RelianceRecord> records, const RelianceOptions& opts = {});

enum class RelianceMetric { utilization, corruption };

/// Metric per confidence level; levels without records are absent.
std::map<int, double> bucket_by_level(std::span<const RelianceRecord> records, RelianceMetric metric,
                                      const RelianceOptions& opts = {});

}  // namespace certgate
