#include "certgate/metrics.hpp"

#include <algorithm>
#include <vector>

#include "certgate/text.hpp"

namespace certgate {

BoundaryMetrics boundary_metrics(const OutcomeTally& t) {
    const auto n = t.total();
    if (n <= 0) throw EmptyTally("boundary_metrics: empty tally");
    const auto N = static_cast<double>(n);
    BoundaryMetrics m;
    m.accuracy = static_cast<double>(t.n_cc + t.n_cu) / N;
    m.unc_rate = static_cast<double>(t.n_cu + t.n_iu) / N;
    m.overconfidence = static_cast<double>(t.n_ic) / N;
    m.conservativeness = static_cast<double>(t.n_cu) / N;
    m.alignment = static_cast<double>(t.n_cc + t.n_iu) / N;
    m.n = n;
    return m;
}

ConfidenceLevel confidence_level(CertaintyFlag c, CertaintyFlag c_hat) {
    return ConfidenceLevel(2 * c.value() + c_hat.value());
}

StopwordList::StopwordList()
    : words_{"a",    "an",   "and",  "are",  "as",    "at",   "be",   "by",   "for",  "from", "has",  "he",
             "her",  "his",  "i",    "in",   "is",    "it",   "its",  "my",   "of",   "on",   "or",   "she",
             "that", "the",  "their", "they", "this", "to",   "was",  "were", "which", "who", "with", "you",
             "your", "answer", "certainty"} {}

StopwordList::StopwordList(std::set<std::string> words) : words_(std::move(words)) {}

std::size_t overlap(std::string_view answer, std::string_view document, const StopwordList& stopwords) {
    std::set<std::string> answer_terms;
    for (auto& t : text::tokens(answer)) {
        if (!stopwords.contains(t)) answer_terms.insert(std::move(t));
    }
    if (answer_terms.empty()) return 0;
    const auto doc_tokens = text::tokens(document);
    const std::set<std::string> doc_terms(doc_tokens.begin(), doc_tokens.end());
    std::size_t shared = 0;
    for (const auto& t : answer_terms) {
        if (doc_terms.contains(t)) ++shared;
    }
    return shared;
}

bool relies_on_document(std::string_view plain_answer, std::string_view augmented_answer, std::string_view document,
                        double gamma, const StopwordList& stopwords) {
    const auto with_doc = static_cast<double>(overlap(augmented_answer, document, stopwords));
    const auto without_doc = static_cast<double>(overlap(plain_answer, document, stopwords));
    return with_doc - without_doc > gamma;
}

double utilization_ratio(std::span<const RelianceRecord> records, const RelianceOptions& opts) {
    if (records.empty()) throw EmptyInput("utilization_ratio: no records");
    std::size_t relying = 0;
    for (const auto& r : records) {
        if (relies_on_document(r.plain_answer, r.augmented_answer, r.document, opts.gamma, opts.stopwords)) ++relying;
    }
    return static_cast<double>(relying) / static_cast<double>(records.size());
}

double corruption_rate(std::span<const RelianceRecord> records, const RelianceOptions& opts) {
    if (records.empty()) throw EmptyInput("corruption_rate: no records");
    std::size_t flipped = 0;
    std::size_t plain_right = 0;
    for (const auto& r : records) {
        if (r.plain_correct) ++plain_right;
        if (r.plain_correct && !r.augmented_correct) ++flipped;
    }
    if (opts.corruption_over_plain_correct) {
        if (plain_right == 0) throw EmptyInput("corruption_rate: no plain-correct records");
        return static_cast<double>(flipped) / static_cast<double>(plain_right);
    }
    return static_cast<double>(flipped) / static_cast<double>(records.size());
}

std::map<int, double> bucket_by_level(std::span<const RelianceRecord> records, RelianceMetric metric,
                                      const RelianceOptions& opts) {
    std::map<int, std::vector<RelianceRecord>> groups;
    for (const auto& r : records) groups[r.level.value()].push_back(r);
    std::map<int, double> out;
    for (const auto& [level, group] : groups) {
        if (metric == RelianceMetric::utilization) {
            out[level] = utilization_ratio(group, opts);
        } else if (opts.corruption_over_plain_correct &&
                   std::none_of(group.begin(), group.end(), [](const auto& r) { return r.plain_correct; })) {
            continue;
        } else {
            out[level] = corruption_rate(group, opts);
        }
    }
    return out;
}

}  // namespace certgate
