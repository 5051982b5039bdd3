#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "certgate/core.hpp"
#include "certgate/llm_gateway.hpp"
#include "certgate/metrics.hpp"
#include "certgate/prompts.hpp"
#include "certgate/response_parse.hpp"
#include "certgate/retrieval.hpp"

namespace certgate {

class EmptyDataset : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class RaMode { none, static_ra, adaptive };

std::string_view to_string(RaMode m);
RaMode parse_ra_mode(std::string_view name);

/// What to do with a completion that has no certainty marker and no hedge.
struct ParsePolicy {
    bool unparseable_as_certain = true;
    HedgeList hedges;
};

/// Shared, read-only state for one experiment.
struct Experiment {
    LlmGateway* gateway = nullptr;
    const TemplateSet* templates = nullptr;
    ParsePolicy policy;
    /// Bounded worker pool size for per-item processing.
    int workers = 4;
    /// Answer without augmentation when the retriever throws, instead of
    /// skipping the item.
    bool fallback_on_retriever_error = true;
};

/// Outcome of eliciting (answer, certainty) for one item.
struct Elicited {
    std::vector<ModelTurn> turns;
    std::string answer;
    CertaintyFlag certainty;
    bool certainty_parsed = true;
    bool correct = false;
};

/// One dataset item in a run ledger.
struct ItemRecord {
    std::size_t index = 0;
    std::string item_id;
    bool skipped = false;
    std::string error;

    std::vector<ModelTurn> turns;
    /// Set when a certainty-eliciting pass ran (elicit and adaptive runs).
    std::optional<CertaintyFlag> certainty;
    bool certainty_parsed = true;
    /// Correctness of the elicited (unaugmented) answer.
    std::optional<bool> elicited_correct;

    bool retrieval_triggered = false;
    std::optional<RetrievalHit> hit;
    /// Retrieval was triggered but the unaugmented answer was used.
    bool fallback = false;
    std::string fallback_reason;

    std::string final_answer;
    bool correct = false;
};

/// Runs the strategy on one item. Challenge runs both of its turns and
/// keeps the first answer with the second certainty.
Elicited elicit_item(const QAItem& item, const Experiment& ex, StrategyId strategy);

struct ElicitResult {
    std::vector<ItemRecord> records;
    OutcomeTally tally;
    std::int64_t skipped = 0;
};

/// Elicits every item. Items whose model call fails are recorded as skipped
/// and left out of the tally. Throws EmptyDataset on no items.
ElicitResult elicit(std::span<const QAItem> items, const Experiment& ex, StrategyId strategy);

/// Certain items keep the elicited answer and never touch the retriever;
/// uncertain items are answered again over the top-1 document.
ItemRecord answer_adaptive(const QAItem& item, const Experiment& ex, StrategyId gate_strategy, Retriever& retriever);

/// Always retrieves once and answers over the document. `unaugmented`
/// answers the item when no document is available.
ItemRecord answer_static(const QAItem& item, const Experiment& ex, Retriever& retriever,
                         StrategyId unaugmented = StrategyId::vanilla);

struct RunConfig {
    std::string dataset_path;
    StrategyId strategy = StrategyId::vanilla;
    RaMode ra_mode = RaMode::none;
    HitSource retriever = HitSource::sparse;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    std::string output_dir;

    /// Throws std::invalid_argument when the combination is not runnable.
    void validate() const;
};

struct CostTotals {
    std::int64_t prompt_chars = 0;
    std::int64_t completion_chars = 0;
    std::int64_t gate_prompt_chars = 0;
    std::int64_t gate_completion_chars = 0;
};

struct RunLedger {
    nlohmann::json config;
    std::vector<ItemRecord> records;

    std::int64_t completed = 0;
    std::int64_t skipped = 0;
    /// Tally of the certainty-eliciting pass (empty for static runs).
    OutcomeTally tally;
    std::optional<BoundaryMetrics> metrics;
    double final_accuracy = 0.0;
    double ra_rate = 0.0;
    std::int64_t retriever_calls = 0;
    std::int64_t fallbacks = 0;
    std::int64_t triggered = 0;
    /// Retrieval-triggered items that were answered over a document.
    std::int64_t augmented = 0;
    GatewayCounters counters;
    CostTotals cost;

    /// JSON lines: a header with the config snapshot, one record per item in
    /// dataset order, and a footer with the aggregates.
    std::string serialize() const;
    void write(const std::string& path) const;
};

/// Config snapshot recorded in the ledger header.
nlohmann::json config_snapshot(const RunConfig& cfg, const Experiment& ex, std::string_view dataset_digest,
                               const std::optional<Bm25Params>& bm25 = std::nullopt);

/// Runs the configured experiment over all items on a bounded worker pool.
/// `retriever` is required unless ra_mode is none.
RunLedger run_experiment(std::span<const QAItem> items, const RunConfig& cfg, const Experiment& ex,
                         Retriever* retriever, nlohmann::json config);

struct RelianceItem {
    std::size_t index = 0;
    std::string item_id;
    bool skipped = false;
    std::string error;
    std::vector<ModelTurn> turns;
    CertaintyFlag c;
    CertaintyFlag c_hat;
    ConfidenceLevel level;
    std::string plain_answer;
    bool plain_correct = false;
    std::string gold_document;
    std::string gold_answer;
    bool gold_correct = false;
    std::string corrupt_document;
    std::string corrupt_answer;
    bool corrupt_correct = false;
};

struct RelianceReport {
    nlohmann::json config;
    std::vector<RelianceItem> items;
    std::int64_t skipped = 0;
    std::map<int, double> utilization;
    std::map<int, double> corruption;
    std::map<int, std::int64_t> level_counts;
    GatewayCounters counters;

    std::vector<RelianceRecord> gold_records() const;
    std::vector<RelianceRecord> corrupt_records() const;

    std::string serialize() const;
    void write(const std::string& path) const;
};

/// Confidence levels from the vanilla and punish_explain passes, then one
/// augmented answer over the gold document and one over its corrupted copy.
/// Items without a gold document are skipped.
RelianceReport reliance_study(std::span<const QAItem> items, const Experiment& ex,
                              const RelianceOptions& opts = {}, nlohmann::json config = {});

}  // namespace certgate
