#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace certgate {

/// A question with its gold short answers and, optionally, the passage known
/// to contain the answer.
struct QAItem {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::optional<std::string> gold_document;

    /// Throws std::invalid_argument when gold_answers is empty or holds an
    /// empty string.
    void validate() const;
};

/// The model's binary self-report: 1 = sure the answer is right, 0 = not sure.
class CertaintyFlag {
public:
    constexpr CertaintyFlag() = default;
    constexpr explicit CertaintyFlag(bool certain) : certain_(certain) {}

    static constexpr CertaintyFlag certain() { return CertaintyFlag(true); }
    static constexpr CertaintyFlag uncertain() { return CertaintyFlag(false); }

    constexpr bool is_certain() const { return certain_; }
    constexpr int value() const { return certain_ ? 1 : 0; }

    friend constexpr bool operator==(CertaintyFlag, CertaintyFlag) = default;

private:
    bool certain_ = false;
};

enum class StrategyId {
    vanilla,
    punish,
    challenge,
    step_by_step,
    generate,
    explain,
    punish_explain,
    ra_answer,
};

inline constexpr StrategyId kAllStrategies[] = {
    StrategyId::vanilla,  StrategyId::punish,  StrategyId::challenge,      StrategyId::step_by_step,
    StrategyId::generate, StrategyId::explain, StrategyId::punish_explain, StrategyId::ra_answer,
};

std::string_view to_string(StrategyId id);
/// Throws std::invalid_argument for unknown names.
StrategyId parse_strategy(std::string_view name);
/// Every strategy except ra_answer asks the model for a certainty marker.
constexpr bool elicits_certainty(StrategyId id) { return id != StrategyId::ra_answer; }

struct DecodeParams {
    int max_output_tokens = 256;
    double temperature = 0.0;
    std::map<std::string, std::string> extra;

    void validate() const;
    friend bool operator==(const DecodeParams&, const DecodeParams&) = default;
};

/// One exchange with the model.
struct ModelTurn {
    StrategyId strategy = StrategyId::vanilla;
    std::string rendered_prompt;
    std::string raw_completion;
    std::string answer;
    std::optional<CertaintyFlag> certainty;
    /// False when the certainty flag came from the unparseable-default policy.
    bool certainty_parsed = true;
    DecodeParams decode_params;
};

struct OutcomeTally {
    std::int64_t n_cc = 0;
    std::int64_t n_cu = 0;
    std::int64_t n_ic = 0;
    std::int64_t n_iu = 0;

    std::int64_t total() const { return n_cc + n_cu + n_ic + n_iu; }
    friend bool operator==(const OutcomeTally&, const OutcomeTally&) = default;
};

OutcomeTally tally_add(OutcomeTally t, bool correct, bool certain);
/// Component-wise sum; used to combine per-worker tallies.
OutcomeTally merge(const OutcomeTally& a, const OutcomeTally& b);

struct BoundaryMetrics {
    double accuracy = 0.0;
    double unc_rate = 0.0;
    double overconfidence = 0.0;
    double conservativeness = 0.0;
    double alignment = 0.0;
    std::int64_t n = 0;
};

/// Four buckets from the (c, c_hat) pair; 0 = unsure twice, 3 = sure twice.
class ConfidenceLevel {
public:
    constexpr ConfidenceLevel() = default;
    /// Throws std::out_of_range outside 0..3.
    explicit ConfidenceLevel(int level);

    constexpr int value() const { return level_; }
    friend constexpr auto operator<=>(ConfidenceLevel, ConfidenceLevel) = default;

private:
    int level_ = 0;
};

enum class HitSource { sparse, dense, gold, corrupt };

std::string_view to_string(HitSource s);
HitSource parse_hit_source(std::string_view name);

struct RetrievalHit {
    std::string doc_id;
    std::string text;
    /// Gold and corrupt hits carry +infinity.
    double score = 0.0;
    HitSource source = HitSource::sparse;
};

inline constexpr double kGoldScore = std::numeric_limits<double>::infinity();

}  // namespace certgate
