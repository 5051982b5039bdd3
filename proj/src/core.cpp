#include "certgate/core.hpp"

#include <array>
#include <fmt/format.h>

namespace certgate {

void QAItem::validate() const {
    if (gold_answers.empty()) {
        throw std::invalid_argument(fmt::format("item '{}' has no gold answers", id));
    }
    for (const auto& a : gold_answers) {
        if (a.empty()) {
            throw std::invalid_argument(fmt::format("item '{}' has an empty gold answer", id));
        }
    }
}

namespace {

constexpr std::array<std::pair<StrategyId, std::string_view>, 8> kStrategyNames{{
    {StrategyId::vanilla, "vanilla"},
    {StrategyId::punish, "punish"},
    {StrategyId::challenge, "challenge"},
    {StrategyId::step_by_step, "step_by_step"},
    {StrategyId::generate, "generate"},
    {StrategyId::explain, "explain"},
    {StrategyId::punish_explain, "punish_explain"},
    {StrategyId::ra_answer, "ra_answer"},
}};

constexpr std::array<std::pair<HitSource, std::string_view>, 4> kSourceNames{{
    {HitSource::sparse, "sparse"},
    {HitSource::dense, "dense"},
    {HitSource::gold, "gold"},
    {HitSource::corrupt, "corrupt"},
}};

}  // namespace

std::string_view to_string(StrategyId id) {
    for (const auto& [k, v] : kStrategyNames) {
        if (k == id) return v;
    }
    return "unknown";
}

StrategyId parse_strategy(std::string_view name) {
    for (const auto& [k, v] : kStrategyNames) {
        if (v == name) return k;
    }
    throw std::invalid_argument(fmt::format("unknown strategy '{}'", name));
}

std::string_view to_string(HitSource s) {
    for (const auto& [k, v] : kSourceNames) {
        if (k == s) return v;
    }
    return "unknown";
}

HitSource parse_hit_source(std::string_view name) {
    for (const auto& [k, v] : kSourceNames) {
        if (v == name) return k;
    }
    throw std::invalid_argument(fmt::format("unknown retriever '{}'", name));
}

void DecodeParams::validate() const {
    if (max_output_tokens < 1) {
        throw std::invalid_argument("max_output_tokens must be >= 1");
    }
    if (!(temperature >= 0.0)) {
        throw std::invalid_argument("temperature must be >= 0");
    }
}

OutcomeTally tally_add(OutcomeTally t, bool correct, bool certain) {
    if (correct) {
        certain ? ++t.n_cc : ++t.n_cu;
    } else {
        certain ? ++t.n_ic : ++t.n_iu;
    }
    return t;
}

OutcomeTally merge(const OutcomeTally& a, const OutcomeTally& b) {
    return {a.n_cc + b.n_cc, a.n_cu + b.n_cu, a.n_ic + b.n_ic, a.n_iu + b.n_iu};
}

ConfidenceLevel::ConfidenceLevel(int level) : level_(level) {
    if (level < 0 || level > 3) {
        throw std::out_of_range(fmt::format("confidence level {} outside 0..3", level));
    }
}

}  // namespace certgate
