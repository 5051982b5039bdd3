#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "certgate/core.hpp"
#include "certgate/prompts.hpp"

namespace certgate {

/// Phrases that signal the model is not sure when no certainty marker is
/// present. Matched case-insensitively on word boundaries.
class HedgeList {
public:
    HedgeList();
    explicit HedgeList(std::vector<std::string> phrases);

    /// Plain text, one phrase per line; blank lines and '#' comments skipped.
    static HedgeList load(const std::string& path);
    static HedgeList parse(std::string_view content);

    const std::vector<std::string>& phrases() const { return phrases_; }
    bool matches(std::string_view text) const;
    std::string fingerprint() const;

private:
    std::vector<std::string> phrases_;
};

/// nullopt means unparseable: neither marker nor any hedge phrase was found.
/// When both markers occur, the last one wins. Throws std::invalid_argument
/// on empty input.
std::optional<CertaintyFlag> parse_certainty(std::string_view raw, const OutputContract& contract,
                                             const HedgeList& hedges = HedgeList());

/// The completion without certainty markers and without the contract's
/// stripped sections. Never empty: returns raw unchanged when stripping
/// leaves nothing.
std::string parse_answer(std::string_view raw, const OutputContract& contract);

/// True iff the normalized answer contains some normalized gold answer.
bool answer_is_correct(std::string_view answer, const std::vector<std::string>& gold_answers);

}  // namespace certgate
