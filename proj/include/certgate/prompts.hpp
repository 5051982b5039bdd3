#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "certgate/core.hpp"

namespace certgate {

/// The sentence the punish strategies add to the vanilla prompt.
inline constexpr std::string_view kPunishSentence =
    "You will be punished if the answer is not right but you say certain";

/// Markers the response parser looks for in a completion.
struct OutputContract {
    std::string certain_marker = "Certainty: certain";
    std::string uncertain_marker = "Certainty: uncertain";
    /// Section headers ("Explanation", "Document", ...) whose content is not
    /// part of the answer.
    std::vector<std::string> strip_sections;
    std::string description;

    friend bool operator==(const OutputContract&, const OutputContract&) = default;
};

struct PromptTemplate {
    StrategyId strategy = StrategyId::vanilla;
    std::string body;
    OutputContract output_contract;
    /// Second-round prompt of the challenge protocol. Placeholders:
    /// {previous_prompt} and {answer}.
    std::optional<std::string> followup;

    /// Throws TemplateError when placeholders do not match the strategy.
    void validate() const;
    friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

class TemplateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class MissingDocument : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class UnexpectedDocument : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Literal placeholder substitution. A document is required for ra_answer
/// and rejected for every other strategy.
std::string render(const PromptTemplate& t, std::string_view question,
                   std::optional<std::string_view> document = std::nullopt);

/// Builds the second turn of the challenge protocol from the first turn.
/// Uses the template's followup text, or the built-in one when absent.
std::string challenge_followup(const ModelTurn& prior_turn, const PromptTemplate& challenge);

/// All eight templates, keyed by strategy.
class TemplateSet {
public:
    TemplateSet() = default;
    explicit TemplateSet(std::map<StrategyId, PromptTemplate> templates);

    static TemplateSet defaults();
    /// Multi-document YAML: one document per strategy with keys
    /// `strategy`, `body`, `output_contract` and optionally `followup`.
    static TemplateSet from_yaml(std::string_view yaml);
    static TemplateSet load(const std::string& path);
    std::string to_yaml() const;

    /// Throws std::out_of_range when the strategy has no template.
    const PromptTemplate& at(StrategyId id) const;
    bool contains(StrategyId id) const { return templates_.contains(id); }
    const std::map<StrategyId, PromptTemplate>& all() const { return templates_; }

    /// Hex SHA-256 of to_yaml(); recorded in run ledgers.
    std::string fingerprint() const;

private:
    std::map<StrategyId, PromptTemplate> templates_;
};

}  // namespace certgate
