#include "certgate/prompts.hpp"

#include <yaml-cpp/yaml.h>

#include <fmt/format.h>

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "certgate/hash.hpp"

namespace certgate {

namespace {

const std::regex& placeholder_re() {
    static const std::regex re(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
    return re;
}

std::set<std::string> placeholders(const std::string& body) {
    std::set<std::string> out;
    for (auto it = std::sregex_iterator(body.begin(), body.end(), placeholder_re()); it != std::sregex_iterator();
         ++it) {
        out.insert((*it)[1].str());
    }
    return out;
}

// Single left-to-right pass so that substituted text is never rescanned.
std::string substitute(std::string_view body, const std::map<std::string, std::string_view>& values) {
    std::string out;
    out.reserve(body.size());
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] == '{') {
            const auto close = body.find('}', i);
            if (close != std::string_view::npos) {
                const auto name = std::string(body.substr(i + 1, close - i - 1));
                if (auto v = values.find(name); v != values.end()) {
                    out += v->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(body[i++]);
    }
    return out;
}

constexpr std::string_view kFormatInstruction =
    "Reply in the following format, ending with the certainty line:\n"
    "Answer: <your answer>\n"
    "Certainty: certain OR Certainty: uncertain";

constexpr std::string_view kVanillaHead =
    "Answer the following question based on your internal knowledge with one or a few words.\n"
    "If you are sure the answer is accurate and correct, say certain after the answer. "
    "If you are not confident with the answer, say uncertain.\n";

constexpr std::string_view kExplainHead =
    "Answer the following question based on your internal knowledge with one or a few words, "
    "and explain the reason for your answer.\n"
    "If you are sure the answer is accurate and correct, say certain after the answer. "
    "If you are not confident with the answer, say uncertain.\n";

constexpr std::string_view kExplainFormat =
    "Reply in the following format, ending with the certainty line:\n"
    "Answer: <your answer>\n"
    "Explanation: <why you gave this answer>\n"
    "Certainty: certain OR Certainty: uncertain";

constexpr std::string_view kChallengeFollowup =
    "{previous_prompt}\n"
    "Your answer: {answer}\n\n"
    "I challenge the correctness of your answer. Are you really sure your answer is right? "
    "Reconsider it carefully.\n"
    "If you are still sure your answer is correct, reply \"Certainty: certain\". "
    "Otherwise reply \"Certainty: uncertain\".";

OutputContract contract(std::vector<std::string> strip, std::string description) {
    OutputContract c;
    c.strip_sections = std::move(strip);
    c.description = std::move(description);
    return c;
}

PromptTemplate make(StrategyId id, std::string body, OutputContract c) {
    PromptTemplate t;
    t.strategy = id;
    t.body = std::move(body);
    t.output_contract = std::move(c);
    return t;
}

std::string punish_line() { return fmt::format("{}.\n", kPunishSentence); }

}  // namespace

void PromptTemplate::validate() const {
    const auto found = placeholders(body);
    if (!found.contains("question")) {
        throw TemplateError(fmt::format("template '{}' lacks {{question}}", to_string(strategy)));
    }
    const bool wants_doc = strategy == StrategyId::ra_answer;
    if (wants_doc && !found.contains("document")) {
        throw TemplateError("template 'ra_answer' lacks {document}");
    }
    for (const auto& name : found) {
        if (name == "question" || (wants_doc && name == "document")) continue;
        throw TemplateError(fmt::format("template '{}' has unknown placeholder {{{}}}", to_string(strategy), name));
    }
    if (strategy == StrategyId::punish || strategy == StrategyId::punish_explain) {
        if (body.find(kPunishSentence) == std::string::npos) {
            throw TemplateError(fmt::format("template '{}' must contain the punish sentence", to_string(strategy)));
        }
    }
    if (followup) {
        if (strategy != StrategyId::challenge) {
            throw TemplateError(fmt::format("template '{}' cannot carry a followup", to_string(strategy)));
        }
        for (const auto& name : placeholders(*followup)) {
            if (name != "previous_prompt" && name != "answer") {
                throw TemplateError(fmt::format("challenge followup has unknown placeholder {{{}}}", name));
            }
        }
    }
    if (elicits_certainty(strategy) &&
        (output_contract.certain_marker.empty() || output_contract.uncertain_marker.empty())) {
        throw TemplateError(fmt::format("template '{}' needs both certainty markers", to_string(strategy)));
    }
}

std::string render(const PromptTemplate& t, std::string_view question, std::optional<std::string_view> document) {
    const bool wants_doc = t.strategy == StrategyId::ra_answer;
    if (wants_doc && !document) throw MissingDocument("ra_answer template requires a document");
    if (!wants_doc && document) {
        throw UnexpectedDocument(fmt::format("template '{}' does not take a document", to_string(t.strategy)));
    }
    std::map<std::string, std::string_view> values{{"question", question}};
    if (document) values.emplace("document", *document);
    return substitute(t.body, values);
}

std::string challenge_followup(const ModelTurn& prior_turn, const PromptTemplate& challenge) {
    const std::string_view body = challenge.followup ? std::string_view(*challenge.followup) : kChallengeFollowup;
    return substitute(body, {{"previous_prompt", prior_turn.rendered_prompt}, {"answer", prior_turn.answer}});
}

TemplateSet::TemplateSet(std::map<StrategyId, PromptTemplate> templates) : templates_(std::move(templates)) {
    for (const auto& [id, t] : templates_) {
        if (t.strategy != id) throw TemplateError("template keyed under the wrong strategy");
        t.validate();
    }
}

TemplateSet TemplateSet::defaults() {
    const std::string q = "\nQuestion: {question}\n";
    const std::string fmt_line(kFormatInstruction);
    const std::string explain_fmt(kExplainFormat);

    std::map<StrategyId, PromptTemplate> m;
    m[StrategyId::vanilla] = make(StrategyId::vanilla, std::string(kVanillaHead) + fmt_line + q,
                                  contract({}, "Final line 'Certainty: certain' or 'Certainty: uncertain'."));
    m[StrategyId::punish] =
        make(StrategyId::punish, std::string(kVanillaHead) + punish_line() + fmt_line + q,
             contract({}, "Final line 'Certainty: certain' or 'Certainty: uncertain'."));

    auto challenge = make(StrategyId::challenge, std::string(kVanillaHead) + fmt_line + q,
                          contract({}, "Both turns end with 'Certainty: certain' or 'Certainty: uncertain'; "
                                       "the second turn's certainty is final."));
    challenge.followup = std::string(kChallengeFollowup);
    m[StrategyId::challenge] = std::move(challenge);

    m[StrategyId::step_by_step] = make(
        StrategyId::step_by_step,
        "Answer the following question based on your internal knowledge with one or a few words. "
        "Think step by step.\n"
        "Step 1: answer the question.\n"
        "Step 2: judge whether your answer is right. If you are sure the answer is accurate and correct, "
        "say certain. If you are not confident with the answer, say uncertain.\n"
        "Reply in the following format, ending with the certainty line:\n"
        "Answer: <your answer>\n"
        "Reasoning: <your step 2 judgement>\n"
        "Certainty: certain OR Certainty: uncertain\n" +
            q,
        contract({"Reasoning", "Step 2"}, "Answer, then reasoning, then the certainty line."));

    m[StrategyId::generate] = make(
        StrategyId::generate,
        "First generate a short document that helps answer the following question, then answer the question "
        "with one or a few words.\n"
        "If you are sure the answer is accurate and correct, say certain after the answer. "
        "If you are not confident with the answer, say uncertain.\n"
        "Reply in the following format, ending with the certainty line:\n"
        "Document: <short document>\n"
        "Answer: <your answer>\n"
        "Certainty: certain OR Certainty: uncertain\n" +
            q,
        contract({"Document"}, "Generated document, answer, then the certainty line."));

    m[StrategyId::explain] = make(StrategyId::explain, std::string(kExplainHead) + explain_fmt + q,
                                  contract({"Explanation"}, "Answer, explanation, then the certainty line."));
    m[StrategyId::punish_explain] =
        make(StrategyId::punish_explain, std::string(kExplainHead) + punish_line() + explain_fmt + q,
             contract({"Explanation"}, "Answer, explanation, then the certainty line."));

    OutputContract ra_contract;
    ra_contract.description = "Free-form answer; no certainty line is required.";
    m[StrategyId::ra_answer] = make(
        StrategyId::ra_answer,
        "Given the following information:\n{document}\n\n"
        "Answer the following question with one or a few words. The information may or may not help; "
        "decide yourself whether to rely on your own knowledge or on the information above.\n"
        "Question: {question}\n"
        "Answer:",
        std::move(ra_contract));
    return TemplateSet(std::move(m));
}

TemplateSet TemplateSet::from_yaml(std::string_view yaml) {
    std::vector<YAML::Node> docs;
    try {
        docs = YAML::LoadAll(std::string(yaml));
    } catch (const YAML::Exception& e) {
        throw TemplateError(fmt::format("template file is not valid YAML: {}", e.what()));
    }
    std::map<StrategyId, PromptTemplate> m;
    for (const auto& doc : docs) {
        if (!doc.IsMap()) throw TemplateError("each template document must be a mapping");
        if (!doc["strategy"] || !doc["body"]) throw TemplateError("template document needs 'strategy' and 'body'");
        PromptTemplate t;
        const auto name = doc["strategy"].as<std::string>();
        try {
            t.strategy = parse_strategy(name);
        } catch (const std::invalid_argument&) {
            throw TemplateError(fmt::format("unknown strategy id '{}' in template file", name));
        }
        t.body = doc["body"].as<std::string>();
        if (const auto c = doc["output_contract"]) {
            if (c["certain_marker"]) t.output_contract.certain_marker = c["certain_marker"].as<std::string>();
            if (c["uncertain_marker"]) t.output_contract.uncertain_marker = c["uncertain_marker"].as<std::string>();
            if (c["strip_sections"]) t.output_contract.strip_sections = c["strip_sections"].as<std::vector<std::string>>();
            if (c["description"]) t.output_contract.description = c["description"].as<std::string>();
        }
        if (doc["followup"]) t.followup = doc["followup"].as<std::string>();
        if (m.contains(t.strategy)) throw TemplateError(fmt::format("strategy '{}' defined twice", name));
        m.emplace(t.strategy, std::move(t));
    }
    return TemplateSet(std::move(m));
}

TemplateSet TemplateSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TemplateError(fmt::format("cannot open template file '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return from_yaml(ss.str());
}

namespace {

// yaml-cpp always clips literal blocks to one trailing newline, so text
// without one has to go out quoted to survive a round trip.
YAML::EMITTER_MANIP text_style(const std::string& s) {
    return !s.empty() && s.back() == '\n' && s.find("\n\n", s.size() - 2) == std::string::npos ? YAML::Literal
                                                                                            : YAML::DoubleQuoted;
}

}  // namespace

std::string TemplateSet::to_yaml() const {
    std::string out;
    for (const auto& [id, t] : templates_) {
        YAML::Emitter e;
        e << YAML::BeginMap;
        e << YAML::Key << "strategy" << YAML::Value << std::string(to_string(id));
        e << YAML::Key << "body" << YAML::Value << text_style(t.body) << t.body;
        e << YAML::Key << "output_contract" << YAML::Value << YAML::BeginMap;
        e << YAML::Key << "certain_marker" << YAML::Value << t.output_contract.certain_marker;
        e << YAML::Key << "uncertain_marker" << YAML::Value << t.output_contract.uncertain_marker;
        e << YAML::Key << "strip_sections" << YAML::Value << YAML::Flow << t.output_contract.strip_sections;
        e << YAML::Key << "description" << YAML::Value << t.output_contract.description;
        e << YAML::EndMap;
        if (t.followup) e << YAML::Key << "followup" << YAML::Value << text_style(*t.followup) << *t.followup;
        e << YAML::EndMap;
        out += "---\n";
        out += e.c_str();
        out += "\n";
    }
    return out;
}

const PromptTemplate& TemplateSet::at(StrategyId id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) {
        throw std::out_of_range(fmt::format("no template for strategy '{}'", to_string(id)));
    }
    return it->second;
}

std::string TemplateSet::fingerprint() const { return sha256_hex(to_yaml()); }

}  // namespace certgate
