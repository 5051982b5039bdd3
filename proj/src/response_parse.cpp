#include "certgate/response_parse.hpp"

#include <fmt/format.h>

#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "certgate/hash.hpp"
#include "certgate/text.hpp"

namespace certgate {

namespace {

bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           static_cast<unsigned char>(c) >= 0x80;
}

std::vector<std::string> words_of(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_word_char(c)) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string escape_regex(std::string_view s) {
    static const std::string kSpecial = R"(\^$.|?*+()[]{})";
    std::string out;
    for (char c : s) {
        if (kSpecial.find(c) != std::string::npos) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

// "Certainty: certain" -> \bcertainty[^A-Za-z0-9_]*certain\b, so the marker
// tolerates markdown and spacing but "uncertain" can never satisfy "certain".
std::regex marker_regex(std::string_view marker) {
    const auto words = words_of(marker);
    if (words.empty()) throw std::invalid_argument("certainty marker has no words");
    std::string pattern = R"(\b)";
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) pattern += R"([^A-Za-z0-9_]*)";
        pattern += escape_regex(words[i]);
    }
    pattern += R"(\b)";
    return std::regex(pattern, std::regex::icase);
}

// Position of the last match of re in s, or npos.
std::size_t last_match(const std::string& s, const std::regex& re) {
    std::size_t pos = std::string::npos;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        pos = static_cast<std::size_t>(it->position());
    }
    return pos;
}

std::string fold_apostrophes(std::string_view s) {
    // U+2019 RIGHT SINGLE QUOTATION MARK -> '
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
            static_cast<unsigned char>(s[i + 2]) == 0x99) {
            out.push_back('\'');
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return text::to_lower_ascii(out);
}

bool contains_phrase(const std::string& haystack, const std::string& phrase) {
    if (phrase.empty()) return false;
    std::size_t pos = haystack.find(phrase);
    while (pos != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]) || !is_word_char(phrase.front());
        const std::size_t end = pos + phrase.size();
        const bool right_ok = end == haystack.size() || !is_word_char(haystack[end]) || !is_word_char(phrase.back());
        if (left_ok && right_ok) return true;
        pos = haystack.find(phrase, pos + 1);
    }
    return false;
}

std::vector<std::string> split_lines(std::string_view raw) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (true) {
        const auto nl = raw.find('\n', start);
        auto line = raw.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

// "  **Explanation:** foo" starts section "Explanation".
bool starts_section(std::string_view line, std::string_view section) {
    std::string_view s = text::trim(line);
    while (!s.empty() && (s.front() == '*' || s.front() == '#' || s.front() == '-')) s.remove_prefix(1);
    s = text::trim(s);
    if (s.size() < section.size()) return false;
    if (text::to_lower_ascii(s.substr(0, section.size())) != text::to_lower_ascii(section)) return false;
    s.remove_prefix(section.size());
    while (!s.empty() && (s.front() == '*' || s.front() == ' ')) s.remove_prefix(1);
    return !s.empty() && s.front() == ':';
}

bool only_punct_or_space(std::string_view s) {
    for (char c : s) {
        if (is_word_char(c)) return false;
    }
    return true;
}

const std::vector<std::string>& default_hedges() {
    static const std::vector<std::string> kDefault = {
        "i don't know",    "i do not know",    "i dont know",     "not sure",        "cannot answer",
        "can't answer",    "unable to answer", "i'm unsure",      "i am unsure",     "no idea",
        "not certain",     "cannot be sure",   "can't be sure",   "cannot determine", "unable to determine",
    };
    return kDefault;
}

}  // namespace

HedgeList::HedgeList() : phrases_(default_hedges()) {}

HedgeList::HedgeList(std::vector<std::string> phrases) {
    for (auto& p : phrases) {
        auto folded = fold_apostrophes(text::trim(p));
        if (!folded.empty()) phrases_.push_back(std::move(folded));
    }
}

HedgeList HedgeList::parse(std::string_view content) {
    std::vector<std::string> phrases;
    for (const auto& line : split_lines(content)) {
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        phrases.emplace_back(t);
    }
    return HedgeList(std::move(phrases));
}

HedgeList HedgeList::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open hedge list '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

bool HedgeList::matches(std::string_view text) const {
    const auto folded = fold_apostrophes(text);
    for (const auto& p : phrases_) {
        if (contains_phrase(folded, p)) return true;
    }
    return false;
}

std::string HedgeList::fingerprint() const {
    std::string joined;
    for (const auto& p : phrases_) joined += p + "\n";
    return sha256_hex(joined);
}

std::optional<CertaintyFlag> parse_certainty(std::string_view raw, const OutputContract& contract,
                                             const HedgeList& hedges) {
    if (raw.empty()) throw std::invalid_argument("parse_certainty: empty completion");
    const std::string s(raw);
    const auto certain_at = last_match(s, marker_regex(contract.certain_marker));
    const auto uncertain_at = last_match(s, marker_regex(contract.uncertain_marker));
    if (certain_at != std::string::npos || uncertain_at != std::string::npos) {
        if (certain_at == std::string::npos) return CertaintyFlag::uncertain();
        if (uncertain_at == std::string::npos) return CertaintyFlag::certain();
        return CertaintyFlag(certain_at > uncertain_at);
    }
    if (hedges.matches(raw)) return CertaintyFlag::uncertain();
    return std::nullopt;
}

std::string parse_answer(std::string_view raw, const OutputContract& contract) {
    std::vector<std::regex> markers;
    for (const auto* m : {&contract.certain_marker, &contract.uncertain_marker}) {
        if (!words_of(*m).empty()) markers.push_back(marker_regex(*m));
    }

    std::vector<std::string> kept;
    bool in_stripped = false;
    for (auto line : split_lines(raw)) {
        bool had_marker = false;
        for (const auto& re : markers) {
            if (std::regex_search(line, re)) {
                had_marker = true;
                line = std::regex_replace(line, re, "");
            }
        }
        bool opens = false;
        for (const auto& section : contract.strip_sections) {
            if (starts_section(line, section)) opens = true;
        }
        if (opens) {
            in_stripped = true;
            continue;
        }
        if (in_stripped) {
            if (starts_section(line, "Answer")) {
                in_stripped = false;
            } else {
                continue;
            }
        }
        if (had_marker && only_punct_or_space(line)) continue;
        kept.push_back(std::move(line));
    }

    std::string joined;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (i > 0) joined.push_back('\n');
        joined += kept[i];
    }
    const auto trimmed = text::trim(joined);
    if (trimmed.empty()) return std::string(raw);
    return std::string(trimmed);
}

bool answer_is_correct(std::string_view answer, const std::vector<std::string>& gold_answers) {
    const auto norm_answer = text::normalize(answer);
    for (const auto& g : gold_answers) {
        const auto norm_gold = text::normalize(g);
        if (!norm_gold.empty()) {
            if (norm_answer.find(norm_gold) != std::string::npos) return true;
        } else {
            // Gold made only of punctuation or articles: fall back to a raw
            // case-insensitive comparison.
            const auto raw_gold = text::to_lower_ascii(text::trim(g));
            if (!raw_gold.empty() && text::to_lower_ascii(answer).find(raw_gold) != std::string::npos) return true;
        }
    }
    return false;
}

}  // namespace certgate
