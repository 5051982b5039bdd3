#include "certgate/text.hpp"

#include <cctype>

namespace certgate::text {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

MappedText normalize_mapped(std::string_view raw) {
    // Split on whitespace first, strip punctuation inside each word, then drop
    // articles. Punctuation removal joins its neighbours ("rock-n-roll" ->
    // "rocknroll").
    MappedText out;
    std::string word;
    std::vector<std::size_t> word_index;

    auto flush = [&] {
        if (!word.empty() && !is_article(word)) {
            if (!out.normalized.empty()) {
                out.normalized.push_back(' ');
                out.raw_index.push_back(std::string::npos);
            }
            out.normalized += word;
            out.raw_index.insert(out.raw_index.end(), word_index.begin(), word_index.end());
        }
        word.clear();
        word_index.clear();
    };

    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto c = static_cast<unsigned char>(raw[i]);
        if (is_space(c)) {
            flush();
            continue;
        }
        if (c < 0x80 && std::ispunct(c)) continue;
        word.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
        word_index.push_back(i);
    }
    flush();
    return out;
}

std::string normalize(std::string_view raw) { return normalize_mapped(raw).normalized; }

std::vector<std::string> tokens(std::string_view raw) {
    std::vector<std::string> out;
    const std::string norm = normalize(raw);
    std::size_t start = 0;
    while (start < norm.size()) {
        auto end = norm.find(' ', start);
        if (end == std::string::npos) end = norm.size();
        out.emplace_back(norm.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

}  // namespace certgate::text
