#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace certgate::text {

/// Short-answer QA normalization: lowercase (ASCII), drop ASCII punctuation,
/// drop the articles a/an/the, collapse runs of whitespace to one space and
/// trim. Non-ASCII bytes pass through untouched.
std::string normalize(std::string_view raw);

/// Whitespace tokens of normalize(raw).
std::vector<std::string> tokens(std::string_view raw);

/// normalize() output plus, for every byte of it, the index of the raw byte it
/// came from. Separator spaces map to npos.
struct MappedText {
    std::string normalized;
    std::vector<std::size_t> raw_index;
};

MappedText normalize_mapped(std::string_view raw);

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);

}  // namespace certgate::text
