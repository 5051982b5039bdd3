#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "certgate/core.hpp"

namespace certgate {

class DatasetError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Line-delimited JSON: {"id", "question", "answers": [...], "gold_document"?}.
/// Validates every item and rejects duplicate ids.
std::vector<QAItem> load_dataset(const std::string& path);
std::vector<QAItem> read_dataset(std::istream& in);
void write_dataset(std::ostream& out, const std::vector<QAItem>& items);
void save_dataset(const std::string& path, const std::vector<QAItem>& items);

enum class SourceFormat {
    /// DPR retriever JSON: [{"question", "answers", "positive_ctxs": [{"title", "text"}]}]
    dpr_json,
    /// DPR question file: `question<TAB>["answer", ...]` per line.
    dpr_qa_tsv,
    /// NQ-open JSONL: {"question", "answer": [...]}
    nq_open_jsonl,
    /// HotpotQA JSON: [{"_id", "question", "answer", "supporting_facts", "context"}]
    hotpot_json,
};

SourceFormat parse_source_format(std::string_view name);

struct ConvertOptions {
    std::string id_prefix = "q";
    /// Answers with more tokens than this are not short answers.
    std::size_t max_answer_tokens = 5;
};

struct ConvertStats {
    std::size_t read = 0;
    std::size_t kept = 0;
    std::size_t dropped_no_short_answer = 0;
};

/// Maps a public dataset export to QAItems, keeping only questions that have
/// at least one short answer and using the short answers as labels.
std::vector<QAItem> convert_dataset(std::istream& in, SourceFormat format, const ConvertOptions& opts,
                                    ConvertStats* stats = nullptr);

/// Seeded subset of `n` items (all when n >= eligible count), returned in
/// dataset order. With require_gold only items carrying a gold document are
/// eligible. Identical across platforms for the same seed.
std::vector<QAItem> sample_dataset(const std::vector<QAItem>& items, std::size_t n, std::uint64_t seed,
                                   bool require_gold);

}  // namespace certgate
