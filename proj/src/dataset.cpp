#include "certgate/dataset.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "certgate/text.hpp"

namespace certgate {

using nlohmann::json;

namespace {

std::string id_of(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw DatasetError("'id' must be a string or integer");
}

std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::vector<std::string> short_answers(const std::vector<std::string>& answers, std::size_t max_tokens) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& a : answers) {
        const auto t = std::string(text::trim(a));
        if (t.empty() || word_count(t) > max_tokens) continue;
        if (seen.insert(t).second) out.push_back(t);
    }
    return out;
}

// Python list-of-strings literal as found in DPR question files, e.g.
// ['Paris', "Tom's"]. JSON input is handled by the caller first.
std::vector<std::string> parse_python_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    };
    skip_ws();
    if (i >= s.size() || s[i] != '[') throw DatasetError("answer list must start with '['");
    ++i;
    while (true) {
        skip_ws();
        if (i >= s.size()) throw DatasetError("unterminated answer list");
        if (s[i] == ']') break;
        if (s[i] == ',') {
            ++i;
            continue;
        }
        const char quote = s[i];
        if (quote != '\'' && quote != '"') throw DatasetError("answer list entries must be quoted strings");
        ++i;
        std::string cur;
        while (i < s.size() && s[i] != quote) {
            if (s[i] == '\\' && i + 1 < s.size()) {
                ++i;
                switch (s[i]) {
                    case 'n': cur.push_back('\n'); break;
                    case 't': cur.push_back('\t'); break;
                    default: cur.push_back(s[i]); break;
                }
            } else {
                cur.push_back(s[i]);
            }
            ++i;
        }
        if (i >= s.size()) throw DatasetError("unterminated string in answer list");
        ++i;
        out.push_back(std::move(cur));
    }
    return out;
}

std::vector<std::string> string_list(const json& v) {
    if (v.is_string()) return {v.get<std::string>()};
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (e.is_string()) out.push_back(e.get<std::string>());
    }
    return out;
}

}  // namespace

std::vector<QAItem> read_dataset(std::istream& in) {
    std::vector<QAItem> items;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            const auto rec = json::parse(line);
            QAItem item;
            item.id = id_of(rec.at("id"));
            item.question = rec.at("question").get<std::string>();
            item.gold_answers = rec.at("answers").get<std::vector<std::string>>();
            if (rec.contains("gold_document") && rec["gold_document"].is_string()) {
                item.gold_document = rec["gold_document"].get<std::string>();
            }
            item.validate();
            if (!ids.insert(item.id).second) throw DatasetError(fmt::format("duplicate item id '{}'", item.id));
            items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw DatasetError(fmt::format("dataset line {}: {}", line_no, e.what()));
        } catch (const std::invalid_argument& e) {
            throw DatasetError(fmt::format("dataset line {}: {}", line_no, e.what()));
        } catch (const DatasetError& e) {
            throw DatasetError(fmt::format("dataset line {}: {}", line_no, e.what()));
        }
    }
    return items;
}

std::vector<QAItem> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError(fmt::format("cannot open dataset '{}'", path));
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<QAItem>& items) {
    for (const auto& item : items) {
        json rec = {{"id", item.id}, {"question", item.question}, {"answers", item.gold_answers}};
        if (item.gold_document) rec["gold_document"] = *item.gold_document;
        out << rec.dump() << '\n';
    }
}

void save_dataset(const std::string& path, const std::vector<QAItem>& items) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError(fmt::format("cannot write dataset '{}'", path));
    write_dataset(out, items);
}

SourceFormat parse_source_format(std::string_view name) {
    if (name == "dpr-json") return SourceFormat::dpr_json;
    if (name == "dpr-qa-tsv") return SourceFormat::dpr_qa_tsv;
    if (name == "nq-open") return SourceFormat::nq_open_jsonl;
    if (name == "hotpot") return SourceFormat::hotpot_json;
    throw std::invalid_argument(fmt::format("unknown source format '{}'", name));
}

std::vector<QAItem> convert_dataset(std::istream& in, SourceFormat format, const ConvertOptions& opts,
                                    ConvertStats* stats) {
    ConvertStats local;
    std::vector<QAItem> out;
    auto add = [&](std::string id, std::string question, const std::vector<std::string>& answers,
                   std::optional<std::string> gold) {
        ++local.read;
        auto kept = short_answers(answers, opts.max_answer_tokens);
        if (kept.empty() || text::trim(question).empty()) {
            ++local.dropped_no_short_answer;
            return;
        }
        QAItem item{std::move(id), std::string(text::trim(question)), std::move(kept), std::move(gold)};
        if (item.gold_document && item.gold_document->empty()) item.gold_document.reset();
        out.push_back(std::move(item));
        ++local.kept;
    };
    auto next_id = [&] { return fmt::format("{}{}", opts.id_prefix, local.read); };

    switch (format) {
        case SourceFormat::dpr_json: {
            const auto doc = json::parse(in);
            for (const auto& rec : doc) {
                std::optional<std::string> gold;
                if (rec.contains("positive_ctxs") && !rec["positive_ctxs"].empty()) {
                    gold = rec["positive_ctxs"][0].value("text", std::string());
                }
                add(next_id(), rec.at("question").get<std::string>(), string_list(rec.at("answers")), gold);
            }
            break;
        }
        case SourceFormat::dpr_qa_tsv: {
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (text::trim(line).empty()) continue;
                const auto tab = line.rfind('\t');
                if (tab == std::string::npos) throw DatasetError("dpr-qa-tsv line lacks a tab separator");
                const auto list = line.substr(tab + 1);
                std::vector<std::string> answers;
                const auto parsed = json::parse(list, nullptr, false);
                answers = parsed.is_discarded() ? parse_python_list(list) : string_list(parsed);
                add(next_id(), line.substr(0, tab), answers, std::nullopt);
            }
            break;
        }
        case SourceFormat::nq_open_jsonl: {
            std::string line;
            while (std::getline(in, line)) {
                if (text::trim(line).empty()) continue;
                const auto rec = json::parse(line);
                const auto& answers = rec.contains("answer") ? rec["answer"] : rec.at("answers");
                add(next_id(), rec.at("question").get<std::string>(), string_list(answers), std::nullopt);
            }
            break;
        }
        case SourceFormat::hotpot_json: {
            const auto doc = json::parse(in);
            for (const auto& rec : doc) {
                std::set<std::string> support;
                if (rec.contains("supporting_facts")) {
                    for (const auto& f : rec["supporting_facts"]) support.insert(f.at(0).get<std::string>());
                }
                std::string gold;
                if (rec.contains("context")) {
                    for (const auto& para : rec["context"]) {
                        const auto title = para.at(0).get<std::string>();
                        if (!support.contains(title)) continue;
                        std::string body;
                        for (const auto& sent : para.at(1)) body += sent.get<std::string>();
                        if (!gold.empty()) gold += "\n";
                        gold += title + ": " + std::string(text::trim(body));
                    }
                }
                std::string id = rec.contains("_id") ? id_of(rec["_id"]) : next_id();
                add(std::move(id), rec.at("question").get<std::string>(), string_list(rec.at("answer")),
                    gold.empty() ? std::nullopt : std::optional<std::string>(gold));
            }
            break;
        }
    }
    if (stats) *stats = local;
    return out;
}

std::vector<QAItem> sample_dataset(const std::vector<QAItem>& items, std::size_t n, std::uint64_t seed,
                                   bool require_gold) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!require_gold || (items[i].gold_document && !items[i].gold_document->empty())) eligible.push_back(i);
    }
    if (n < eligible.size()) {
        // Partial Fisher-Yates. std::uniform_int_distribution and std::shuffle
        // are implementation-defined, so draw with rejection sampling on the
        // fully specified mt19937_64 stream instead.
        std::mt19937_64 rng(seed);
        auto below = [&rng](std::uint64_t bound) {
            const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                        std::numeric_limits<std::uint64_t>::max() % bound;
            std::uint64_t x;
            do {
                x = rng();
            } while (x >= limit);
            return x % bound;
        };
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = i + static_cast<std::size_t>(below(eligible.size() - i));
            std::swap(eligible[i], eligible[j]);
        }
        eligible.resize(n);
        std::sort(eligible.begin(), eligible.end());
    }
    std::vector<QAItem> out;
    out.reserve(eligible.size());
    for (const auto i : eligible) out.push_back(items[i]);
    return out;
}

}  // namespace certgate
