#include "certgate/retrieval.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "certgate/response_parse.hpp"
#include "certgate/text.hpp"

namespace certgate {

using nlohmann::json;

namespace {

constexpr std::string_view kIndexFormat = "certgate-corpus-index";

}  // namespace

MalformedRecord::MalformedRecord(std::size_t line, const std::string& what)
    : std::runtime_error(fmt::format("line {}: {}", line, what)), line_(line) {}

void Bm25Params::validate() const {
    if (!(k1 > 0.0)) throw std::invalid_argument("bm25 k1 must be positive");
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("bm25 b must be in [0, 1]");
}

CorpusStore CorpusStore::build(std::vector<Document> docs) {
    CorpusStore s;
    s.docs_ = std::move(docs);
    s.doc_len_.reserve(s.docs_.size());
    std::int64_t total_len = 0;
    for (std::size_t i = 0; i < s.docs_.size(); ++i) {
        if (!s.by_id_.emplace(s.docs_[i].id, i).second) {
            throw DuplicateId(fmt::format("duplicate document id '{}'", s.docs_[i].id));
        }
        std::map<std::string, std::uint32_t> tf;
        const auto toks = text::tokens(s.docs_[i].text);
        for (const auto& t : toks) ++tf[t];
        for (const auto& [term, count] : tf) {
            s.postings_[term].push_back({static_cast<std::uint32_t>(i), count});
        }
        s.doc_len_.push_back(static_cast<std::int64_t>(toks.size()));
        total_len += static_cast<std::int64_t>(toks.size());
    }
    s.avg_len_ = s.docs_.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(s.docs_.size());
    return s;
}

CorpusStore CorpusStore::ingest_stream(std::istream& in) {
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    std::unordered_map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedRecord(line_no, e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("text")) {
            throw MalformedRecord(line_no, "record needs 'id' and 'text'");
        }
        Document d;
        if (rec["id"].is_string()) {
            d.id = rec["id"].get<std::string>();
        } else if (rec["id"].is_number_integer()) {
            d.id = std::to_string(rec["id"].get<std::int64_t>());
        } else {
            throw MalformedRecord(line_no, "'id' must be a string or integer");
        }
        if (!rec["text"].is_string()) throw MalformedRecord(line_no, "'text' must be a string");
        d.text = rec["text"].get<std::string>();
        if (rec.contains("title") && rec["title"].is_string() && !rec["title"].get<std::string>().empty()) {
            d.text = rec["title"].get<std::string>() + "\n" + d.text;
        }
        if (!seen.emplace(d.id, line_no).second) {
            throw DuplicateId(fmt::format("line {}: duplicate document id '{}' (first seen on line {})", line_no, d.id,
                                          seen[d.id]));
        }
        docs.push_back(std::move(d));
    }
    return build(std::move(docs));
}

CorpusStore CorpusStore::ingest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open corpus file '{}'", path));
    return ingest_stream(in);
}

void CorpusStore::save(const std::string& path) const {
    json docs = json::array();
    for (const auto& d : docs_) docs.push_back({{"id", d.id}, {"text", d.text}});
    json df = json::object();
    for (const auto& [term, plist] : postings_) df[term] = plist.size();
    json out = {{"format", kIndexFormat},
                {"version", kFormatVersion},
                {"documents", std::move(docs)},
                {"stats", {{"avg_len", avg_len_}, {"doc_len", doc_len_}, {"df", std::move(df)}}}};
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(fmt::format("cannot write index '{}'", path));
    f << out.dump() << '\n';
}

CorpusStore CorpusStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot open index '{}'", path));
    json in;
    try {
        in = json::parse(f);
    } catch (const json::parse_error& e) {
        throw IndexFormatError(fmt::format("index '{}' is not valid JSON: {}", path, e.what()));
    }
    if (!in.is_object() || in.value("format", "") != kIndexFormat) {
        throw IndexFormatError(fmt::format("'{}' is not a corpus index", path));
    }
    if (in.value("version", -1) != kFormatVersion) {
        throw IndexFormatError(fmt::format("index '{}' has version {}, expected {}", path, in.value("version", -1),
                                           kFormatVersion));
    }
    std::vector<Document> docs;
    for (const auto& d : in.at("documents")) docs.push_back({d.at("id").get<std::string>(), d.at("text").get<std::string>()});
    auto store = build(std::move(docs));

    const auto& stats = in.at("stats");
    bool consistent = stats.at("avg_len").get<double>() == store.avg_len_ &&
                      stats.at("doc_len").get<std::vector<std::int64_t>>() == store.doc_len_ &&
                      stats.at("df").size() == store.postings_.size();
    if (consistent) {
        for (const auto& [term, plist] : store.postings_) {
            const auto it = stats.at("df").find(term);
            if (it == stats.at("df").end() || it->get<std::size_t>() != plist.size()) {
                consistent = false;
                break;
            }
        }
    }
    if (!consistent) throw IndexFormatError(fmt::format("index '{}' statistics do not match its documents", path));
    return store;
}

const Document* CorpusStore::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::int64_t CorpusStore::document_frequency(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : static_cast<std::int64_t>(it->second.size());
}

const std::vector<CorpusStore::Posting>* CorpusStore::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

bool same_statistics(const CorpusStore& a, const CorpusStore& b) {
    if (a.avg_len_ != b.avg_len_ || a.doc_len_ != b.doc_len_ || a.postings_.size() != b.postings_.size()) return false;
    for (const auto& [term, plist] : a.postings_) {
        const auto it = b.postings_.find(term);
        if (it == b.postings_.end() || it->second.size() != plist.size()) return false;
        for (std::size_t i = 0; i < plist.size(); ++i) {
            if (plist[i].doc != it->second[i].doc || plist[i].tf != it->second[i].tf) return false;
        }
    }
    return true;
}

std::optional<RetrievalHit> bm25_top1(const CorpusStore& store, const Bm25Params& params, std::string_view query) {
    params.validate();
    if (store.size() == 0) return std::nullopt;
    const auto n_docs = static_cast<double>(store.size());
    const double avg = store.average_length();
    std::vector<double> scores(store.size(), 0.0);

    // Each query token contributes once per occurrence, in query order.
    for (const auto& term : text::tokens(query)) {
        const auto* plist = store.postings(term);
        if (plist == nullptr) continue;
        const auto df = static_cast<double>(plist->size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& p : *plist) {
            const auto tf = static_cast<double>(p.tf);
            const auto len = static_cast<double>(store.document_length(p.doc));
            const double norm = avg > 0.0 ? len / avg : 0.0;
            scores[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
        }
    }

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] > 0.0)) continue;
        if (!best || scores[i] > scores[*best] ||
            (scores[i] == scores[*best] && store.documents()[i].id < store.documents()[*best].id)) {
            best = i;
        }
    }
    if (!best) return std::nullopt;
    const auto& d = store.documents()[*best];
    return RetrievalHit{d.id, d.text, scores[*best], HitSource::sparse};
}

std::optional<RetrievalHit> gold_document(const QAItem& item) {
    if (!item.gold_document || item.gold_document->empty()) return std::nullopt;
    return RetrievalHit{item.id + "#gold", *item.gold_document, kGoldScore, HitSource::gold};
}

namespace {

struct Span {
    std::size_t begin;
    std::size_t end;
};

// Occurrences of needle in the normalized text, mapped back to raw byte
// ranges. With whole_tokens, matches must start and end on token boundaries.
std::vector<Span> find_spans(const text::MappedText& m, const std::string& needle, bool whole_tokens) {
    std::vector<Span> spans;
    std::size_t pos = m.normalized.find(needle);
    while (pos != std::string::npos) {
        const std::size_t end = pos + needle.size();
        const bool aligned = (pos == 0 || m.normalized[pos - 1] == ' ') &&
                             (end == m.normalized.size() || m.normalized[end] == ' ');
        if (!whole_tokens || aligned) {
            spans.push_back({m.raw_index[pos], m.raw_index[end - 1] + 1});
            pos = m.normalized.find(needle, end);
        } else {
            pos = m.normalized.find(needle, pos + 1);
        }
    }
    return spans;
}

std::string replace_spans(std::string_view raw, const std::vector<Span>& spans) {
    std::string out;
    std::size_t cursor = 0;
    for (const auto& s : spans) {
        if (s.begin < cursor) continue;
        out.append(raw.substr(cursor, s.begin - cursor));
        out.append(kCorruptionToken);
        cursor = s.end;
    }
    out.append(raw.substr(cursor));
    return out;
}

}  // namespace

std::string corrupt_document(std::string_view doc, const std::vector<std::string>& gold_answers) {
    std::vector<std::string> needles;
    const auto token_norm = text::normalize(kCorruptionToken);
    for (const auto& g : gold_answers) {
        auto n = text::normalize(g);
        // An answer the replacement token itself contains cannot be removed.
        if (n.empty() || token_norm.find(n) != std::string::npos) continue;
        needles.push_back(std::move(n));
    }
    std::stable_sort(needles.begin(), needles.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });

    std::string out(doc);
    // Whole-phrase matches first; any occurrence left inside a longer word is
    // replaced afterwards so that the correctness judge no longer fires.
    for (const bool whole_tokens : {true, false}) {
        for (int round = 0; round < 8; ++round) {
            bool changed = false;
            for (const auto& n : needles) {
                const auto spans = find_spans(text::normalize_mapped(out), n, whole_tokens);
                if (spans.empty()) continue;
                out = replace_spans(out, spans);
                changed = true;
            }
            if (!changed) break;
        }
    }
    return out;
}

std::optional<RetrievalHit> dense_top1(const DenseClientConfig& config, std::string_view query) {
    httplib::Client cli(config.base_url);
    const auto secs = static_cast<time_t>(config.timeout_seconds);
    const auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    const json body = {{"query", std::string(query)}, {"k", 1}};
    auto res = cli.Post(config.path, body.dump(), "application/json");
    if (!res) {
        throw RetrieverUnavailable(fmt::format("dense retriever at {} unreachable: {}", config.base_url,
                                               httplib::to_string(res.error())));
    }
    if (res->status != 200) {
        throw RetrieverUnavailable(fmt::format("dense retriever returned HTTP {}", res->status));
    }
    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw MalformedResponse(fmt::format("dense retriever response is not JSON: {}", e.what()));
    }
    if (!parsed.is_object() || !parsed.contains("hits") || !parsed["hits"].is_array()) {
        throw MalformedResponse("dense retriever response lacks a 'hits' array");
    }
    if (parsed["hits"].empty()) return std::nullopt;
    const auto& h = parsed["hits"][0];
    if (!h.is_object() || !h.contains("id") || !h.contains("text") || !h.contains("score") || !h["text"].is_string() ||
        !h["score"].is_number()) {
        throw MalformedResponse("dense retriever hit needs id, score and text");
    }
    RetrievalHit hit;
    hit.doc_id = h["id"].is_string() ? h["id"].get<std::string>() : h["id"].dump();
    hit.text = h["text"].get<std::string>();
    hit.score = h["score"].get<double>();
    hit.source = HitSource::dense;
    if (hit.text.empty() || !std::isfinite(hit.score)) {
        throw MalformedResponse("dense retriever hit has empty text or non-finite score");
    }
    return hit;
}

SparseRetriever::SparseRetriever(std::shared_ptr<const CorpusStore> store, Bm25Params params)
    : store_(std::move(store)), params_(params) {
    params_.validate();
}

std::optional<RetrievalHit> SparseRetriever::fetch(const QAItem& item) {
    return bm25_top1(*store_, params_, item.question);
}

std::optional<RetrievalHit> DenseRetriever::fetch(const QAItem& item) { return dense_top1(config_, item.question); }

std::optional<RetrievalHit> CorruptRetriever::fetch(const QAItem& item) {
    auto hit = gold_document(item);
    if (!hit) return std::nullopt;
    hit->doc_id = item.id + "#corrupt";
    hit->text = corrupt_document(hit->text, item.gold_answers);
    hit->source = HitSource::corrupt;
    if (hit->text.empty()) return std::nullopt;
    return hit;
}

PrecisionAtOne precision_at_1(std::span<const QAItem> items, Retriever& retriever) {
    PrecisionAtOne p;
    std::int64_t hits_with_answer = 0;
    for (const auto& item : items) {
        ++p.questions;
        const auto hit = retriever.top1(item);
        if (!hit) continue;
        ++p.with_hit;
        if (answer_is_correct(hit->text, item.gold_answers)) ++hits_with_answer;
    }
    p.precision = p.questions == 0 ? 0.0 : static_cast<double>(hits_with_answer) / static_cast<double>(p.questions);
    return p;
}

}  // namespace certgate
