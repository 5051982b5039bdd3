#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "certgate/core.hpp"

namespace certgate {

class DuplicateId : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class MalformedRecord : public std::runtime_error {
public:
    MalformedRecord(std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IndexFormatError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RetrieverUnavailable : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class MalformedResponse : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Document {
    std::string id;
    std::string text;
};

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
    void validate() const;
};

/// Documents plus the term statistics BM25 needs. Immutable once built.
class CorpusStore {
public:
    static constexpr int kFormatVersion = 1;

    CorpusStore() = default;
    /// Throws DuplicateId.
    static CorpusStore build(std::vector<Document> docs);

    /// Line-delimited JSON records {"id": ..., "text": ...}. Blank lines are
    /// skipped. Throws DuplicateId or MalformedRecord.
    static CorpusStore ingest(const std::string& path);
    static CorpusStore ingest_stream(std::istream& in);

    /// Single JSON file with a format/version header. load() rebuilds the
    /// statistics and fails fast on a version or statistics mismatch.
    void save(const std::string& path) const;
    static CorpusStore load(const std::string& path);

    std::size_t size() const { return docs_.size(); }
    const std::vector<Document>& documents() const { return docs_; }
    const Document* find(std::string_view id) const;

    std::int64_t document_frequency(const std::string& term) const;
    std::int64_t document_length(std::size_t doc_index) const { return doc_len_[doc_index]; }
    double average_length() const { return avg_len_; }

    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };
    const std::vector<Posting>* postings(const std::string& term) const;

    friend bool same_statistics(const CorpusStore& a, const CorpusStore& b);

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::vector<std::int64_t> doc_len_;
    double avg_len_ = 0.0;
    std::map<std::string, std::vector<Posting>> postings_;
};

/// Highest-scoring Okapi BM25 document for the query; ties go to the
/// lexicographically smallest doc_id. nullopt when every score is zero.
std::optional<RetrievalHit> bm25_top1(const CorpusStore& store, const Bm25Params& params, std::string_view query);

std::optional<RetrievalHit> gold_document(const QAItem& item);

/// Replaces every occurrence of each gold answer with "Tom", longest answer
/// first, so that the result no longer contains any gold answer under the
/// correctness judge.
std::string corrupt_document(std::string_view doc, const std::vector<std::string>& gold_answers);

inline constexpr std::string_view kCorruptionToken = "Tom";

struct DenseClientConfig {
    /// Scheme, host and port, e.g. "http://127.0.0.1:8088".
    std::string base_url;
    std::string path = "/retrieve";
    double timeout_seconds = 10.0;
};

/// POST {query, k: 1} to the dense retrieval service; first hit or nullopt.
/// Throws RetrieverUnavailable or MalformedResponse.
std::optional<RetrievalHit> dense_top1(const DenseClientConfig& config, std::string_view query);

/// Per-item top-1 document source used by the pipeline. Counts calls.
class Retriever {
public:
    virtual ~Retriever() = default;

    std::optional<RetrievalHit> top1(const QAItem& item) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return fetch(item);
    }
    std::int64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    virtual HitSource source() const = 0;

protected:
    virtual std::optional<RetrievalHit> fetch(const QAItem& item) = 0;

private:
    std::atomic<std::int64_t> calls_{0};
};

class SparseRetriever final : public Retriever {
public:
    SparseRetriever(std::shared_ptr<const CorpusStore> store, Bm25Params params);
    HitSource source() const override { return HitSource::sparse; }

protected:
    std::optional<RetrievalHit> fetch(const QAItem& item) override;

private:
    std::shared_ptr<const CorpusStore> store_;
    Bm25Params params_;
};

class DenseRetriever final : public Retriever {
public:
    explicit DenseRetriever(DenseClientConfig config) : config_(std::move(config)) {}
    HitSource source() const override { return HitSource::dense; }

protected:
    std::optional<RetrievalHit> fetch(const QAItem& item) override;

private:
    DenseClientConfig config_;
};

class GoldRetriever final : public Retriever {
public:
    HitSource source() const override { return HitSource::gold; }

protected:
    std::optional<RetrievalHit> fetch(const QAItem& item) override { return gold_document(item); }
};

class CorruptRetriever final : public Retriever {
public:
    HitSource source() const override { return HitSource::corrupt; }

protected:
    std::optional<RetrievalHit> fetch(const QAItem& item) override;
};

struct PrecisionAtOne {
    double precision = 0.0;
    std::int64_t questions = 0;
    std::int64_t with_hit = 0;
};

/// Fraction of questions whose top-1 document contains a gold answer.
/// Questions without a hit count as misses.
PrecisionAtOne precision_at_1(std::span<const QAItem> items, Retriever& retriever);

}  // namespace certgate
