#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "certgate/dataset.hpp"
#include "certgate/response_parse.hpp"
#include "certgate/retrieval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace certgate;
using nlohmann::json;

namespace {

CorpusStore from_lines(const std::string& jsonl) {
    std::istringstream in(jsonl);
    return CorpusStore::ingest_stream(in);
}

std::vector<Document> random_corpus(std::mt19937_64& rng, std::size_t n) {
    static const std::vector<std::string> vocab = {"apple",  "banana", "river", "mountain", "city",  "king",
                                                   "queen",  "war",    "peace", "music",    "album", "river",
                                                   "ocean",  "planet", "star",  "film",     "actor", "novel",
                                                   "author", "the",    "of",    "and",      "1969",  "paris"};
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
    std::uniform_int_distribution<int> len(1, 14);
    std::vector<Document> docs;
    for (std::size_t i = 0; i < n; ++i) {
        std::string t;
        const int l = len(rng);
        for (int k = 0; k < l; ++k) t += (k ? " " : "") + vocab[word(rng)];
        char id[16];
        std::snprintf(id, sizeof id, "d%02zu", (i * 7) % n);  // ids not in insertion order
        docs.push_back({id, t});
    }
    return docs;
}

struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> requests{0};

    template <typename Handler>
    explicit StubServer(Handler h) {
        server.Post("/retrieve", [this, h](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            h(req, res);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

int free_port() {
    httplib::Server s;
    return s.bind_to_any_port("127.0.0.1");
}

}  // namespace

TEST_CASE("ingest") {
    const auto store = from_lines(R"({"id": "a", "text": "one two three"}
{"id": "b", "text": "one two"}

{"id": "c", "text": "one", "title": "Title"}
)");
    CHECK(store.size() == 3);
    CHECK(store.average_length() == doctest::Approx((3.0 + 2.0 + 2.0) / 3.0));
    CHECK(store.find("c")->text == "Title\none");
    CHECK(store.document_frequency("one") == 3);
    CHECK(store.document_frequency("three") == 1);
    CHECK(store.document_frequency("four") == 0);
    CHECK(store.find("zzz") == nullptr);
}

TEST_CASE("ingest errors") {
    CHECK_THROWS_AS(from_lines("{\"id\": \"a\", \"text\": \"x\"}\n{\"id\": \"a\", \"text\": \"y\"}\n"), DuplicateId);
    try {
        from_lines("{\"id\": \"a\", \"text\": \"x\"}\nnot json\n");
        FAIL("expected MalformedRecord");
    } catch (const MalformedRecord& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(from_lines("{\"id\": \"a\"}\n"), MalformedRecord);
    CHECK_THROWS_AS(CorpusStore::ingest("/nonexistent/corpus.jsonl"), std::exception);
}

TEST_CASE("empty corpus is searchable") {
    const auto store = from_lines("");
    CHECK(store.size() == 0);
    CHECK_FALSE(bm25_top1(store, {}, "anything").has_value());
}

TEST_CASE("bm25 basics") {
    const auto store = CorpusStore::build({{"d1", "apple pie"}, {"d2", "banana bread"}});
    const auto hit = bm25_top1(store, {}, "banana");
    REQUIRE(hit);
    CHECK(hit->doc_id == "d2");
    CHECK(hit->source == HitSource::sparse);
    CHECK_FALSE(bm25_top1(store, {}, "").has_value());
    CHECK_FALSE(bm25_top1(store, {}, "cherry").has_value());
    CHECK_THROWS(Bm25Params{-1.0, 0.4}.validate());
    CHECK_THROWS(Bm25Params{0.9, 1.5}.validate());
}

TEST_CASE("bm25 ties go to the smallest id") {
    const auto store = CorpusStore::build({{"z", "same text"}, {"m", "same text"}, {"q", "same text"}});
    CHECK(bm25_top1(store, {}, "text")->doc_id == "m");
}

TEST_CASE("bm25 matches exhaustive recomputation") {
    std::mt19937_64 rng(11);
    for (std::size_t n : {10, 50}) {
        const auto docs = random_corpus(rng, n);
        const auto store = CorpusStore::build(docs);
        for (const Bm25Params p : {Bm25Params{}, Bm25Params{1.2, 0.75}, Bm25Params{0.5, 1.0}}) {
            for (int q = 0; q < 20; ++q) {
                const auto query = random_corpus(rng, 1)[0].text;
                const auto expect = oracle::bm25_best(docs, p.k1, p.b, query);
                const auto got = bm25_top1(store, p, query);
                REQUIRE(got.has_value() == expect.has_value());
                if (!got) continue;
                CHECK(got->doc_id == expect->doc_id);
                CHECK(std::abs(got->score - expect->score) <= 1e-9);
            }
        }
    }
}

TEST_CASE("index save and load") {
    testing::TempDir dir("index");
    std::mt19937_64 rng(3);
    const auto store = CorpusStore::build(random_corpus(rng, 30));
    store.save(dir.file("index.json"));
    const auto back = CorpusStore::load(dir.file("index.json"));
    CHECK(same_statistics(store, back));
    CHECK(bm25_top1(back, {}, "river king")->doc_id == bm25_top1(store, {}, "river king")->doc_id);

    auto j = json::parse(testing::slurp(dir.file("index.json")));
    j["version"] = 99;
    testing::spit(dir.file("v99.json"), j.dump());
    CHECK_THROWS_AS(CorpusStore::load(dir.file("v99.json")), IndexFormatError);
    testing::spit(dir.file("junk.json"), "{\"format\": \"something else\"}");
    CHECK_THROWS_AS(CorpusStore::load(dir.file("junk.json")), IndexFormatError);
}

TEST_CASE("ingesting the same file twice gives the same statistics") {
    testing::TempDir dir("ingest");
    testing::spit(dir.file("c.jsonl"), "{\"id\":\"x\",\"text\":\"a b c b\"}\n{\"id\":\"y\",\"text\":\"b c d\"}\n");
    CHECK(same_statistics(CorpusStore::ingest(dir.file("c.jsonl")), CorpusStore::ingest(dir.file("c.jsonl"))));
}

TEST_CASE("gold document") {
    QAItem with{"q1", "?", {"a"}, std::string("the doc")};
    const auto hit = gold_document(with);
    REQUIRE(hit);
    CHECK(hit->text == "the doc");
    CHECK(hit->source == HitSource::gold);
    CHECK(std::isinf(hit->score));
    QAItem without{"q2", "?", {"a"}, std::nullopt};
    CHECK_FALSE(gold_document(without).has_value());
}

TEST_CASE("corruption examples") {
    CHECK(corrupt_document("Obama was born in Hawaii.", {"Hawaii"}) == "Obama was born in Tom.");
    CHECK(corrupt_document("hawaii, HAWAII", {"Hawaii"}) == "Tom, Tom");
    const std::vector<std::string> ny = {"New York City", "New York"};
    const auto out = corrupt_document("He moved to New York City, then left New York.", ny);
    CHECK(out == "He moved to Tom, then left Tom.");
    CHECK_FALSE(answer_is_correct(out, ny));
    CHECK(corrupt_document("The Eiffel Tower", {"the Eiffel Tower"}) == "The Tom");
    CHECK(corrupt_document("nothing here", {"Paris"}) == "nothing here");
}

TEST_CASE("corruption soundness over the gold fixture") {
    const auto items = load_dataset(std::string(CERTGATE_TEST_DATA) + "/gold_fixture.jsonl");
    REQUIRE(items.size() == 25);
    for (const auto& item : items) {
        CAPTURE(item.id);
        const auto& doc = *item.gold_document;
        REQUIRE(answer_is_correct(doc, item.gold_answers));
        const auto once = corrupt_document(doc, item.gold_answers);
        for (const auto& g : item.gold_answers) CHECK_FALSE(answer_is_correct(once, {g}));
        CHECK(corrupt_document(once, item.gold_answers) == once);
        CHECK(oracle::only_answer_spans_replaced(doc, once, item.gold_answers));
    }
}

TEST_CASE("corrupt retriever") {
    CorruptRetriever r;
    QAItem item{"q1", "?", {"Hawaii"}, std::string("born in Hawaii")};
    const auto hit = r.top1(item);
    REQUIRE(hit);
    CHECK(hit->text == "born in Tom");
    CHECK(hit->source == HitSource::corrupt);
    CHECK(r.calls() == 1);
}

TEST_CASE("dense client against a stub service") {
    SUBCASE("hit") {
        json seen;
        StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
            seen = json::parse(req.body);
            res.set_content(R"({"hits":[{"id":"d7","score":0.91,"text":"some passage"}]})", "application/json");
        });
        const auto hit = dense_top1({stub.url()}, "who?");
        REQUIRE(hit);
        CHECK(hit->doc_id == "d7");
        CHECK(hit->score == doctest::Approx(0.91));
        CHECK(hit->text == "some passage");
        CHECK(hit->source == HitSource::dense);
        CHECK(seen["query"] == "who?");
        CHECK(seen["k"] == 1);
    }
    SUBCASE("empty") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"hits":[]})", "application/json");
        });
        CHECK_FALSE(dense_top1({stub.url()}, "who?").has_value());
    }
    SUBCASE("malformed") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"results":[]})", "application/json");
        });
        CHECK_THROWS_AS(dense_top1({stub.url()}, "who?"), MalformedResponse);
    }
    SUBCASE("not json") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) { res.set_content("<html>", "text/html"); });
        CHECK_THROWS_AS(dense_top1({stub.url()}, "who?"), MalformedResponse);
    }
    SUBCASE("not ready") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
        CHECK_THROWS_AS(dense_top1({stub.url()}, "who?"), RetrieverUnavailable);
    }
    SUBCASE("down") {
        const auto port = free_port();
        DenseClientConfig cfg{"http://127.0.0.1:" + std::to_string(port), "/retrieve", 1.0};
        CHECK_THROWS_AS(dense_top1(cfg, "who?"), RetrieverUnavailable);
    }
}

TEST_CASE("precision at 1") {
    auto store = std::make_shared<const CorpusStore>(
        CorpusStore::build({{"a", "Paris is the capital of France"}, {"b", "Rome is the capital of Italy"}}));
    SparseRetriever r(store, {});
    const std::vector<QAItem> items = {{"1", "capital of France", {"Paris"}, std::nullopt},
                                       {"2", "capital of Italy", {"Rome"}, std::nullopt},
                                       {"3", "capital of Italy", {"Milan"}, std::nullopt},
                                       {"4", "zebra", {"x"}, std::nullopt}};
    const auto p = precision_at_1(items, r);
    CHECK(p.questions == 4);
    CHECK(p.with_hit == 3);
    CHECK(p.precision == doctest::Approx(0.5));
    CHECK(r.calls() == 4);
}
