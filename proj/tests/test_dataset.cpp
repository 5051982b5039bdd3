#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "certgate/dataset.hpp"
#include "support.hpp"

using namespace certgate;

namespace {

std::vector<QAItem> convert(const std::string& content, SourceFormat f, ConvertStats* stats = nullptr) {
    std::istringstream in(content);
    return convert_dataset(in, f, {}, stats);
}

std::vector<QAItem> numbered(std::size_t n, std::size_t gold_every = 0) {
    std::vector<QAItem> out;
    for (std::size_t i = 0; i < n; ++i) {
        QAItem item{"i" + std::to_string(i), "q" + std::to_string(i), {"a"}, std::nullopt};
        if (gold_every && i % gold_every == 0) item.gold_document = "doc";
        out.push_back(item);
    }
    return out;
}

}  // namespace

TEST_CASE("dataset round trip") {
    testing::TempDir dir("ds");
    const std::vector<QAItem> items = {{"a", "who?", {"x", "y"}, std::string("doc")}, {"b", "when?", {"1969"}, std::nullopt}};
    save_dataset(dir.file("d.jsonl"), items);
    const auto back = load_dataset(dir.file("d.jsonl"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].gold_answers == items[0].gold_answers);
    CHECK(back[0].gold_document == items[0].gold_document);
    CHECK_FALSE(back[1].gold_document.has_value());
}

TEST_CASE("dataset errors name the line") {
    std::istringstream dup("{\"id\":\"a\",\"question\":\"q\",\"answers\":[\"x\"]}\n{\"id\":\"a\",\"question\":\"q\",\"answers\":[\"x\"]}\n");
    CHECK_THROWS_WITH_AS(read_dataset(dup), doctest::Contains("line 2"), DatasetError);
    std::istringstream empty_answers("{\"id\":\"a\",\"question\":\"q\",\"answers\":[]}\n");
    CHECK_THROWS_AS(read_dataset(empty_answers), DatasetError);
    std::istringstream junk("nope\n");
    CHECK_THROWS_AS(read_dataset(junk), DatasetError);
    CHECK_THROWS_AS(load_dataset("/nonexistent.jsonl"), DatasetError);
}

TEST_CASE("convert DPR retriever json") {
    ConvertStats stats;
    const auto items = convert(R"([
      {"question": "who wrote hamlet", "answers": ["William Shakespeare", "a playwright from the english city of stratford"],
       "positive_ctxs": [{"title": "Hamlet", "text": "Hamlet is a play by William Shakespeare."}]},
      {"question": "long one", "answers": ["one two three four five six"], "positive_ctxs": []}
    ])", SourceFormat::dpr_json, &stats);
    REQUIRE(items.size() == 1);
    CHECK(items[0].gold_answers == std::vector<std::string>{"William Shakespeare"});
    CHECK(items[0].gold_document == std::optional<std::string>("Hamlet is a play by William Shakespeare."));
    CHECK(stats.read == 2);
    CHECK(stats.kept == 1);
    CHECK(stats.dropped_no_short_answer == 1);
}

TEST_CASE("convert DPR question tsv") {
    const auto items = convert("who sang thriller\t['Michael Jackson']\nwhen\t[\"1969\", 'July 1969']\n",
                               SourceFormat::dpr_qa_tsv);
    REQUIRE(items.size() == 2);
    CHECK(items[0].question == "who sang thriller");
    CHECK(items[0].gold_answers == std::vector<std::string>{"Michael Jackson"});
    CHECK(items[1].gold_answers == std::vector<std::string>{"1969", "July 1969"});
    CHECK(items[0].id == "q0");
    CHECK(items[1].id == "q1");
    CHECK_THROWS_AS(convert("no tab here\n", SourceFormat::dpr_qa_tsv), DatasetError);
}

TEST_CASE("convert NQ-open jsonl") {
    const auto items = convert("{\"question\": \"q\", \"answer\": [\"A\", \"A\"]}\n", SourceFormat::nq_open_jsonl);
    REQUIRE(items.size() == 1);
    CHECK(items[0].gold_answers == std::vector<std::string>{"A"});
}

TEST_CASE("convert HotpotQA json") {
    const auto items = convert(R"([{
      "_id": "5a8b", "question": "which city", "answer": "Paris",
      "supporting_facts": [["France", 0], ["Paris", 1]],
      "context": [["France", ["France is a country. ", "Its capital is Paris."]],
                  ["Noise", ["Unrelated."]],
                  ["Paris", ["Paris is a city."]]]
    }])", SourceFormat::hotpot_json);
    REQUIRE(items.size() == 1);
    CHECK(items[0].id == "5a8b");
    CHECK(items[0].gold_document == std::optional<std::string>("France: France is a country. Its capital is Paris.\nParis: Paris is a city."));
}

TEST_CASE("sampling") {
    const auto items = numbered(100, 3);
    const auto a = sample_dataset(items, 10, 42, false);
    const auto b = sample_dataset(items, 10, 42, false);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
    // dataset order, no repeats
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ids.insert(a[i].id);
        if (i) CHECK(std::stoi(a[i - 1].id.substr(1)) < std::stoi(a[i].id.substr(1)));
    }
    CHECK(ids.size() == 10);

    const auto c = sample_dataset(items, 10, 43, false);
    bool differs = false;
    for (std::size_t i = 0; i < c.size(); ++i) differs |= c[i].id != a[i].id;
    CHECK(differs);

    const auto gold = sample_dataset(items, 500, 1, true);
    CHECK(gold.size() == 34);
    for (const auto& g : gold) CHECK(g.gold_document.has_value());
    CHECK(sample_dataset(items, 0, 1, false).empty());
}

TEST_CASE("sampling is pinned to the mt19937_64 stream") {
    // First two draws for seed 5 over 10 items: mt19937_64(5) outputs are far
    // below the rejection limit, so index = output % remaining.
    std::mt19937_64 rng(5);
    std::vector<std::size_t> idx(10);
    for (std::size_t i = 0; i < 10; ++i) idx[i] = i;
    for (std::size_t i = 0; i < 2; ++i) std::swap(idx[i], idx[i + rng() % (10 - i)]);
    std::vector<std::size_t> expect = {idx[0], idx[1]};
    std::sort(expect.begin(), expect.end());
    const auto got = sample_dataset(numbered(10), 2, 5, false);
    REQUIRE(got.size() == 2);
    CHECK(got[0].id == "i" + std::to_string(expect[0]));
    CHECK(got[1].id == "i" + std::to_string(expect[1]));
}
