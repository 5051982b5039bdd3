#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "certgate/core.hpp"

using namespace certgate;

TEST_CASE("tally_add increments exactly one cell") {
    CHECK(tally_add({}, true, true) == OutcomeTally{1, 0, 0, 0});
    CHECK(tally_add({1, 2, 3, 4}, false, true) == OutcomeTally{1, 2, 4, 4});
    CHECK(tally_add({1, 2, 3, 4}, false, false) == OutcomeTally{1, 2, 3, 5});
    CHECK(tally_add({1, 2, 3, 4}, true, false) == OutcomeTally{1, 3, 3, 4});
}

TEST_CASE("tally total counts calls and ignores item order") {
    std::mt19937_64 rng(7);
    std::vector<std::pair<bool, bool>> outcomes;
    for (int i = 0; i < 200; ++i) outcomes.emplace_back(rng() & 1, rng() & 1);

    OutcomeTally forward;
    for (auto [c, k] : outcomes) forward = tally_add(forward, c, k);
    CHECK(forward.total() == 200);

    for (int round = 0; round < 5; ++round) {
        std::shuffle(outcomes.begin(), outcomes.end(), rng);
        OutcomeTally shuffled;
        for (auto [c, k] : outcomes) shuffled = tally_add(shuffled, c, k);
        CHECK(shuffled == forward);
    }
}

TEST_CASE("merge is the component-wise sum") {
    CHECK(merge({1, 2, 3, 4}, {10, 20, 30, 40}) == OutcomeTally{11, 22, 33, 44});
    CHECK(merge({}, {}) == OutcomeTally{});
}

TEST_CASE("QAItem validation") {
    QAItem ok{"q1", "who?", {"Paris"}, std::nullopt};
    CHECK_NOTHROW(ok.validate());
    QAItem no_answers{"q2", "who?", {}, std::nullopt};
    CHECK_THROWS_AS(no_answers.validate(), std::invalid_argument);
    QAItem blank{"q3", "who?", {"Paris", ""}, std::nullopt};
    CHECK_THROWS_AS(blank.validate(), std::invalid_argument);
}

TEST_CASE("strategy names round-trip") {
    for (auto id : kAllStrategies) CHECK(parse_strategy(to_string(id)) == id);
    CHECK_THROWS_AS(parse_strategy("bogus"), std::invalid_argument);
    CHECK(elicits_certainty(StrategyId::punish_explain));
    CHECK_FALSE(elicits_certainty(StrategyId::ra_answer));
}

TEST_CASE("confidence level range") {
    CHECK(ConfidenceLevel(0).value() == 0);
    CHECK(ConfidenceLevel(3).value() == 3);
    CHECK_THROWS_AS(ConfidenceLevel(4), std::out_of_range);
    CHECK_THROWS_AS(ConfidenceLevel(-1), std::out_of_range);
}

TEST_CASE("decode params validation") {
    DecodeParams d;
    CHECK_NOTHROW(d.validate());
    d.max_output_tokens = 0;
    CHECK_THROWS(d.validate());
    d = {};
    d.temperature = -0.1;
    CHECK_THROWS(d.validate());
}

TEST_CASE("hit source names") {
    for (auto s : {HitSource::sparse, HitSource::dense, HitSource::gold, HitSource::corrupt}) {
        CHECK(parse_hit_source(to_string(s)) == s);
    }
    CHECK_THROWS(parse_hit_source("bm42"));
}
