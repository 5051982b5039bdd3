#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "certgate/metrics.hpp"
#include "certgate/text.hpp"

using namespace certgate;

TEST_CASE("boundary metrics examples") {
    const auto m = boundary_metrics({2, 1, 3, 4});
    CHECK(m.accuracy == doctest::Approx(0.3));
    CHECK(m.unc_rate == doctest::Approx(0.5));
    CHECK(m.overconfidence == doctest::Approx(0.3));
    CHECK(m.conservativeness == doctest::Approx(0.1));
    CHECK(m.alignment == doctest::Approx(0.6));
    CHECK(m.n == 10);

    const auto z = boundary_metrics({0, 0, 0, 7});
    CHECK(z.accuracy == 0.0);
    CHECK(z.unc_rate == 1.0);
    CHECK(z.overconfidence == 0.0);
    CHECK(z.conservativeness == 0.0);
    CHECK(z.alignment == 1.0);

    CHECK_THROWS_AS(boundary_metrics({}), EmptyTally);
}

TEST_CASE("published ChatGPT NQ row satisfies the alignment identity to rounding") {
    const double acc = 0.3850, unc = 0.2917, conserv = 0.0557, reported = 0.5654;
    const double derived = acc + unc - 2 * conserv;
    CHECK(derived == doctest::Approx(0.5653).epsilon(1e-12));
    CHECK(std::abs(derived - reported) <= 0.0005);
}

TEST_CASE("identities over random tallies") {
    std::mt19937_64 rng(20231015);
    std::uniform_int_distribution<std::int64_t> cell(0, 5000);
    for (int i = 0; i < 1000; ++i) {
        OutcomeTally t{cell(rng), cell(rng), cell(rng), cell(rng)};
        if (t.total() == 0) t.n_cc = 1;
        const auto m = boundary_metrics(t);
        CHECK(std::abs(m.alignment + m.overconfidence + m.conservativeness - 1.0) <= 1e-12);
        CHECK(std::abs(m.alignment - (m.accuracy + m.unc_rate - 2 * m.conservativeness)) <= 1e-12);
    }
}

TEST_CASE("confidence levels") {
    const auto C = CertaintyFlag::certain();
    const auto U = CertaintyFlag::uncertain();
    CHECK(confidence_level(U, U).value() == 0);
    CHECK(confidence_level(U, C).value() == 1);
    CHECK(confidence_level(C, U).value() == 2);
    CHECK(confidence_level(C, C).value() == 3);
}

TEST_CASE("overlap") {
    CHECK(overlap("Paris", "Paris is the capital of France") == 1);
    CHECK(overlap("", "anything at all") == 0);
    // by hand: {eiffel, tower, paris} after dropping "the" and "in"
    CHECK(overlap("the Eiffel Tower in Paris", "Paris hosts the Eiffel Tower") == 3);
    CHECK(overlap("Paris Paris Paris", "Paris") == 1);
    CHECK(overlap("Answer: Paris", "Paris") == 1);
}

TEST_CASE("overlap bounds and monotonicity") {
    const StopwordList sw;
    const std::vector<std::string> answers = {"the Eiffel Tower in Paris", "New York City", "1969 moon landing",
                                              "a b c", "Barack Obama"};
    const std::vector<std::string> docs = {"Paris hosts the Eiffel Tower", "New York is big", "", "Obama 1969"};
    for (const auto& a : answers) {
        std::set<std::string> content;
        for (const auto& t : text::tokens(a)) {
            if (!sw.contains(t)) content.insert(t);
        }
        for (const auto& d : docs) {
            CHECK(overlap(a, d) <= content.size());
            CHECK(overlap(a, d) <= overlap(a, d + " City landing Barack tower"));
        }
    }
}

TEST_CASE("reliance test") {
    CHECK(relies_on_document("x", "Paris Eiffel Tower", "Paris Eiffel Tower d"));  // 3 vs 0
    CHECK_FALSE(relies_on_document("Paris Tower", "Paris Tower", "Paris Tower"));     // 2 vs 2
    CHECK(relies_on_document("Rome", "Paris", "Paris is the capital"));
    CHECK_FALSE(relies_on_document("Rome", "Paris", "Paris is the capital", 1.0));
}

namespace {

RelianceRecord rec(int level, bool relies, bool plain_right, bool aug_right) {
    RelianceRecord r;
    r.level = ConfidenceLevel(level);
    r.document = "Paris is the capital";
    r.plain_answer = "Rome";
    r.augmented_answer = relies ? "Paris" : "Rome";
    r.plain_correct = plain_right;
    r.augmented_correct = aug_right;
    return r;
}

}  // namespace

TEST_CASE("utilization ratio") {
    std::vector<RelianceRecord> all(4, rec(0, true, false, false));
    CHECK(utilization_ratio(all) == 1.0);
    std::vector<RelianceRecord> none(4, rec(0, false, false, false));
    CHECK(utilization_ratio(none) == 0.0);
    auto mixed = all;
    mixed[2] = rec(0, false, false, false);
    CHECK(utilization_ratio(mixed) == 0.75);
    CHECK_THROWS_AS(utilization_ratio(std::vector<RelianceRecord>{}), EmptyInput);
}

TEST_CASE("corruption rate") {
    std::vector<RelianceRecord> flips(5, rec(1, true, true, false));
    CHECK(corruption_rate(flips) == 1.0);
    std::vector<RelianceRecord> wrong(5, rec(1, true, false, false));
    CHECK(corruption_rate(wrong) == 0.0);
    std::vector<RelianceRecord> ten(10, rec(1, true, true, true));
    ten[3] = rec(1, true, true, false);
    ten[7] = rec(1, true, true, false);
    CHECK(corruption_rate(ten) == doctest::Approx(0.2));

    RelianceOptions over_correct;
    over_correct.corruption_over_plain_correct = true;
    ten[0] = rec(1, true, false, false);
    ten[1] = rec(1, true, false, false);
    CHECK(corruption_rate(ten) == doctest::Approx(0.2));
    CHECK(corruption_rate(ten, over_correct) == doctest::Approx(0.25));
    CHECK_THROWS_AS(corruption_rate(wrong, over_correct), EmptyInput);
}

TEST_CASE("bucketing by level") {
    std::vector<RelianceRecord> only3(3, rec(3, false, true, true));
    const auto b = bucket_by_level(only3, RelianceMetric::utilization);
    CHECK(b.size() == 1);
    CHECK(b.contains(3));
    CHECK(bucket_by_level(std::vector<RelianceRecord>{}, RelianceMetric::corruption).empty());

    std::vector<RelianceRecord> mix = {rec(0, true, true, false), rec(0, true, false, false), rec(2, false, true, true),
                                       rec(2, true, true, false)};
    const auto u = bucket_by_level(mix, RelianceMetric::utilization);
    CHECK(u.at(0) == 1.0);
    CHECK(u.at(2) == 0.5);
    const auto c = bucket_by_level(mix, RelianceMetric::corruption);
    CHECK(c.at(0) == 0.5);
    CHECK(c.at(2) == 0.5);
}
