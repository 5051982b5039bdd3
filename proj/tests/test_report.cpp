#include <doctest.h>

#include "certgate/hash.hpp"
#include "certgate/pipeline.hpp"
#include "certgate/report.hpp"
#include "scenario.hpp"
#include "support.hpp"

using namespace certgate;
using namespace certgate::testing;

namespace {

// Returns the same passage for every question.
class FixedRetriever final : public Retriever {
public:
    FixedRetriever(HitSource s, std::string text) : source_(s), text_(std::move(text)) {}
    HitSource source() const override { return source_; }

protected:
    std::optional<RetrievalHit> fetch(const QAItem&) override {
        return RetrievalHit{"fixed", text_, 1.5, source_};
    }

private:
    HitSource source_;
    std::string text_;
};

struct Fixture {
    std::vector<Row> rows = mixed_rows(12);
    std::vector<QAItem> items = items_of(rows);
    std::unique_ptr<LlmGateway> gateway = mock_gateway(scenario_handler(rows), "toy-model");
    TemplateSet templates = TemplateSet::defaults();
    Experiment ex;

    Fixture() {
        ex.gateway = gateway.get();
        ex.templates = &templates;
    }

    LoadedLedger run(StrategyId s, RaMode mode, HitSource source, Retriever* r) {
        RunConfig cfg;
        cfg.dataset_path = "data/toy.jsonl";
        cfg.strategy = s;
        cfg.ra_mode = mode;
        cfg.retriever = source;
        const auto ledger = run_experiment(items, cfg, ex, r, config_snapshot(cfg, ex, sha256_hex("toy")));
        return parse_ledger(ledger.serialize(), std::string(to_string(s)) + "-" + std::string(to_string(mode)));
    }
};

}  // namespace

TEST_CASE("single elicitation ledger gives the boundary table") {
    Fixture f;
    const auto rep = build_report({f.run(StrategyId::vanilla, RaMode::none, HitSource::sparse, nullptr)});
    CHECK(rep.tables.find("| Model | Dataset | Strategy | N | Unc-rate | Acc | Conserv. | Overconf. | Alignment |") !=
          std::string::npos);
    CHECK(rep.tables.find("| toy-model | toy.jsonl | Vanilla | 12 |") != std::string::npos);
    CHECK(rep.tables.find("RA Rate") == std::string::npos);
    const auto j = nlohmann::json::parse(rep.json_text);
    CHECK(j["runs"].size() == 1);
    CHECK(j["runs"][0]["config"]["strategy"] == "vanilla");
}

TEST_CASE("retrieval ledgers combine into one table with an RA Rate row") {
    Fixture f;
    GoldRetriever gold;
    FixedRetriever sparse(HitSource::sparse, "nothing useful");
    FixedRetriever dense(HitSource::dense, "nothing useful either");
    const std::vector<LoadedLedger> ledgers = {
        f.run(StrategyId::vanilla, RaMode::none, HitSource::sparse, nullptr),
        f.run(StrategyId::vanilla, RaMode::adaptive, HitSource::sparse, &sparse),
        f.run(StrategyId::vanilla, RaMode::adaptive, HitSource::dense, &dense),
        f.run(StrategyId::vanilla, RaMode::adaptive, HitSource::gold, &gold),
        f.run(StrategyId::vanilla, RaMode::static_ra, HitSource::gold, &gold),
    };
    const auto rep = build_report(ledgers);
    CHECK(rep.tables.find("## Retrieval augmentation: toy-model on toy.jsonl") != std::string::npos);
    CHECK(rep.tables.find("| Retrieval | Static | Vanilla |") != std::string::npos);
    CHECK(rep.tables.find("| RA Rate | 100.0% |") != std::string::npos);
    for (const char* r : {"| None |", "| Sparse |", "| Dense |", "| Gold |"}) CHECK(rep.tables.find(r) != std::string::npos);
    CHECK(rep.tables.find("| Corrupt |") == std::string::npos);
}

TEST_CASE("reports are byte-identical on re-run") {
    Fixture f;
    GoldRetriever gold;
    const std::vector<LoadedLedger> ledgers = {f.run(StrategyId::punish, RaMode::adaptive, HitSource::gold, &gold)};
    TempDir dir("report");
    write_report(build_report(ledgers), dir.file("a"));
    write_report(build_report(ledgers), dir.file("b"));
    CHECK(slurp(dir.file("a/report.md")) == slurp(dir.file("b/report.md")));
    CHECK(slurp(dir.file("a/report.json")) == slurp(dir.file("b/report.json")));
    CHECK_FALSE(slurp(dir.file("a/report.md")).empty());
}

TEST_CASE("reliance ledgers get their own table") {
    Fixture f;
    for (auto& r : f.rows) {
        if (!r.gold_document) r.gold_document = "filler " + r.gold[0];
    }
    f.items = items_of(f.rows);
    const auto rep = reliance_study(f.items, f.ex, {}, {{"model", {{"name", "toy-model"}}}});
    const auto loaded = parse_ledger(rep.serialize(), "reliance");
    CHECK(loaded.is_reliance());
    const auto report = build_report({loaded});
    CHECK(report.tables.find("| Level | Items | Utilization ratio (gold) | Corruption rate (corrupt) |") !=
          std::string::npos);
}

TEST_CASE("malformed ledgers are rejected") {
    CHECK_THROWS(parse_ledger("{\"kind\":\"header\",\"format\":\"other\",\"version\":1}\n", "x"));
    CHECK_THROWS(parse_ledger("{\"kind\":\"header\",\"format\":\"certgate-ledger\",\"version\":2}\n", "x"));
    // a run that died before writing its footer
    CHECK_THROWS(parse_ledger("{\"kind\":\"header\",\"format\":\"certgate-ledger\",\"version\":1,\"config\":{}}\n", "x"));
}

TEST_CASE("display names") {
    CHECK(strategy_display_name("punish_explain") == "Punish+Explain");
    CHECK(strategy_display_name("step_by_step") == "Step-by-Step");
}
