#include "certgate/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

namespace certgate {

using nlohmann::json;

std::string_view to_string(RaMode m) {
    switch (m) {
        case RaMode::none: return "none";
        case RaMode::static_ra: return "static";
        case RaMode::adaptive: return "adaptive";
    }
    return "unknown";
}

RaMode parse_ra_mode(std::string_view name) {
    if (name == "none") return RaMode::none;
    if (name == "static") return RaMode::static_ra;
    if (name == "adaptive") return RaMode::adaptive;
    throw std::invalid_argument(fmt::format("unknown ra mode '{}'", name));
}

namespace {

// Runs fn(i) for i in [0, n) on at most `workers` threads. fn must not throw.
template <class Fn>
void for_each_index(std::size_t n, int workers, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    };
    const auto threads = static_cast<std::size_t>(std::clamp<std::int64_t>(workers, 1, std::max<std::int64_t>(1, static_cast<std::int64_t>(n))));
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
}

struct ResolvedCertainty {
    CertaintyFlag flag;
    bool parsed = true;
};

ResolvedCertainty resolve_certainty(std::string_view raw, const OutputContract& contract, const ParsePolicy& policy,
                                    std::string_view item_id) {
    if (!raw.empty()) {
        if (auto f = parse_certainty(raw, contract, policy.hedges)) return {*f, true};
    }
    spdlog::warn("item {}: no certainty marker or hedge found; treating as {}", item_id,
                 policy.unparseable_as_certain ? "certain" : "uncertain");
    return {CertaintyFlag(policy.unparseable_as_certain), false};
}

std::string answer_of(std::string_view raw, const OutputContract& contract) {
    return raw.empty() ? std::string() : parse_answer(raw, contract);
}

ModelTurn run_turn(const Experiment& ex, StrategyId strategy, std::string prompt, int turn_index) {
    ModelTurn t;
    t.strategy = strategy;
    t.rendered_prompt = std::move(prompt);
    t.decode_params = ex.gateway->spec().decode;
    t.raw_completion = ex.gateway->complete(t.rendered_prompt, turn_index).text;
    return t;
}

ModelTurn augmented_turn(const QAItem& item, const Experiment& ex, const RetrievalHit& hit) {
    const auto& ra = ex.templates->at(StrategyId::ra_answer);
    auto turn = run_turn(ex, StrategyId::ra_answer, render(ra, item.question, std::string_view(hit.text)), 0);
    turn.answer = answer_of(turn.raw_completion, ra.output_contract);
    return turn;
}

void require_experiment(const Experiment& ex) {
    if (ex.gateway == nullptr || ex.templates == nullptr) {
        throw std::invalid_argument("experiment needs a gateway and templates");
    }
}

std::optional<RetrievalHit> fetch_top1(const QAItem& item, const Experiment& ex, Retriever& retriever,
                                       std::string& failure) {
    try {
        return retriever.top1(item);
    } catch (const RetrieverUnavailable& e) {
        if (!ex.fallback_on_retriever_error) throw;
        failure = e.what();
    } catch (const MalformedResponse& e) {
        if (!ex.fallback_on_retriever_error) throw;
        failure = e.what();
    }
    spdlog::warn("item {}: retriever failed ({}); answering without augmentation", item.id, failure);
    return std::nullopt;
}

json turn_json(const ModelTurn& t) {
    json j = {{"strategy", to_string(t.strategy)},
              {"prompt", t.rendered_prompt},
              {"completion", t.raw_completion},
              {"answer", t.answer},
              {"certainty", t.certainty ? json(t.certainty->value()) : json(nullptr)},
              {"certainty_parsed", t.certainty_parsed},
              {"decode",
               {{"max_output_tokens", t.decode_params.max_output_tokens},
                {"temperature", t.decode_params.temperature},
                {"extra", t.decode_params.extra}}}};
    return j;
}

json hit_json(const RetrievalHit& h) {
    return {{"doc_id", h.doc_id},
            {"text", h.text},
            {"score", std::isfinite(h.score) ? json(h.score) : json(nullptr)},
            {"source", to_string(h.source)}};
}

json metrics_json(const BoundaryMetrics& m) {
    return {{"accuracy", m.accuracy},
            {"unc_rate", m.unc_rate},
            {"overconfidence", m.overconfidence},
            {"conservativeness", m.conservativeness},
            {"alignment", m.alignment},
            {"n", m.n}};
}

json tally_json(const OutcomeTally& t) {
    return {{"n_cc", t.n_cc}, {"n_cu", t.n_cu}, {"n_ic", t.n_ic}, {"n_iu", t.n_iu}};
}

json counters_json(const GatewayCounters& c) {
    return {{"llm_calls", c.calls}, {"cache_hits", c.cache_hits}, {"network_requests", c.network_requests}};
}

GatewayCounters delta(const GatewayCounters& after, const GatewayCounters& before) {
    return {after.calls - before.calls, after.cache_hits - before.cache_hits,
            after.network_requests - before.network_requests};
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path));
    out << content;
}

}  // namespace

Elicited elicit_item(const QAItem& item, const Experiment& ex, StrategyId strategy) {
    require_experiment(ex);
    if (!elicits_certainty(strategy)) throw std::invalid_argument("elicit: ra_answer does not elicit certainty");
    const auto& tpl = ex.templates->at(strategy);
    const auto& contract = tpl.output_contract;

    Elicited out;
    auto first = run_turn(ex, strategy, render(tpl, item.question), 0);
    first.answer = answer_of(first.raw_completion, contract);
    auto c = resolve_certainty(first.raw_completion, contract, ex.policy, item.id);
    first.certainty = c.flag;
    first.certainty_parsed = c.parsed;
    out.answer = first.answer;
    out.certainty = c.flag;
    out.certainty_parsed = c.parsed;
    out.turns.push_back(first);

    if (strategy == StrategyId::challenge) {
        auto second = run_turn(ex, strategy, challenge_followup(first, tpl), 1);
        second.answer = answer_of(second.raw_completion, contract);
        auto c2 = resolve_certainty(second.raw_completion, contract, ex.policy, item.id);
        second.certainty = c2.flag;
        second.certainty_parsed = c2.parsed;
        // The challenged certainty replaces the first one; the answer stays.
        out.certainty = c2.flag;
        out.certainty_parsed = c2.parsed;
        out.turns.push_back(std::move(second));
    }
    out.correct = answer_is_correct(out.answer, item.gold_answers);
    return out;
}

ElicitResult elicit(std::span<const QAItem> items, const Experiment& ex, StrategyId strategy) {
    if (items.empty()) throw EmptyDataset("elicit: empty dataset");
    require_experiment(ex);
    ElicitResult result;
    result.records.resize(items.size());
    for_each_index(items.size(), ex.workers, [&](std::size_t i) {
        auto& r = result.records[i];
        r.index = i;
        r.item_id = items[i].id;
        try {
            auto e = elicit_item(items[i], ex, strategy);
            r.turns = std::move(e.turns);
            r.certainty = e.certainty;
            r.certainty_parsed = e.certainty_parsed;
            r.elicited_correct = e.correct;
            r.final_answer = std::move(e.answer);
            r.correct = e.correct;
        } catch (const std::exception& err) {
            r.skipped = true;
            r.error = err.what();
        }
    });
    for (const auto& r : result.records) {
        if (r.skipped) {
            ++result.skipped;
        } else {
            result.tally = tally_add(result.tally, r.correct, r.certainty->is_certain());
        }
    }
    return result;
}

ItemRecord answer_adaptive(const QAItem& item, const Experiment& ex, StrategyId gate_strategy, Retriever& retriever) {
    ItemRecord r;
    r.item_id = item.id;
    auto e = elicit_item(item, ex, gate_strategy);
    r.turns = std::move(e.turns);
    r.certainty = e.certainty;
    r.certainty_parsed = e.certainty_parsed;
    r.elicited_correct = e.correct;

    if (e.certainty.is_certain()) {
        r.final_answer = std::move(e.answer);
        r.correct = e.correct;
        return r;
    }

    r.retrieval_triggered = true;
    std::string failure;
    auto hit = fetch_top1(item, ex, retriever, failure);
    if (!hit) {
        r.fallback = true;
        r.fallback_reason = failure.empty() ? "retriever returned no document" : failure;
        r.final_answer = std::move(e.answer);
        r.correct = e.correct;
        return r;
    }
    auto turn = augmented_turn(item, ex, *hit);
    r.final_answer = turn.answer;
    r.correct = answer_is_correct(r.final_answer, item.gold_answers);
    r.turns.push_back(std::move(turn));
    r.hit = std::move(hit);
    return r;
}

ItemRecord answer_static(const QAItem& item, const Experiment& ex, Retriever& retriever, StrategyId unaugmented) {
    require_experiment(ex);
    ItemRecord r;
    r.item_id = item.id;
    r.retrieval_triggered = true;
    std::string failure;
    auto hit = fetch_top1(item, ex, retriever, failure);
    if (!hit) {
        auto e = elicit_item(item, ex, unaugmented);
        r.turns = std::move(e.turns);
        r.fallback = true;
        r.fallback_reason = failure.empty() ? "retriever returned no document" : failure;
        r.final_answer = std::move(e.answer);
        r.correct = e.correct;
        return r;
    }
    auto turn = augmented_turn(item, ex, *hit);
    r.final_answer = turn.answer;
    r.correct = answer_is_correct(r.final_answer, item.gold_answers);
    r.turns.push_back(std::move(turn));
    r.hit = std::move(hit);
    return r;
}

void RunConfig::validate() const {
    if (ra_mode == RaMode::adaptive && !elicits_certainty(strategy)) {
        throw std::invalid_argument("adaptive retrieval needs a certainty-eliciting strategy");
    }
    if (ra_mode == RaMode::none && !elicits_certainty(strategy)) {
        throw std::invalid_argument("elicit runs need a certainty-eliciting strategy");
    }
    if (!std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite");
}

json config_snapshot(const RunConfig& cfg, const Experiment& ex, std::string_view dataset_digest,
                     const std::optional<Bm25Params>& bm25) {
    require_experiment(ex);
    const auto& spec = ex.gateway->spec();
    json j = {
        {"dataset", {{"path", cfg.dataset_path}, {"sha256", std::string(dataset_digest)}}},
        {"model",
         {{"name", spec.model_name},
          {"backend", to_string(spec.backend)},
          {"decode",
           {{"max_output_tokens", spec.decode.max_output_tokens},
            {"temperature", spec.decode.temperature},
            {"extra", spec.decode.extra}}}}},
        {"strategy", to_string(cfg.strategy)},
        {"ra_mode", to_string(cfg.ra_mode)},
        {"retriever", cfg.ra_mode == RaMode::none ? json(nullptr) : json(to_string(cfg.retriever))},
        {"gamma", cfg.gamma},
        {"seed", cfg.seed},
        {"templates_sha256", ex.templates->fingerprint()},
        {"hedges", ex.policy.hedges.phrases()},
        {"unparseable_as_certain", ex.policy.unparseable_as_certain},
        {"fallback_on_retriever_error", ex.fallback_on_retriever_error},
    };
    if (bm25) j["bm25"] = {{"k1", bm25->k1}, {"b", bm25->b}};
    return j;
}

RunLedger run_experiment(std::span<const QAItem> items, const RunConfig& cfg, const Experiment& ex,
                         Retriever* retriever, json config) {
    cfg.validate();
    require_experiment(ex);
    if (items.empty()) throw EmptyDataset("run: empty dataset");
    if (cfg.ra_mode != RaMode::none && retriever == nullptr) {
        throw std::invalid_argument("retrieval augmentation needs a retriever");
    }
    if (cfg.ra_mode != RaMode::none && cfg.retriever == HitSource::corrupt &&
        std::none_of(items.begin(), items.end(), [](const QAItem& i) { return i.gold_document.has_value(); })) {
        throw std::invalid_argument("corrupt retriever needs items with gold documents");
    }

    const auto counters_before = ex.gateway->counters();
    const auto retriever_before = retriever ? retriever->calls() : 0;

    RunLedger ledger;
    ledger.config = std::move(config);
    ledger.records.resize(items.size());
    const StrategyId unaugmented = elicits_certainty(cfg.strategy) ? cfg.strategy : StrategyId::vanilla;

    for_each_index(items.size(), ex.workers, [&](std::size_t i) {
        ItemRecord r;
        try {
            switch (cfg.ra_mode) {
                case RaMode::none: {
                    auto e = elicit_item(items[i], ex, cfg.strategy);
                    r.item_id = items[i].id;
                    r.turns = std::move(e.turns);
                    r.certainty = e.certainty;
                    r.certainty_parsed = e.certainty_parsed;
                    r.elicited_correct = e.correct;
                    r.final_answer = std::move(e.answer);
                    r.correct = e.correct;
                    break;
                }
                case RaMode::adaptive: r = answer_adaptive(items[i], ex, cfg.strategy, *retriever); break;
                case RaMode::static_ra: r = answer_static(items[i], ex, *retriever, unaugmented); break;
            }
        } catch (const std::exception& err) {
            r = ItemRecord{};
            r.item_id = items[i].id;
            r.skipped = true;
            r.error = err.what();
            spdlog::warn("item {} skipped: {}", items[i].id, err.what());
        }
        r.index = i;
        ledger.records[i] = std::move(r);
    });

    std::int64_t correct = 0;
    std::int64_t triggered = 0;
    for (const auto& r : ledger.records) {
        if (r.skipped) {
            ++ledger.skipped;
            continue;
        }
        ++ledger.completed;
        if (r.correct) ++correct;
        if (r.retrieval_triggered) ++triggered;
        if (r.fallback) ++ledger.fallbacks;
        if (r.hit) ++ledger.augmented;
        if (cfg.ra_mode != RaMode::static_ra && r.certainty && r.elicited_correct) {
            ledger.tally = tally_add(ledger.tally, *r.elicited_correct, r.certainty->is_certain());
        }
        for (const auto& t : r.turns) {
            ledger.cost.prompt_chars += static_cast<std::int64_t>(t.rendered_prompt.size());
            ledger.cost.completion_chars += static_cast<std::int64_t>(t.raw_completion.size());
            if (t.strategy != StrategyId::ra_answer) {
                ledger.cost.gate_prompt_chars += static_cast<std::int64_t>(t.rendered_prompt.size());
                ledger.cost.gate_completion_chars += static_cast<std::int64_t>(t.raw_completion.size());
            }
        }
    }
    if (ledger.tally.total() > 0) ledger.metrics = boundary_metrics(ledger.tally);
    if (ledger.completed > 0) {
        ledger.final_accuracy = static_cast<double>(correct) / static_cast<double>(ledger.completed);
        ledger.ra_rate = static_cast<double>(triggered) / static_cast<double>(ledger.completed);
    }
    ledger.triggered = triggered;
    ledger.retriever_calls = retriever ? retriever->calls() - retriever_before : 0;
    ledger.counters = delta(ex.gateway->counters(), counters_before);
    return ledger;
}

std::string RunLedger::serialize() const {
    std::string out;
    json header = {{"kind", "header"}, {"format", "certgate-ledger"}, {"version", 1}, {"config", config}};
    out += header.dump() + "\n";
    for (const auto& r : records) {
        json turns = json::array();
        for (const auto& t : r.turns) turns.push_back(turn_json(t));
        json rec = {{"kind", "item"},
                    {"index", r.index},
                    {"id", r.item_id},
                    {"status", r.skipped ? "skipped" : "completed"},
                    {"error", r.error},
                    {"turns", std::move(turns)},
                    {"certainty", r.certainty ? json(r.certainty->value()) : json(nullptr)},
                    {"certainty_parsed", r.certainty_parsed},
                    {"elicited_correct", r.elicited_correct ? json(*r.elicited_correct) : json(nullptr)},
                    {"retrieval_triggered", r.retrieval_triggered},
                    {"retrieval", r.hit ? hit_json(*r.hit) : json(nullptr)},
                    {"fallback", r.fallback},
                    {"fallback_reason", r.fallback_reason},
                    {"final_answer", r.final_answer},
                    {"correct", r.correct}};
        out += rec.dump() + "\n";
    }
    json footer = {{"kind", "footer"},
                   {"completed", completed},
                   {"skipped", skipped},
                   {"tally", tally_json(tally)},
                   {"metrics", metrics ? metrics_json(*metrics) : json(nullptr)},
                   {"final_accuracy", final_accuracy},
                   {"ra_rate", ra_rate},
                   {"retriever_calls", retriever_calls},
                   {"fallbacks", fallbacks},
                   {"coverage",
                    {{"triggered", triggered},
                     {"augmented", augmented},
                     {"without_document", fallbacks}}},
                   {"counters", counters_json(counters)},
                   {"cost",
                    {{"prompt_chars", cost.prompt_chars},
                     {"completion_chars", cost.completion_chars},
                     {"gate_prompt_chars", cost.gate_prompt_chars},
                     {"gate_completion_chars", cost.gate_completion_chars}}}};
    out += footer.dump() + "\n";
    return out;
}

void RunLedger::write(const std::string& path) const { write_text(path, serialize()); }

std::vector<RelianceRecord> RelianceReport::gold_records() const {
    std::vector<RelianceRecord> out;
    for (const auto& i : items) {
        if (i.skipped) continue;
        out.push_back({i.item_id, i.level, i.plain_answer, i.gold_answer, i.gold_document, i.plain_correct,
                       i.gold_correct});
    }
    return out;
}

std::vector<RelianceRecord> RelianceReport::corrupt_records() const {
    std::vector<RelianceRecord> out;
    for (const auto& i : items) {
        if (i.skipped) continue;
        out.push_back({i.item_id, i.level, i.plain_answer, i.corrupt_answer, i.corrupt_document, i.plain_correct,
                       i.corrupt_correct});
    }
    return out;
}

RelianceReport reliance_study(std::span<const QAItem> items, const Experiment& ex, const RelianceOptions& opts,
                              json config) {
    require_experiment(ex);
    if (items.empty()) throw EmptyDataset("reliance: empty dataset");
    const auto counters_before = ex.gateway->counters();

    RelianceReport report;
    report.config = std::move(config);
    report.items.resize(items.size());
    for_each_index(items.size(), ex.workers, [&](std::size_t i) {
        const auto& item = items[i];
        auto& out = report.items[i];
        out.index = i;
        out.item_id = item.id;
        try {
            auto gold = gold_document(item);
            if (!gold) throw std::invalid_argument("item has no gold document");
            auto plain = elicit_item(item, ex, StrategyId::vanilla);
            auto prudent = elicit_item(item, ex, StrategyId::punish_explain);
            out.c = plain.certainty;
            out.c_hat = prudent.certainty;
            out.level = confidence_level(out.c, out.c_hat);
            out.plain_answer = plain.answer;
            out.plain_correct = plain.correct;

            auto gold_turn = augmented_turn(item, ex, *gold);
            out.gold_document = gold->text;
            out.gold_answer = gold_turn.answer;
            out.gold_correct = answer_is_correct(out.gold_answer, item.gold_answers);

            RetrievalHit corrupt{item.id + "#corrupt", corrupt_document(gold->text, item.gold_answers), kGoldScore,
                                 HitSource::corrupt};
            auto corrupt_turn = augmented_turn(item, ex, corrupt);
            out.corrupt_document = corrupt.text;
            out.corrupt_answer = corrupt_turn.answer;
            out.corrupt_correct = answer_is_correct(out.corrupt_answer, item.gold_answers);

            out.turns = std::move(plain.turns);
            out.turns.insert(out.turns.end(), prudent.turns.begin(), prudent.turns.end());
            out.turns.push_back(std::move(gold_turn));
            out.turns.push_back(std::move(corrupt_turn));
        } catch (const std::exception& err) {
            out = RelianceItem{};
            out.index = i;
            out.item_id = item.id;
            out.skipped = true;
            out.error = err.what();
        }
    });

    for (const auto& i : report.items) {
        if (i.skipped) {
            ++report.skipped;
        } else {
            ++report.level_counts[i.level.value()];
        }
    }
    const auto gold = report.gold_records();
    const auto corrupt = report.corrupt_records();
    report.utilization = bucket_by_level(gold, RelianceMetric::utilization, opts);
    report.corruption = bucket_by_level(corrupt, RelianceMetric::corruption, opts);
    report.counters = delta(ex.gateway->counters(), counters_before);
    return report;
}

std::string RelianceReport::serialize() const {
    std::string out;
    json header = {{"kind", "header"}, {"format", "certgate-reliance"}, {"version", 1}, {"config", config}};
    out += header.dump() + "\n";
    for (const auto& i : items) {
        json turns = json::array();
        for (const auto& t : i.turns) turns.push_back(turn_json(t));
        json rec = {{"kind", "item"}, {"index", i.index}, {"id", i.item_id},
                    {"status", i.skipped ? "skipped" : "completed"}, {"error", i.error}};
        if (!i.skipped) {
            rec["c"] = i.c.value();
            rec["c_hat"] = i.c_hat.value();
            rec["level"] = i.level.value();
            rec["plain_answer"] = i.plain_answer;
            rec["plain_correct"] = i.plain_correct;
            rec["gold_document"] = i.gold_document;
            rec["gold_answer"] = i.gold_answer;
            rec["gold_correct"] = i.gold_correct;
            rec["corrupt_document"] = i.corrupt_document;
            rec["corrupt_answer"] = i.corrupt_answer;
            rec["corrupt_correct"] = i.corrupt_correct;
            rec["turns"] = std::move(turns);
        }
        out += rec.dump() + "\n";
    }
    auto level_map = [](const auto& m) {
        json j = json::object();
        for (const auto& [level, v] : m) j[std::to_string(level)] = v;
        return j;
    };
    json footer = {{"kind", "footer"},
                   {"skipped", skipped},
                   {"level_counts", level_map(level_counts)},
                   {"utilization_ratio", level_map(utilization)},
                   {"corruption_rate", level_map(corruption)},
                   {"counters", counters_json(counters)}};
    out += footer.dump() + "\n";
    return out;
}

void RelianceReport::write(const std::string& path) const { write_text(path, serialize()); }

}  // namespace certgate
