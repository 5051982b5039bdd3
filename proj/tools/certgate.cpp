// certgate command-line interface.
//
//   certgate ingest   --corpus corpus.jsonl --out index.json
//   certgate convert  --format dpr-json --input nq-test.json --out nq.jsonl
//   certgate sample   --dataset nq.jsonl --n 500 --seed 0 --require-gold --out nq-500.jsonl
//   certgate elicit   --dataset nq-500.jsonl --strategy punish --backend remote ... --out runs/
//   certgate ra       --dataset nq-500.jsonl --strategy explain --ra-mode adaptive --retriever sparse --index index.json --out runs/
//   certgate reliance --dataset nq-500.jsonl --out runs/
//   certgate report   runs/*.jsonl --out report/
//   certgate p-at-1   --dataset nq-500.jsonl --retriever sparse --index index.json

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "certgate/dataset.hpp"
#include "certgate/hash.hpp"
#include "certgate/llm_gateway.hpp"
#include "certgate/pipeline.hpp"
#include "certgate/prompts.hpp"
#include "certgate/report.hpp"
#include "certgate/retrieval.hpp"

namespace fs = std::filesystem;
using namespace certgate;

namespace {

struct ModelOptions {
    std::string model = "mock";
    std::string backend = "mock";
    std::string endpoint;
    std::string credentials_env;
    std::string script;
    std::string cache_dir;
    int max_tokens = 256;
    double temperature = 0.0;
    int retries = 3;
    int retry_delay_ms = 500;
    std::string response_pointer = "/choices/0/message/content";
};

struct ExperimentOptions {
    std::string templates;
    std::string hedges;
    std::string unparseable = "certain";
    int workers = 4;
    bool no_retriever_fallback = false;
};

struct RetrieverOptions {
    std::string retriever = "sparse";
    std::string index;
    std::string dense_endpoint;
    std::string dense_path = "/retrieve";
    double k1 = 0.9;
    double b = 0.4;
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
    cmd->add_option("--model", o.model, "Model name sent to the backend and used in cache keys");
    cmd->add_option("--backend", o.backend, "mock | remote | replay")
        ->check(CLI::IsMember({"mock", "remote", "replay", "scripted_mock", "remote_chat", "replay_cache_only"}));
    cmd->add_option("--endpoint", o.endpoint, "Chat-completion URL for the remote backend");
    cmd->add_option("--credentials-env", o.credentials_env, "Environment variable holding the bearer token");
    cmd->add_option("--script", o.script, "Mock script (JSON rules) for the mock backend");
    cmd->add_option("--cache-dir", o.cache_dir, "Directory of the persistent response cache");
    cmd->add_option("--max-tokens", o.max_tokens, "Maximum output tokens")->check(CLI::PositiveNumber);
    cmd->add_option("--temperature", o.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
    cmd->add_option("--retries", o.retries, "Retries for transient backend failures")->check(CLI::NonNegativeNumber);
    cmd->add_option("--retry-delay-ms", o.retry_delay_ms, "Base backoff delay")->check(CLI::NonNegativeNumber);
    cmd->add_option("--response-pointer", o.response_pointer, "JSON pointer to the completion text");
}

void add_experiment_options(CLI::App* cmd, ExperimentOptions& o) {
    cmd->add_option("--templates", o.templates, "Template file (YAML); defaults are built in");
    cmd->add_option("--hedges", o.hedges, "Hedge-phrase list, one phrase per line");
    cmd->add_option("--unparseable", o.unparseable, "Certainty for unparseable completions")
        ->check(CLI::IsMember({"certain", "uncertain"}));
    cmd->add_option("--workers", o.workers, "Concurrent items")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-retriever-fallback", o.no_retriever_fallback,
                  "Skip items whose retriever fails instead of answering without a document");
}

void add_retriever_options(CLI::App* cmd, RetrieverOptions& o) {
    cmd->add_option("--retriever", o.retriever, "sparse | dense | gold | corrupt")
        ->check(CLI::IsMember({"sparse", "dense", "gold", "corrupt"}));
    cmd->add_option("--index", o.index, "Corpus index built by `ingest` (sparse retriever)");
    cmd->add_option("--dense-endpoint", o.dense_endpoint, "Base URL of the dense retrieval service");
    cmd->add_option("--dense-path", o.dense_path, "Request path of the dense retrieval service");
    cmd->add_option("--k1", o.k1, "BM25 k1");
    cmd->add_option("--b", o.b, "BM25 b");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::unique_ptr<LlmGateway> make_gateway(const ModelOptions& o) {
    ModelSpec spec;
    spec.backend = parse_backend(o.backend);
    spec.model_name = o.model;
    if (!o.endpoint.empty()) spec.endpoint = o.endpoint;
    if (!o.credentials_env.empty()) spec.credentials_ref = o.credentials_env;
    if (!o.script.empty()) spec.script = std::make_shared<ScriptedMock>(ScriptedMock::load(o.script));
    spec.decode.max_output_tokens = o.max_tokens;
    spec.decode.temperature = o.temperature;
    spec.retry.max_retries = o.retries;
    spec.retry.base_delay_ms = o.retry_delay_ms;
    spec.wire.response_pointer = o.response_pointer;
    auto cache = o.cache_dir.empty() ? std::make_shared<ResponseCache>() : std::make_shared<ResponseCache>(o.cache_dir);
    return std::make_unique<LlmGateway>(std::move(spec), std::move(cache));
}

TemplateSet load_templates(const ExperimentOptions& o) {
    return o.templates.empty() ? TemplateSet::defaults() : TemplateSet::load(o.templates);
}

Experiment make_experiment(const ExperimentOptions& o, LlmGateway& gw, const TemplateSet& templates) {
    Experiment ex;
    ex.gateway = &gw;
    ex.templates = &templates;
    ex.policy.unparseable_as_certain = o.unparseable == "certain";
    if (!o.hedges.empty()) ex.policy.hedges = HedgeList::load(o.hedges);
    ex.workers = o.workers;
    ex.fallback_on_retriever_error = !o.no_retriever_fallback;
    return ex;
}

std::unique_ptr<Retriever> make_retriever(const RetrieverOptions& o, std::optional<Bm25Params>& bm25) {
    switch (parse_hit_source(o.retriever)) {
        case HitSource::sparse: {
            if (o.index.empty()) throw CLI::ValidationError("--index", "sparse retrieval needs --index");
            Bm25Params params{o.k1, o.b};
            bm25 = params;
            return std::make_unique<SparseRetriever>(std::make_shared<const CorpusStore>(CorpusStore::load(o.index)),
                                                     params);
        }
        case HitSource::dense: {
            if (o.dense_endpoint.empty()) throw CLI::ValidationError("--dense-endpoint", "dense retrieval needs an endpoint");
            return std::make_unique<DenseRetriever>(DenseClientConfig{o.dense_endpoint, o.dense_path});
        }
        case HitSource::gold: return std::make_unique<GoldRetriever>();
        case HitSource::corrupt: return std::make_unique<CorruptRetriever>();
    }
    return nullptr;
}

void print_summary(const RunLedger& l) {
    fmt::print("completed {}  skipped {}  accuracy {:.4f}  ra_rate {:.4f}\n", l.completed, l.skipped,
               l.final_accuracy, l.ra_rate);
    if (l.metrics) {
        const auto& m = *l.metrics;
        fmt::print("Unc-rate {:.4f}  Acc {:.4f}  Conserv. {:.4f}  Overconf. {:.4f}  Alignment {:.4f}\n", m.unc_rate,
                   m.accuracy, m.conservativeness, m.overconfidence, m.alignment);
    }
    fmt::print("llm calls {}  cache hits {}  network requests {}  retriever calls {}\n", l.counters.calls,
               l.counters.cache_hits, l.counters.network_requests, l.retriever_calls);
}

int run_ledger_command(const std::string& dataset, const std::string& out_dir, RunConfig cfg, const ModelOptions& mo,
                       const ExperimentOptions& eo, const RetrieverOptions* ro) {
    cfg.dataset_path = dataset;
    cfg.output_dir = out_dir;
    cfg.validate();
    const auto items = load_dataset(dataset);
    auto gw = make_gateway(mo);
    const auto templates = load_templates(eo);
    const auto ex = make_experiment(eo, *gw, templates);

    std::optional<Bm25Params> bm25;
    std::unique_ptr<Retriever> retriever;
    if (cfg.ra_mode != RaMode::none) retriever = make_retriever(*ro, bm25);

    auto config = config_snapshot(cfg, ex, sha256_hex(read_file(dataset)), bm25);
    const auto ledger = run_experiment(items, cfg, ex, retriever.get(), std::move(config));

    fs::create_directories(out_dir);
    std::string name = cfg.ra_mode == RaMode::none
                           ? fmt::format("elicit-{}.jsonl", to_string(cfg.strategy))
                           : fmt::format("ra-{}-{}-{}.jsonl", to_string(cfg.ra_mode), to_string(cfg.strategy),
                                         to_string(cfg.retriever));
    const auto path = (fs::path(out_dir) / name).string();
    ledger.write(path);
    print_summary(ledger);
    fmt::print("ledger: {}\n", path);
    return ledger.completed == 0 ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certainty-gated retrieval augmentation experiments"};
    app.require_subcommand(1);
    spdlog::set_pattern("[%l] %v");
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log errors");

    // ingest
    std::string corpus, index_out;
    auto* ingest = app.add_subcommand("ingest", "Build a BM25 corpus index from line-delimited {id, text} records");
    ingest->add_option("--corpus", corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", index_out, "Index file to write")->required();

    // convert
    std::string conv_format, conv_in, conv_out, id_prefix = "q";
    std::size_t max_answer_tokens = 5;
    auto* convert = app.add_subcommand("convert", "Convert a public QA export to the internal dataset format");
    convert->add_option("--format", conv_format, "dpr-json | dpr-qa-tsv | nq-open | hotpot")
        ->required()
        ->check(CLI::IsMember({"dpr-json", "dpr-qa-tsv", "nq-open", "hotpot"}));
    convert->add_option("--input", conv_in, "Source file")->required()->check(CLI::ExistingFile);
    convert->add_option("--out", conv_out, "Dataset file to write")->required();
    convert->add_option("--id-prefix", id_prefix, "Prefix for generated item ids");
    convert->add_option("--max-answer-tokens", max_answer_tokens, "Longest answer still counted as short");

    // sample
    std::string sample_in, sample_out;
    std::size_t sample_n = 500;
    std::uint64_t seed = 0;
    bool require_gold = false;
    auto* sample = app.add_subcommand("sample", "Seeded random subset of a dataset");
    sample->add_option("--dataset", sample_in, "Dataset file")->required()->check(CLI::ExistingFile);
    sample->add_option("--n", sample_n, "Subset size");
    sample->add_option("--seed", seed, "Random seed");
    sample->add_flag("--require-gold", require_gold, "Only sample items with gold documents");
    sample->add_option("--out", sample_out, "Dataset file to write")->required();

    // elicit
    std::string dataset, out_dir, strategy = "vanilla", ra_mode = "adaptive";
    double gamma = 0.0;
    ModelOptions mo;
    ExperimentOptions eo;
    RetrieverOptions ro;
    auto* elicit_cmd = app.add_subcommand("elicit", "Elicit answers and certainty with one strategy");
    elicit_cmd->add_option("--dataset", dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    elicit_cmd->add_option("--strategy", strategy, "Prompting strategy");
    elicit_cmd->add_option("--seed", seed, "Recorded in the ledger");
    elicit_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_model_options(elicit_cmd, mo);
    add_experiment_options(elicit_cmd, eo);

    // ra
    auto* ra_cmd = app.add_subcommand("ra", "Static or adaptive retrieval augmentation");
    ra_cmd->add_option("--dataset", dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    ra_cmd->add_option("--strategy", strategy, "Gating strategy (adaptive) or fallback strategy (static)");
    ra_cmd->add_option("--ra-mode", ra_mode, "static | adaptive")->check(CLI::IsMember({"static", "adaptive"}));
    ra_cmd->add_option("--seed", seed, "Recorded in the ledger");
    ra_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_model_options(ra_cmd, mo);
    add_experiment_options(ra_cmd, eo);
    add_retriever_options(ra_cmd, ro);

    // reliance
    bool over_plain_correct = false;
    auto* reliance_cmd = app.add_subcommand("reliance", "Document reliance by confidence level (gold and corrupt)");
    reliance_cmd->add_option("--dataset", dataset, "Dataset file with gold documents")->required()->check(CLI::ExistingFile);
    reliance_cmd->add_option("--gamma", gamma, "Overlap threshold");
    reliance_cmd->add_option("--seed", seed, "Recorded in the ledger");
    reliance_cmd->add_flag("--corruption-over-correct", over_plain_correct,
                           "Divide corruption counts by plain-correct items instead of all items");
    reliance_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_model_options(reliance_cmd, mo);
    add_experiment_options(reliance_cmd, eo);

    // report
    std::vector<std::string> ledgers;
    auto* report_cmd = app.add_subcommand("report", "Tables and JSON summary from run ledgers");
    report_cmd->add_option("ledgers", ledgers, "Ledger files")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--out", out_dir, "Output directory")->required();

    // p-at-1
    auto* p1_cmd = app.add_subcommand("p-at-1", "Precision@1 of a retriever over a dataset");
    p1_cmd->add_option("--dataset", dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    add_retriever_options(p1_cmd, ro);

    // templates
    std::string templates_out;
    auto* templates_cmd = app.add_subcommand("templates", "Write the built-in prompt templates as YAML");
    templates_cmd->add_option("--out", templates_out, "File to write (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);
    if (quiet) spdlog::set_level(spdlog::level::err);

    try {
        if (*ingest) {
            const auto store = CorpusStore::ingest(corpus);
            store.save(index_out);
            fmt::print("indexed {} documents (average length {:.2f} tokens) -> {}\n", store.size(),
                       store.average_length(), index_out);
            return 0;
        }
        if (*convert) {
            std::ifstream in(conv_in);
            ConvertOptions opts;
            opts.id_prefix = id_prefix;
            opts.max_answer_tokens = max_answer_tokens;
            ConvertStats stats;
            const auto items = convert_dataset(in, parse_source_format(conv_format), opts, &stats);
            save_dataset(conv_out, items);
            fmt::print("read {}  kept {}  dropped (no short answer) {} -> {}\n", stats.read, stats.kept,
                       stats.dropped_no_short_answer, conv_out);
            return 0;
        }
        if (*sample) {
            const auto items = load_dataset(sample_in);
            const auto subset = sample_dataset(items, sample_n, seed, require_gold);
            save_dataset(sample_out, subset);
            fmt::print("sampled {} of {} items (seed {}) -> {}\n", subset.size(), items.size(), seed, sample_out);
            return 0;
        }
        if (*elicit_cmd) {
            RunConfig cfg;
            cfg.strategy = parse_strategy(strategy);
            cfg.ra_mode = RaMode::none;
            cfg.seed = seed;
            return run_ledger_command(dataset, out_dir, cfg, mo, eo, nullptr);
        }
        if (*ra_cmd) {
            RunConfig cfg;
            cfg.strategy = parse_strategy(strategy);
            cfg.ra_mode = parse_ra_mode(ra_mode);
            cfg.retriever = parse_hit_source(ro.retriever);
            cfg.seed = seed;
            return run_ledger_command(dataset, out_dir, cfg, mo, eo, &ro);
        }
        if (*reliance_cmd) {
            const auto items = load_dataset(dataset);
            auto gw = make_gateway(mo);
            const auto templates = load_templates(eo);
            const auto ex = make_experiment(eo, *gw, templates);
            RelianceOptions opts;
            opts.gamma = gamma;
            opts.corruption_over_plain_correct = over_plain_correct;
            RunConfig cfg;
            cfg.dataset_path = dataset;
            cfg.gamma = gamma;
            cfg.seed = seed;
            cfg.strategy = StrategyId::punish_explain;
            auto config = config_snapshot(cfg, ex, sha256_hex(read_file(dataset)));
            config.erase("retriever");
            config.erase("ra_mode");
            config["strategies"] = {"vanilla", "punish_explain"};
            config.erase("strategy");
            config["corruption_over_plain_correct"] = over_plain_correct;
            const auto rep = reliance_study(items, ex, opts, std::move(config));
            fs::create_directories(out_dir);
            const auto path = (fs::path(out_dir) / "reliance.jsonl").string();
            rep.write(path);
            fmt::print("level  items  utilization  corruption\n");
            for (int level = 0; level < 4; ++level) {
                const auto n = rep.level_counts.contains(level) ? rep.level_counts.at(level) : 0;
                auto cell = [&](const std::map<int, double>& m) {
                    return m.contains(level) ? fmt::format("{:.4f}", m.at(level)) : std::string("-");
                };
                fmt::print("{:>5}  {:>5}  {:>11}  {:>10}\n", level, n, cell(rep.utilization), cell(rep.corruption));
            }
            fmt::print("skipped {}\nledger: {}\n", rep.skipped, path);
            return 0;
        }
        if (*report_cmd) {
            std::vector<LoadedLedger> loaded;
            for (const auto& p : ledgers) loaded.push_back(read_ledger(p));
            const auto rep = build_report(loaded);
            write_report(rep, out_dir);
            fmt::print("{}", rep.tables);
            return 0;
        }
        if (*p1_cmd) {
            const auto items = load_dataset(dataset);
            std::optional<Bm25Params> bm25;
            auto retriever = make_retriever(ro, bm25);
            const auto p = precision_at_1(items, *retriever);
            fmt::print("retriever {}  questions {}  with hit {}  P@1 {:.4f}\n", ro.retriever, p.questions, p.with_hit,
                       p.precision);
            return 0;
        }
        if (*templates_cmd) {
            const auto yaml = TemplateSet::defaults().to_yaml();
            if (templates_out.empty()) {
                std::cout << yaml;
            } else {
                std::ofstream(templates_out, std::ios::binary | std::ios::trunc) << yaml;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
