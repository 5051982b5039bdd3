#include "certgate/report.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <algorithm>
#include <sstream>

#include "certgate/core.hpp"
#include "certgate/text.hpp"

namespace certgate {

using nlohmann::json;

namespace {

std::string dataset_label(const json& config) {
    const auto path = config.value("/dataset/path"_json_pointer, std::string());
    return path.empty() ? std::string("dataset") : std::filesystem::path(path).filename().string();
}

std::string model_label(const json& config) {
    return config.value("/model/name"_json_pointer, std::string("model"));
}

std::string fixed(const json& v, int digits) {
    if (!v.is_number()) return "-";
    return fmt::format("{:.{}f}", v.get<double>(), digits);
}

std::string percent(double v) { return fmt::format("{:.1f}%", 100.0 * v); }

constexpr std::string_view kRetrieverRows[] = {"sparse", "dense", "gold", "corrupt"};

std::string row_name(std::string_view retriever) {
    if (retriever == "sparse") return "Sparse";
    if (retriever == "dense") return "Dense";
    if (retriever == "gold") return "Gold";
    if (retriever == "corrupt") return "Corrupt";
    return std::string(retriever);
}

// Column order for the retrieval table: Static first, then strategies in
// their canonical order.
int column_rank(const std::string& column) {
    if (column == "static") return -1;
    try {
        return static_cast<int>(parse_strategy(column));
    } catch (const std::invalid_argument&) {
        return 100;
    }
}

struct RaGroup {
    std::vector<std::string> columns;
    std::map<std::string, std::string> ra_rate;
    std::map<std::string, std::string> none;
    std::map<std::pair<std::string, std::string>, std::string> acc;  // (retriever, column)
    std::set<std::string> retrievers;
};

}  // namespace

bool LoadedLedger::is_reliance() const { return header.value("format", std::string()) == "certgate-reliance"; }

LoadedLedger parse_ledger(std::string_view content, std::string label) {
    LoadedLedger out;
    out.label = std::move(label);
    std::istringstream in{std::string(content)};
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        auto rec = json::parse(line);
        const auto kind = rec.value("kind", std::string());
        if (kind == "header") {
            out.header = std::move(rec);
        } else if (kind == "item") {
            out.items.push_back(std::move(rec));
        } else if (kind == "footer") {
            out.footer = std::move(rec);
        }
    }
    const auto format = out.header.is_object() ? out.header.value("format", std::string()) : std::string();
    if (format != "certgate-ledger" && format != "certgate-reliance") {
        throw std::runtime_error(fmt::format("{}: not a run ledger", out.label));
    }
    if (out.header.value("version", 0) != 1) throw std::runtime_error(fmt::format("{}: unsupported ledger version", out.label));
    if (!out.footer.is_object()) throw std::runtime_error(fmt::format("{}: ledger has no footer (incomplete run?)", out.label));
    return out;
}

LoadedLedger read_ledger(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open ledger '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ledger(ss.str(), std::filesystem::path(path).filename().string());
}

std::string strategy_display_name(std::string_view strategy) {
    if (strategy == "vanilla") return "Vanilla";
    if (strategy == "punish") return "Punish";
    if (strategy == "challenge") return "Challenge";
    if (strategy == "step_by_step") return "Step-by-Step";
    if (strategy == "generate") return "Generate";
    if (strategy == "explain") return "Explain";
    if (strategy == "punish_explain") return "Punish+Explain";
    if (strategy == "static") return "Static";
    return std::string(strategy);
}

Report build_report(const std::vector<LoadedLedger>& ledgers) {
    json runs = json::array();
    json reliance = json::array();
    std::string boundary_rows;
    std::map<std::pair<std::string, std::string>, RaGroup> ra_groups;  // (model, dataset)
    std::vector<std::pair<std::string, std::string>> ra_order;
    std::string reliance_tables;

    for (const auto& l : ledgers) {
        const auto& config = l.header.at("config");
        if (l.is_reliance()) {
            reliance.push_back({{"source", l.label},
                                {"config", config},
                                {"skipped", l.footer.value("skipped", 0)},
                                {"level_counts", l.footer.at("level_counts")},
                                {"utilization_ratio", l.footer.at("utilization_ratio")},
                                {"corruption_rate", l.footer.at("corruption_rate")}});
            std::string t = fmt::format("\n## Reliance by confidence level: {} on {}\n\n", model_label(config),
                                        dataset_label(config));
            t += "| Level | Items | Utilization ratio (gold) | Corruption rate (corrupt) |\n";
            t += "|---|---|---|---|\n";
            for (int level = 0; level < 4; ++level) {
                const auto key = std::to_string(level);
                const auto& counts = l.footer.at("level_counts");
                const auto n = counts.contains(key) ? counts[key].get<std::int64_t>() : 0;
                const auto& u = l.footer.at("utilization_ratio");
                const auto& c = l.footer.at("corruption_rate");
                t += fmt::format("| {} | {} | {} | {} |\n", level, n, u.contains(key) ? fixed(u[key], 4) : "-",
                                 c.contains(key) ? fixed(c[key], 4) : "-");
            }
            reliance_tables += t;
            continue;
        }

        const auto& f = l.footer;
        runs.push_back({{"source", l.label},
                        {"config", config},
                        {"completed", f.at("completed")},
                        {"skipped", f.at("skipped")},
                        {"tally", f.at("tally")},
                        {"metrics", f.at("metrics")},
                        {"final_accuracy", f.at("final_accuracy")},
                        {"ra_rate", f.at("ra_rate")},
                        {"retriever_calls", f.at("retriever_calls")},
                        {"fallbacks", f.at("fallbacks")},
                        {"coverage", f.value("coverage", json(nullptr))},
                        {"counters", f.at("counters")},
                        {"cost", f.at("cost")}});

        const auto strategy = config.value("strategy", std::string());
        const auto ra_mode = config.value("ra_mode", std::string("none"));
        const auto& m = f.at("metrics");
        if (m.is_object()) {
            boundary_rows += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} | {} |\n", model_label(config),
                                         dataset_label(config), strategy_display_name(strategy), m.at("n").get<std::int64_t>(),
                                         fixed(m.at("unc_rate"), 4), fixed(m.at("accuracy"), 4),
                                         fixed(m.at("conservativeness"), 4), fixed(m.at("overconfidence"), 4),
                                         fixed(m.at("alignment"), 4));
        }

        const auto key = std::make_pair(model_label(config), dataset_label(config));
        if (!ra_groups.contains(key)) ra_order.push_back(key);
        auto& g = ra_groups[key];
        const std::string column = ra_mode == "static" ? "static" : strategy;
        auto add_column = [&g](const std::string& c) {
            if (std::find(g.columns.begin(), g.columns.end(), c) == g.columns.end()) g.columns.push_back(c);
        };
        if (ra_mode == "none") {
            if (m.is_object() && !g.none.contains(strategy)) g.none[strategy] = fixed(m.at("accuracy"), 3);
            continue;
        }
        add_column(column);
        const auto retriever = config.value("retriever", std::string());
        g.retrievers.insert(retriever);
        if (!g.ra_rate.contains(column)) {
            g.ra_rate[column] = ra_mode == "static" ? percent(1.0) : percent(f.at("ra_rate").get<double>());
        }
        if (ra_mode == "adaptive" && m.is_object() && !g.none.contains(strategy)) {
            g.none[strategy] = fixed(m.at("accuracy"), 3);
        }
        g.acc.emplace(std::make_pair(retriever, column), fixed(f.at("final_accuracy"), 3));
    }

    std::string tables;
    if (!boundary_rows.empty()) {
        tables += "## Knowledge-boundary perception\n\n";
        tables += "| Model | Dataset | Strategy | N | Unc-rate | Acc | Conserv. | Overconf. | Alignment |\n";
        tables += "|---|---|---|---|---|---|---|---|---|\n";
        tables += boundary_rows;
    }
    for (const auto& key : ra_order) {
        auto& g = ra_groups[key];
        if (g.columns.empty()) continue;
        std::stable_sort(g.columns.begin(), g.columns.end(),
                         [](const std::string& a, const std::string& b) { return column_rank(a) < column_rank(b); });
        if (!g.none.contains("static") && g.none.contains("vanilla")) g.none["static"] = g.none["vanilla"];

        tables += fmt::format("\n## Retrieval augmentation: {} on {}\n\n| Retrieval |", key.first, key.second);
        for (const auto& c : g.columns) tables += fmt::format(" {} |", strategy_display_name(c));
        tables += "\n|---|";
        for (std::size_t i = 0; i < g.columns.size(); ++i) tables += "---|";
        tables += "\n| RA Rate |";
        for (const auto& c : g.columns) tables += fmt::format(" {} |", g.ra_rate.contains(c) ? g.ra_rate[c] : "-");
        tables += "\n| None |";
        for (const auto& c : g.columns) tables += fmt::format(" {} |", g.none.contains(c) ? g.none[c] : "-");
        tables += "\n";
        for (const auto r : kRetrieverRows) {
            if (!g.retrievers.contains(std::string(r))) continue;
            tables += fmt::format("| {} |", row_name(r));
            for (const auto& c : g.columns) {
                const auto it = g.acc.find({std::string(r), c});
                tables += fmt::format(" {} |", it == g.acc.end() ? "-" : it->second);
            }
            tables += "\n";
        }
    }
    if (!reliance_tables.empty()) tables += reliance_tables;
    if (!tables.empty() && tables.front() == '\n') tables.erase(0, 1);

    Report report;
    report.json_text = json({{"format", "certgate-report"}, {"version", 1}, {"runs", runs}, {"reliance", reliance}})
                           .dump(2) +
                       "\n";
    report.tables = tables;
    return report;
}

void write_report(const Report& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir);
    for (const auto& [name, content] : {std::pair{"report.json", &report.json_text}, std::pair{"report.md", &report.tables}}) {
        std::ofstream out(base / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot write {}", (base / name).string()));
        out << *content;
    }
}

}  // namespace certgate
