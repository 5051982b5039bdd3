#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace certgate {

/// A run or reliance ledger read back from disk.
struct LoadedLedger {
    std::string label;
    nlohmann::json header;
    std::vector<nlohmann::json> items;
    nlohmann::json footer;

    bool is_reliance() const;
};

/// Throws std::runtime_error on a missing header/footer or unknown format.
LoadedLedger parse_ledger(std::string_view content, std::string label);
LoadedLedger read_ledger(const std::string& path);

struct Report {
    /// Machine-readable: every run's aggregates plus its config snapshot.
    std::string json_text;
    /// Markdown tables: boundary metrics (Unc-rate, Acc, Conserv.,
    /// Overconf., Alignment), retrieval augmentation (RA Rate and
    /// None/Sparse/Dense/Gold rows) and reliance buckets.
    std::string tables;
};

/// Deterministic in its input: the same ledgers give byte-identical output.
Report build_report(const std::vector<LoadedLedger>& ledgers);

/// Writes report.json and report.md into `out_dir`.
void write_report(const Report& report, const std::string& out_dir);

std::string strategy_display_name(std::string_view strategy);

}  // namespace certgate
