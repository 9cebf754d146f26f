#pragma once

// Builds the output bundles of the CLI commands. A bundle is assembled in
// memory (relative path -> file contents) and written in one go, so identical
// inputs give byte-identical directories.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "remediate/config.hpp"
#include "remediate/engine.hpp"

namespace remediate {

enum class TableFormat { Csv, Json };
TableFormat parse_table_format(std::string_view text);

struct Bundle {
    std::map<std::string, std::string> files;

    void write(const std::filesystem::path& dir) const;
};

// Labeled or partially labeled dataset described by a data source.
CityDataset load_dataset(const DataSource& source);

Environment make_environment(const RunConfig& cfg);

Bundle generate_bundle(const SyntheticCityConfig& cfg);
Bundle evaluate_bundle(const EvaluateConfig& cfg, TableFormat format);
// `command` is "backtest" or "simulate".
Bundle run_bundle(const RunConfig& cfg, TableFormat format, std::string_view command);
// Re-summarizes existing run bundles, optionally with a different truncation.
Bundle report_bundle(const std::vector<std::filesystem::path>& bundles, const std::optional<Truncation>& truncation,
                     TableFormat format);

// Cumulative ledger after every action, one row per action.
std::string ledger_csv(std::span<const Action> actions, std::size_t replication);

}  // namespace remediate
