#pragma once

// JSON configuration for every CLI command. Unknown keys and wrongly typed
// values raise ConfigError naming the offending key.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "remediate/data_model.hpp"
#include "remediate/engine.hpp"
#include "remediate/hazard_model.hpp"
#include "remediate/metrics.hpp"

namespace remediate {

nlohmann::json load_json_file(const std::filesystem::path& path);

SyntheticCityConfig parse_synthetic_config(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticCityConfig& c);

ModelConfig parse_model_config(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);

CostSchedule parse_costs(const nlohmann::json& j);
nlohmann::json to_json(const CostSchedule& c);

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

// "n_slr,n_hvi"
Truncation parse_truncation(std::string_view text);

// Either a synthetic city or parcel/observation files.
struct DataSource {
    std::optional<SyntheticCityConfig> synthetic;
    std::filesystem::path parcels;
    std::filesystem::path observations;  // optional
    // Synthetic cities only: share of parcels whose truth is revealed (epoch
    // stamps come from the generator).
    double labeled_fraction = 1.0;

    nlohmann::json to_json() const;
};

// `base` resolves relative paths.
DataSource parse_data_source(const nlohmann::json& j, const std::filesystem::path& base);

struct EvaluateConfig {
    DataSource data;
    ModelConfig model;
    double holdout_fraction = 0.25;
    double top_fraction = 0.81;
    std::size_t reliability_bins = 10;
    LearningCurveConfig learning;
    int temporal_period = 1;
    bool prevalence = true;
    PrevalenceConfig prevalence_cfg;
    std::uint64_t seed = 0;
};

struct RunConfig {
    DataSource data;
    std::string environment = "backtest";  // backtest | generative | simulated
    std::size_t knn_k = 5;
    ExperimentConfig experiment;
    // Overrides applied to the experiment for the comparison run; absent = no baseline.
    std::optional<nlohmann::json> baseline;
    std::uint64_t seed = 0;
};

EvaluateConfig parse_evaluate_config(const nlohmann::json& j, const std::filesystem::path& base);
// `command` is "backtest" or "simulate"; it fixes the default environment.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base,
                           std::string_view command);

// Experiment config with the baseline overrides merged in.
ExperimentConfig baseline_experiment(const RunConfig& cfg);

// Points every random stream at `seed`: the synthetic city uses it directly,
// everything else gets a derived child seed.
void reseed(EvaluateConfig& cfg, std::uint64_t seed);
void reseed(RunConfig& cfg, std::uint64_t seed);

// Record-only greedy replacement without inspections.
nlohmann::json default_baseline();

}  // namespace remediate
