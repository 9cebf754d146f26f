#pragma once

// The remediation loop: refresh the model, inspect, refresh again, replace;
// every visit is priced into a cost ledger and the run stops before any
// action that could push spending past the budget.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "remediate/data_model.hpp"
#include "remediate/decision.hpp"
#include "remediate/features.hpp"
#include "remediate/hazard_model.hpp"

namespace remediate {

struct CostSchedule {
    double c_h = 250.0;         // hydrovac inspection
    double c_r_plus = 5000.0;   // replacement that removed a hazardous line
    double c_r_minus = 2500.0;  // visit that found a safe line

    void validate() const;  // all > 0 and c_r_minus < c_r_plus
};

struct CostLedger {
    std::size_t n_h = 0;
    std::size_t n_r_plus = 0;
    std::size_t n_r_minus = 0;
    double total = 0.0;

    void record_inspection(const CostSchedule& c);
    void record_replacement(const CostSchedule& c, bool hazardous);
    // total == c_h n_h + c_r_plus n_r_plus + c_r_minus n_r_minus
    bool identity_holds(const CostSchedule& c) const;
    std::size_t replacement_visits() const noexcept { return n_r_plus + n_r_minus; }

    nlohmann::json to_json() const;
    friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

// n_r_plus / (n_r_plus + n_r_minus); absent without replacement visits.
std::optional<double> hit_rate(const CostLedger& ledger);
// total / n_r_plus; absent without a successful replacement.
std::optional<double> effective_cost(const CostLedger& ledger);

// Summary statistics restricted to the first n_slr replacement visits and the
// first n_hvi inspections.
struct Truncation {
    std::size_t n_slr = 0;
    std::size_t n_hvi = 0;
};

struct ExperimentConfig {
    double budget = std::numeric_limits<double>::infinity();
    int epochs = 10;
    std::size_t inspections_per_epoch = 100;   // d
    std::size_t replacements_per_epoch = 500;  // b
    CostSchedule costs;
    std::string policy = "iwal:0.7";
    ModelConfig model;
    double hydrovac_failure_rate = 0.0;
    std::uint64_t seed = 0;
    std::size_t initial_labeled = 0;  // free uniformly sampled labels before epoch 1
    std::optional<std::size_t> stop_after_successes;
    std::optional<Truncation> truncate;
    std::size_t replications = 1;
    std::size_t threads = 1;
    bool track_pool_auroc = true;  // AUROC of each epoch's scores on U against the truth

    void validate() const;  // throws ConfigError
};

// Answers what a visit would find. Truth is fixed up front, so repeated
// queries always agree.
class Environment {
public:
    // Every parcel must be labeled; the labels become the hidden truth.
    static Environment backtest(const CityDataset& labeled);
    static Environment generative(const SyntheticCity& city);
    // Unlabeled template parcels get labels drawn from a k-nearest-neighbor
    // model fit on the labeled ones.
    static Environment simulated(const CityDataset& template_ds, std::size_t k, std::uint64_t seed);

    const std::string& kind() const noexcept { return kind_; }
    // Features only; every parcel unlabeled.
    const CityDataset& city() const noexcept { return city_; }
    std::span<const VerifiedLine> truth() const noexcept { return truth_; }
    const VerifiedLine& truth(std::size_t i) const { return truth_.at(i); }
    std::size_t hazardous_count() const noexcept { return hazardous_; }

private:
    Environment(std::string kind, CityDataset city, std::vector<VerifiedLine> truth);

    std::string kind_;
    CityDataset city_;
    std::vector<VerifiedLine> truth_;
    std::size_t hazardous_ = 0;
};

enum class ActionKind { Inspection, Replacement };
std::string_view to_string(ActionKind k) noexcept;

struct Action {
    int epoch = 0;
    ActionKind kind = ActionKind::Inspection;
    std::string parcel_id;
    bool hazardous = false;
    bool failed = false;        // hydrovac dig that revealed nothing
    double weight = 1.0;        // importance weight given to the inspected label
    bool from_pending = false;  // replacement of a home already found hazardous
    double cost = 0.0;
    double total_after = 0.0;

    nlohmann::json to_json() const;
    static Action from_json(const nlohmann::json& j);
};

enum class StopReason { None, Epochs, Budget, Exhausted, SuccessTarget };
std::string_view to_string(StopReason r) noexcept;
StopReason parse_stop_reason(std::string_view s);

struct ModelSnapshot {
    std::size_t n_labeled = 0;
    std::size_t n_train = 0;
    std::optional<double> pool_auroc;
    double mean_score = 0.0;
    bool spatial_active = false;
    bool recalibration_clamped = false;
    bool weights_clipped = false;
};

struct EpochLog {
    int epoch = 0;
    std::vector<Action> actions;  // in execution order
    CostLedger ledger;            // after the epoch
    ModelSnapshot model;
    std::size_t unlabeled_after = 0;
    std::size_t pending_after = 0;
    StopReason stop = StopReason::None;

    nlohmann::json to_json() const;
    static EpochLog from_json(const nlohmann::json& j);
};

struct Summary {
    CostLedger ledger;
    std::optional<double> hit_rate;
    std::optional<double> effective_cost;
    bool truncated = false;
    std::optional<Truncation> truncation;
    std::size_t epochs = 0;
    StopReason stop = StopReason::None;

    nlohmann::json to_json() const;
};

struct ExperimentLog {
    std::vector<EpochLog> epochs;
    CostLedger ledger;
    StopReason stop = StopReason::None;
    std::uint64_t seed = 0;
    std::size_t environment_hazardous = 0;
    FeatureEncoder encoder;
    HazardModel final_model;

    std::vector<Action> actions() const;
};

// Runs one experiment step by step; run_experiment drives it to the end.
class Experiment {
public:
    Experiment(ExperimentConfig cfg, const Environment& env);

    bool done() const noexcept { return stop_ != StopReason::None; }
    StopReason stop_reason() const noexcept { return stop_; }
    int epoch() const noexcept { return epoch_; }
    const CostLedger& ledger() const noexcept { return ledger_; }
    const CityDataset& city() const noexcept { return city_; }
    const std::vector<std::string>& pending() const noexcept { return pending_; }
    const FeatureEncoder& encoder() const noexcept { return encoder_; }
    const HazardModel& model() const noexcept { return model_; }

    // Precondition: !done().
    EpochLog run_epoch();

private:
    std::vector<std::size_t> unlabeled_rows() const;
    void refit();
    bool afford(double cost) const;
    bool success_target_reached() const;
    void observe(std::size_t row, ObservationSource source);
    void check_ledger() const;

    ExperimentConfig cfg_;
    const Environment* env_;
    InspectionPolicy policy_;
    FeatureEncoder encoder_;
    FeatureMatrix features_;
    CityDataset city_;
    std::vector<double> weight_;
    std::vector<bool> replaced_;
    std::vector<std::string> pending_;
    CostLedger ledger_;
    HazardModel model_;
    Rng rng_;
    int epoch_ = 0;
    StopReason stop_ = StopReason::None;
};

ExperimentLog run_experiment(const ExperimentConfig& cfg, const Environment& env);

// One experiment per replication; replication r uses derive_seed(seed, r)
// (the seed itself when there is a single replication).
std::vector<ExperimentLog> run_replications(const ExperimentConfig& cfg, const Environment& env);

// Re-prices every logged action against the environment. Throws DataError when
// an outcome disagrees with the truth or a home is visited twice.
CostLedger replay(std::span<const Action> actions, const Environment& env, const CostSchedule& costs);

Summary summarize(std::span<const Action> actions, const CostSchedule& costs,
                  const std::optional<Truncation>& truncation);
Summary summarize(const ExperimentLog& log, const ExperimentConfig& cfg);

}  // namespace remediate
