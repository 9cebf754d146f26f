#pragma once

// The statistical model used by the engine: a learned classifier (or a fixed
// rule) followed by precinct-level recalibration.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "remediate/classifier.hpp"
#include "remediate/data_model.hpp"
#include "remediate/features.hpp"
#include "remediate/spatial_bayes.hpp"

namespace remediate {

enum class ModelKind {
    Boosted,
    Logistic,
    Record,    // fixed rule on the city record: hazardous 0.9, blank/unknown 0.5, else 0.1
    Constant,  // 0.5 everywhere
    Oracle,    // reads the environment's truth; for upper-bound runs only
};

ModelKind parse_model_kind(std::string_view text);
std::string_view to_string(ModelKind k) noexcept;

enum class LabelMode {
    Single,      // one model on the combined label
    PerPortion,  // one model per portion, combined as 1 - (1 - p_pub)(1 - p_priv)
};

LabelMode parse_label_mode(std::string_view text);
std::string_view to_string(LabelMode m) noexcept;

struct ModelConfig {
    ModelKind kind = ModelKind::Boosted;
    LabelMode mode = LabelMode::Single;
    BoostConfig boost;
    LogisticConfig logistic;
    bool spatial = true;
    RecalibrationConfig recalibration;
    bool importance_weights = true;
    FeatureEncoder::Options encoder;

    void validate() const;
};

// Everything a fit needs. `features` has one row per parcel of `city`;
// `rows` are the training parcels (duplicates allowed, e.g. bootstrap draws).
struct TrainingView {
    const CityDataset& city;
    const FeatureMatrix& features;
    std::span<const std::size_t> rows;
    std::span<const double> weights = {};        // aligned with rows; empty means 1
    std::span<const VerifiedLine> truth = {};    // aligned with city parcels; oracle only
};

// Training rows = every labeled parcel, in id order.
std::vector<std::size_t> labeled_rows(const CityDataset& city);

class HazardModel {
public:
    HazardModel() = default;

    // Throws DataError when a training row is unlabeled.
    static HazardModel fit(const TrainingView& view, const ModelConfig& cfg);

    const ModelConfig& config() const noexcept { return cfg_; }
    std::size_t n_train() const noexcept { return n_train_; }
    bool spatial_active() const noexcept { return pooling_.has_value(); }
    const std::optional<PoolingModel>& pooling() const noexcept { return pooling_; }
    // Some training set had a single class (boosted base score clamped).
    bool single_class() const noexcept { return single_class_; }

    // Classifier output before recalibration.
    std::vector<double> raw_scores(const CityDataset& city, const FeatureMatrix& features,
                                   std::span<const std::size_t> rows) const;
    // Final hazard probabilities. `clamped` is set when recalibration clamped an input.
    std::vector<double> score(const CityDataset& city, const FeatureMatrix& features,
                              std::span<const std::size_t> rows, bool* clamped = nullptr) const;

    // Returns the boosted classifier for the combined (or public) label, if any.
    const HazardClassifier* boosted() const noexcept;

    nlohmann::json to_json() const;

private:
    ModelConfig cfg_;
    std::size_t n_train_ = 0;
    bool single_class_ = false;
    std::vector<HazardClassifier> boosted_;  // one, or two (public, private)
    std::vector<LogisticModel> logistic_;
    std::optional<PoolingModel> pooling_;
    std::vector<signed char> truth_;  // oracle only, per parcel
    double prior_ = 0.5;              // used when there is nothing to train on
    bool trained_ = false;
};

// Score of the fixed record rule.
double record_rule_score(std::string_view record_label);

}  // namespace remediate
