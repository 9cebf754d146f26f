#pragma once

// Classifier and policy evaluation: AUROC, ROC points, confusion counts,
// reliability curves, learning curves and prevalence intervals.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "remediate/data_model.hpp"
#include "remediate/features.hpp"
#include "remediate/hazard_model.hpp"

namespace remediate {

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;

    ScoredSet() = default;
    ScoredSet(std::vector<double> s, std::vector<int> y);

    std::size_t size() const noexcept { return scores.size(); }
    std::size_t positives() const noexcept;
    std::size_t negatives() const noexcept { return size() - positives(); }
    void add(double score, int label) {
        scores.push_back(score);
        labels.push_back(label);
    }
};

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
    double spread = 0.0;  // standard deviation over replications, when there are any
    std::size_t n = 0;    // observations behind the point
};

struct CurveSeries {
    std::string metric;
    std::string x_name = "x";
    std::string y_name = "y";
    std::vector<CurvePoint> points;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
    void write_csv(std::ostream& out) const;
};

// Mann-Whitney form, ties count one half. Absent without both classes.
std::optional<double> auroc(const ScoredSet& s);

// One point per distinct score, from (0,0) to (1,1). Absent without both classes.
std::optional<CurveSeries> roc_points(const ScoredSet& s);

double trapezoid_area(const CurveSeries& curve);

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    double accuracy() const;
    double fpr() const;  // fp / (fp + tn); NaN without negatives
    double fnr() const;  // fn / (fn + tp); NaN without positives
    nlohmann::json to_json() const;
};

// score >= threshold is called positive.
Confusion confusion_at_threshold(const ScoredSet& s, double threshold);
// The round(fraction * n) highest scores are called positive (ties by position).
Confusion confusion_top_fraction(const ScoredSet& s, double fraction);

// Equal-width bins on [0, 1]; x = mean score, y = empirical rate; empty bins omitted.
CurveSeries reliability_curve(const ScoredSet& s, std::size_t n_bins);

struct LearningCurveConfig {
    std::vector<double> fractions = {0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::size_t replications = 5;
    double holdout_fraction = 0.25;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

// Fixed holdout drawn from the labeled parcels; each point trains on a random
// fraction of the rest. x = training size, y = mean holdout AUROC.
CurveSeries learning_curve(const CityDataset& ds, const FeatureMatrix& features, const ModelConfig& model,
                           const LearningCurveConfig& cfg);

// For each boundary b = first_epoch + k * period: train on labels observed
// before b, score labeled homes observed at or after b. x = boundary epoch.
CurveSeries temporal_learning_curve(const CityDataset& ds, const FeatureMatrix& features,
                                    const ModelConfig& model, int period);

struct PrevalenceConfig {
    std::size_t n_bootstrap = 200;
    double confidence = 0.95;
    std::uint64_t seed = 0;
    bool stratified = false;  // resample within precincts
    bool predictive = true;   // draw outcomes for unlabeled homes, not just sum probabilities
    std::size_t threads = 1;

    void validate() const;
};

struct PrevalenceInterval {
    double point = 0.0;  // known hazardous + sum of predicted probabilities over U
    double low = 0.0;
    double high = 0.0;
    std::size_t known_hazardous = 0;
    std::size_t unlabeled = 0;
    bool widened = false;  // a percentile bound was moved to include the point estimate

    nlohmann::json to_json() const;
};

// Throws DataError without labeled homes, ConfigError on n_bootstrap < 2.
PrevalenceInterval prevalence_interval(const CityDataset& ds, const FeatureMatrix& features,
                                       const ModelConfig& model, const PrevalenceConfig& cfg);

// Scores of `model` on the labeled parcels of `rows` (labels from the dataset).
ScoredSet score_rows(const HazardModel& model, const CityDataset& ds, const FeatureMatrix& features,
                     std::span<const std::size_t> rows);

}  // namespace remediate
