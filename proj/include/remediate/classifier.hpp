#pragma once

// Gradient-boosted classification trees with logistic loss, and an
// L1-penalized logistic regression baseline.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "remediate/features.hpp"

namespace remediate {

struct TrainingExample {
    std::vector<double> features;
    int y = 0;
    double weight = 1.0;
};

// Column-major friendly container for a weighted training set.
struct TrainingSet {
    FeatureMatrix X;
    std::vector<int> y;
    std::vector<double> weight;

    static TrainingSet from_examples(std::span<const TrainingExample> examples,
                                     std::vector<std::string> names = {});
    std::size_t size() const noexcept { return y.size(); }
    // Throws DataError: empty set, labels outside {0,1}, non-positive or non-finite weights.
    void validate() const;
};

struct BoostConfig {
    int n_rounds = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    double min_child_weight = 1.0;  // minimum hessian sum per child
    double l2_penalty = 1.0;
    double min_split_gain = 0.0;
    int max_bins = 128;
    double subsample = 1.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

struct TreeNode {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;  // x < threshold goes left
    bool missing_left = true;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf contribution to the margin (learning rate applied)

    bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    std::size_t leaf_for(std::span<const double> x) const;
    double predict(std::span<const double> x) const { return nodes[leaf_for(x)].value; }
};

class HazardClassifier {
public:
    HazardClassifier() = default;
    HazardClassifier(double base_score, std::vector<RegressionTree> trees,
                     std::vector<std::string> feature_names, std::size_t arity);

    double base_score() const noexcept { return base_score_; }
    const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
    const std::vector<std::string>& feature_names() const noexcept { return names_; }
    std::size_t arity() const noexcept { return arity_; }
    // Set when the training set had a single class and the base score was clamped.
    bool base_score_clamped() const noexcept { return clamped_; }

    double margin(std::span<const double> x) const;
    // Throws DataError on arity mismatch. Output is always strictly inside (0, 1).
    double predict_proba(std::span<const double> x) const;
    std::vector<double> predict_proba(const FeatureMatrix& X) const;

    // Same model with only the first n trees.
    HazardClassifier truncated(std::size_t n_trees) const;

    nlohmann::json to_json() const;
    static HazardClassifier from_json(const nlohmann::json& j);

private:
    friend HazardClassifier fit_boosted(const TrainingSet&, const BoostConfig&);

    double base_score_ = 0.0;
    std::vector<RegressionTree> trees_;
    std::vector<std::string> names_;
    std::size_t arity_ = 0;
    bool clamped_ = false;
};

HazardClassifier fit_boosted(const TrainingSet& train, const BoostConfig& cfg);

// Split counts per feature, normalized to sum to 1. Empty when there are no splits.
std::map<std::string, double> feature_importance(const HazardClassifier& model);

// Weighted mean logistic loss, sum(w * loss) / sum(w).
double weighted_log_loss(std::span<const double> probabilities, const TrainingSet& data);

struct LogisticConfig {
    double l1_strength = 0.001;
    int max_sweeps = 300;
    double tolerance = 1e-9;  // stop when a sweep improves the objective by less

    void validate() const;
};

class LogisticModel {
public:
    double intercept() const noexcept { return intercept_; }
    // Coefficients on the internally standardized scale.
    const std::vector<double>& coefficients() const noexcept { return coef_; }
    const std::vector<std::string>& feature_names() const noexcept { return names_; }
    // Penalized objective after every full coordinate sweep.
    const std::vector<double>& sweep_objective() const noexcept { return trace_; }

    double predict_proba(std::span<const double> x) const;
    std::vector<double> predict_proba(const FeatureMatrix& X) const;

    nlohmann::json to_json() const;

private:
    friend LogisticModel fit_logistic_baseline(const TrainingSet&, const LogisticConfig&);

    double intercept_ = 0.0;
    std::vector<double> coef_;
    std::vector<double> mean_;
    std::vector<double> scale_;
    std::vector<std::string> names_;
    std::vector<double> trace_;
};

// Coordinate descent on sum(w * logloss) / sum(w) + l1 * |beta|_1 over
// standardized features; missing values are imputed at the mean.
LogisticModel fit_logistic_baseline(const TrainingSet& train, const LogisticConfig& cfg);

}  // namespace remediate
