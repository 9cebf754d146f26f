#pragma once

// Precinct-level partial pooling with a beta-binomial model. Hyperparameters
// come from method-of-moments; each precinct's hazard rate is the conjugate
// posterior mean, pulled toward the city-wide rate when the precinct is sparse.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace remediate {

struct PrecinctStats {
    std::string precinct;
    std::size_t n = 0;  // labeled homes
    std::size_t k = 0;  // hazardous among them
};

inline constexpr double kMaxConcentration = 1e6;

struct PoolingModel {
    double alpha = 1.0;
    double beta = 1.0;
    bool concentration_capped = false;
    std::vector<PrecinctStats> stats;  // sorted by precinct id

    double concentration() const noexcept { return alpha + beta; }
    double city_rate() const noexcept { return alpha / (alpha + beta); }
    // Posterior mean for a precinct by id; the prior mean when the id is unknown.
    double rate_for(std::string_view precinct) const;

    nlohmann::json to_json() const;
};

// Throws DataError when fewer than two precincts have data or counts are invalid.
PoolingModel fit_hyperparameters(std::span<const PrecinctStats> stats);

// (alpha + k) / (alpha + beta + n)
double precinct_posterior_mean(const PoolingModel& model, const PrecinctStats& stats);

struct RecalibrationConfig {
    double lambda = 0.5;

    void validate() const;
};

struct Recalibrated {
    double probability = 0.0;
    bool clamped = false;  // an input sat on {0, 1} and was pulled into [1e-6, 1 - 1e-6]
};

// sigmoid(logit(p) + lambda * (logit(precinct_rate) - logit(city_rate)))
Recalibrated recalibrate(double p, double precinct_rate, double city_rate,
                         const RecalibrationConfig& cfg);

}  // namespace remediate
