#include "remediate/spatial_bayes.hpp"

#include <algorithm>
#include <cmath>

#include "remediate/error.hpp"

namespace remediate {

namespace {

constexpr double kProbabilityFloor = 1e-6;

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

double PoolingModel::rate_for(std::string_view precinct) const {
    auto it = std::lower_bound(stats.begin(), stats.end(), precinct,
                               [](const PrecinctStats& s, std::string_view id) { return s.precinct < id; });
    if (it == stats.end() || it->precinct != precinct) return city_rate();
    return precinct_posterior_mean(*this, *it);
}

nlohmann::json PoolingModel::to_json() const {
    nlohmann::json precincts = nlohmann::json::object();
    for (const auto& s : stats) precincts[s.precinct] = {s.n, s.k};
    return {{"alpha", alpha},
            {"beta", beta},
            {"concentration_capped", concentration_capped},
            {"precincts", precincts}};
}

PoolingModel fit_hyperparameters(std::span<const PrecinctStats> stats) {
    PoolingModel model;
    model.stats.assign(stats.begin(), stats.end());
    std::sort(model.stats.begin(), model.stats.end(),
              [](const PrecinctStats& a, const PrecinctStats& b) { return a.precinct < b.precinct; });

    double total_n = 0.0, total_k = 0.0;
    std::size_t used = 0;
    for (const auto& s : model.stats) {
        if (s.k > s.n) throw DataError("precinct '" + s.precinct + "' has k > n");
        if (s.n == 0) continue;
        ++used;
        total_n += static_cast<double>(s.n);
        total_k += static_cast<double>(s.k);
    }
    if (used == 0) throw DataError("no precinct has labeled homes");
    if (used < 2) throw DataError("partial pooling needs at least two precincts with data");

    // Pooled mean, kept off the boundary so both shape parameters stay positive.
    const double mu = std::clamp(total_k / total_n, kProbabilityFloor, 1.0 - kProbabilityFloor);

    // Match the spread of precinct rates to its beta-binomial expectation:
    //   V = mu(1-mu) * [ mean(1/n) + rho * mean((n-1)/n) ],  rho = 1 / (alpha + beta + 1)
    double v = 0.0, inv_n = 0.0, frac = 0.0;
    for (const auto& s : model.stats) {
        if (s.n == 0) continue;
        const double n = static_cast<double>(s.n);
        const double r = static_cast<double>(s.k) / n;
        v += (r - mu) * (r - mu);
        inv_n += 1.0 / n;
        frac += (n - 1.0) / n;
    }
    const double J = static_cast<double>(used);
    v /= J;
    inv_n /= J;
    frac /= J;

    double concentration = kMaxConcentration;
    if (frac > 0.0) {
        const double rho = (v / (mu * (1.0 - mu)) - inv_n) / frac;
        if (rho > 0.0) {
            concentration = rho >= 1.0 ? 0.0 : 1.0 / rho - 1.0;
        }
    }
    // Overdispersion beyond the beta-binomial range: keep a tiny positive concentration.
    concentration = std::max(concentration, 1e-6);
    if (concentration >= kMaxConcentration) {
        concentration = kMaxConcentration;
        model.concentration_capped = true;
    }
    model.alpha = mu * concentration;
    model.beta = (1.0 - mu) * concentration;
    return model;
}

double precinct_posterior_mean(const PoolingModel& model, const PrecinctStats& stats) {
    return (model.alpha + static_cast<double>(stats.k)) /
           (model.alpha + model.beta + static_cast<double>(stats.n));
}

void RecalibrationConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("recalibration lambda must be finite and non-negative");
    }
}

Recalibrated recalibrate(double p, double precinct_rate, double city_rate,
                         const RecalibrationConfig& cfg) {
    Recalibrated out;
    auto clamp = [&](double x) {
        const double c = std::clamp(x, kProbabilityFloor, 1.0 - kProbabilityFloor);
        if (c != x) out.clamped = true;
        return c;
    };
    const double pp = clamp(p);
    const double shift = logit(clamp(precinct_rate)) - logit(clamp(city_rate));
    if (cfg.lambda == 0.0 || shift == 0.0) {
        out.probability = p;
        return out;
    }
    out.probability = 1.0 / (1.0 + std::exp(-(logit(pp) + cfg.lambda * shift)));
    return out;
}

}  // namespace remediate
