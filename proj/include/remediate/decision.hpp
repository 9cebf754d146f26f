#pragma once

// Inspection selection (uniform, greedy, epsilon-greedy, importance weighted)
// and the greedy replacement rule.
//
// Pools are parcel ids; callers pass them in ascending id order together with
// an aligned score vector. Every tie is broken by ascending parcel id.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "remediate/rng.hpp"

namespace remediate {

struct InspectionBatch {
    std::vector<std::string> ids;
    std::vector<double> weights;  // importance weights, >= 1
    std::size_t uniform_picks = 0;
    bool exhausted = false;  // fewer homes available than requested
    bool clipped = false;    // at least one weight hit w_max

    std::size_t size() const noexcept { return ids.size(); }
};

struct SelectionDistribution {
    std::vector<std::string> ids;
    std::vector<double> phi;
};

struct IwalConfig {
    double target = 0.7;   // score receiving the most inspection mass
    double sigma = 0.2;    // kernel width
    double floor = 0.1;    // share of mass spread uniformly
    double w_max = 20.0;   // importance weight clip

    void validate() const;
};

InspectionBatch select_uniform(std::span<const std::string> pool, std::size_t d, Rng& rng);

InspectionBatch select_greedy(std::span<const std::string> pool, std::span<const double> scores,
                              std::size_t d);

// round(epsilon * d) uniform picks from the pool minus the greedy picks; the
// rest greedy. epsilon = 0 reproduces select_greedy, epsilon = 1 select_uniform
// (same random stream).
InspectionBatch select_egreedy(std::span<const std::string> pool, std::span<const double> scores,
                               std::size_t d, double epsilon, Rng& rng);

// phi = (1 - floor) * normalize(exp(-(s - target)^2 / (2 sigma^2))) + floor / |U|
SelectionDistribution iwal_distribution(std::span<const std::string> pool,
                                        std::span<const double> scores, const IwalConfig& cfg);

// Sequential draws without replacement, proportional to phi renormalized over
// the remaining homes. Weight of a draw = max(phi) / phi_i clipped to [1, w_max].
InspectionBatch sample_batch(const SelectionDistribution& dist, std::size_t d, Rng& rng,
                             double w_max = IwalConfig{}.w_max);

struct ReplacementSelection {
    std::vector<std::string> ids;
    std::size_t from_pending = 0;  // leading entries taken from the pending queue
    bool complete = false;         // nothing left to replace
};

// Pending homes (already known hazardous) go first in the given order, then
// the highest-scored homes of the pool.
ReplacementSelection select_replacements(std::span<const std::string> pool,
                                         std::span<const double> scores,
                                         std::span<const std::string> pending, std::size_t b);

// Parsed from `uniform | greedy | egreedy:<eps> | iwal:<p_star>[,<sigma>,<eta>]`.
class InspectionPolicy {
public:
    enum class Kind { Uniform, Greedy, EGreedy, Iwal };

    InspectionPolicy() = default;
    static InspectionPolicy uniform() { return InspectionPolicy(Kind::Uniform); }
    static InspectionPolicy greedy() { return InspectionPolicy(Kind::Greedy); }
    static InspectionPolicy egreedy(double epsilon);
    static InspectionPolicy iwal(IwalConfig cfg);
    static InspectionPolicy parse(std::string_view spec);  // throws ConfigError

    Kind kind() const noexcept { return kind_; }
    double epsilon() const noexcept { return epsilon_; }
    const IwalConfig& iwal_config() const noexcept { return iwal_; }
    std::string to_string() const;

    InspectionBatch select(std::span<const std::string> pool, std::span<const double> scores,
                           std::size_t d, Rng& rng) const;

private:
    explicit InspectionPolicy(Kind k) : kind_(k) {}

    Kind kind_ = Kind::Uniform;
    double epsilon_ = 0.0;
    IwalConfig iwal_;
};

}  // namespace remediate
