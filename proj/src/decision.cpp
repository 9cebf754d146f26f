#include "remediate/decision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "remediate/csv.hpp"
#include "remediate/error.hpp"

namespace remediate {

namespace {

void check_scores(std::span<const std::string> pool, std::span<const double> scores) {
    if (pool.size() != scores.size()) throw DataError("every home in the pool needs a score");
    for (double s : scores) {
        if (!std::isfinite(s)) throw DataError("scores must be finite");
    }
}

// Positions of the top-d scores, highest first, ties to the lower id.
std::vector<std::size_t> top_positions(std::span<const std::string> pool, std::span<const double> scores,
                                       std::size_t d) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    d = std::min(d, order.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return pool[a] < pool[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(d), order.end(), better);
    order.resize(d);
    return order;
}

// Partial Fisher-Yates over `candidates`; shared by uniform and epsilon-greedy
// so both consume the random stream identically.
std::vector<std::size_t> draw_uniform(std::vector<std::size_t> candidates, std::size_t d, Rng& rng) {
    d = std::min(d, candidates.size());
    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(d);
    return candidates;
}

std::vector<std::size_t> all_positions(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace

void IwalConfig::validate() const {
    if (!(target > 0.0 && target < 1.0)) throw ConfigError("iwal target must lie in (0, 1)");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("iwal sigma must be positive");
    if (!(floor >= 0.0 && floor < 1.0)) throw ConfigError("iwal floor must lie in [0, 1)");
    if (!(w_max >= 1.0)) throw ConfigError("iwal w_max must be >= 1");
}

InspectionBatch select_uniform(std::span<const std::string> pool, std::size_t d, Rng& rng) {
    InspectionBatch batch;
    batch.exhausted = d > pool.size();
    for (std::size_t p : draw_uniform(all_positions(pool.size()), d, rng)) {
        batch.ids.push_back(pool[p]);
        batch.weights.push_back(1.0);
    }
    batch.uniform_picks = batch.ids.size();
    return batch;
}

InspectionBatch select_greedy(std::span<const std::string> pool, std::span<const double> scores,
                              std::size_t d) {
    check_scores(pool, scores);
    InspectionBatch batch;
    batch.exhausted = d > pool.size();
    for (std::size_t p : top_positions(pool, scores, d)) {
        batch.ids.push_back(pool[p]);
        batch.weights.push_back(1.0);
    }
    return batch;
}

InspectionBatch select_egreedy(std::span<const std::string> pool, std::span<const double> scores,
                               std::size_t d, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    check_scores(pool, scores);
    InspectionBatch batch;
    batch.exhausted = d > pool.size();
    d = std::min(d, pool.size());
    const auto n_uniform = static_cast<std::size_t>(std::llround(epsilon * static_cast<double>(d)));
    const std::size_t n_greedy = d - n_uniform;

    const auto greedy = top_positions(pool, scores, n_greedy);
    std::vector<bool> taken(pool.size(), false);
    for (std::size_t p : greedy) {
        taken[p] = true;
        batch.ids.push_back(pool[p]);
        batch.weights.push_back(1.0);
    }
    std::vector<std::size_t> rest;
    rest.reserve(pool.size() - greedy.size());
    for (std::size_t p = 0; p < pool.size(); ++p)
        if (!taken[p]) rest.push_back(p);
    for (std::size_t p : draw_uniform(std::move(rest), n_uniform, rng)) {
        batch.ids.push_back(pool[p]);
        batch.weights.push_back(1.0);
        ++batch.uniform_picks;
    }
    return batch;
}

SelectionDistribution iwal_distribution(std::span<const std::string> pool,
                                        std::span<const double> scores, const IwalConfig& cfg) {
    cfg.validate();
    if (pool.empty()) throw DataError("cannot build a selection distribution over an empty pool");
    check_scores(pool, scores);
    const double n = static_cast<double>(pool.size());
    std::vector<double> w(pool.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double s = scores[i];
        if (s < 0.0 || s > 1.0) throw DataError("iwal scores must be probabilities");
        const double z = s - cfg.target;
        w[i] = std::exp(-(z * z) / (2.0 * cfg.sigma * cfg.sigma));
        total += w[i];
    }
    SelectionDistribution dist;
    dist.ids.assign(pool.begin(), pool.end());
    dist.phi.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double kernel = total > 0.0 ? w[i] / total : 1.0 / n;
        dist.phi[i] = (1.0 - cfg.floor) * kernel + cfg.floor / n;
    }
    return dist;
}

InspectionBatch sample_batch(const SelectionDistribution& dist, std::size_t d, Rng& rng, double w_max) {
    if (dist.ids.size() != dist.phi.size()) throw DataError("selection distribution is malformed");
    InspectionBatch batch;
    const std::size_t n = dist.ids.size();
    batch.exhausted = d > n;
    d = std::min(d, n);
    if (d == 0) return batch;

    const double phi_max = *std::max_element(dist.phi.begin(), dist.phi.end());
    std::vector<bool> drawn(n, false);
    for (std::size_t draw = 0; draw < d; ++draw) {
        double remaining = 0.0;
        std::size_t live = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (drawn[i]) continue;
            remaining += dist.phi[i];
            ++live;
        }
        std::size_t pick = n;
        if (remaining > 0.0) {
            const double u = rng.uniform() * remaining;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (drawn[i]) continue;
                acc += dist.phi[i];
                pick = i;
                if (u < acc && dist.phi[i] > 0.0) break;
            }
        } else {
            // Only zero-mass homes remain.
            std::size_t target = static_cast<std::size_t>(rng.below(live));
            for (std::size_t i = 0; i < n; ++i) {
                if (drawn[i]) continue;
                if (target-- == 0) {
                    pick = i;
                    break;
                }
            }
        }
        drawn[pick] = true;
        double weight = dist.phi[pick] > 0.0 ? phi_max / dist.phi[pick] : w_max + 1.0;
        if (weight > w_max) {
            weight = w_max;
            batch.clipped = true;
        }
        batch.ids.push_back(dist.ids[pick]);
        batch.weights.push_back(std::max(weight, 1.0));
    }
    return batch;
}

ReplacementSelection select_replacements(std::span<const std::string> pool,
                                         std::span<const double> scores,
                                         std::span<const std::string> pending, std::size_t b) {
    check_scores(pool, scores);
    ReplacementSelection sel;
    sel.complete = pool.empty() && pending.empty();
    for (std::size_t i = 0; i < pending.size() && sel.ids.size() < b; ++i) {
        sel.ids.push_back(pending[i]);
        ++sel.from_pending;
    }
    for (std::size_t p : top_positions(pool, scores, b - sel.ids.size())) sel.ids.push_back(pool[p]);
    return sel;
}

// ---------------------------------------------------------------------------

InspectionPolicy InspectionPolicy::egreedy(double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    InspectionPolicy p(Kind::EGreedy);
    p.epsilon_ = epsilon;
    return p;
}

InspectionPolicy InspectionPolicy::iwal(IwalConfig cfg) {
    cfg.validate();
    InspectionPolicy p(Kind::Iwal);
    p.iwal_ = cfg;
    return p;
}

InspectionPolicy InspectionPolicy::parse(std::string_view spec) {
    spec = csv::trim(spec);
    const auto colon = spec.find(':');
    const std::string_view name = spec.substr(0, colon);
    const std::string_view args = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);

    std::vector<double> values;
    if (!args.empty()) {
        std::size_t start = 0;
        while (start <= args.size()) {
            const auto comma = args.find(',', start);
            const auto piece = args.substr(start, comma == std::string_view::npos ? args.size() - start
                                                                                  : comma - start);
            auto v = csv::parse_double(piece);
            if (!v) throw ConfigError("bad policy argument in '" + std::string(spec) + "'");
            values.push_back(*v);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
    }
    if (name == "uniform" && values.empty()) return uniform();
    if (name == "greedy" && values.empty()) return greedy();
    if (name == "egreedy" && values.size() == 1) return egreedy(values[0]);
    if (name == "iwal" && (values.size() == 1 || values.size() == 3)) {
        IwalConfig cfg;
        cfg.target = values[0];
        if (values.size() == 3) {
            cfg.sigma = values[1];
            cfg.floor = values[2];
        }
        return iwal(cfg);
    }
    throw ConfigError("unrecognized policy '" + std::string(spec) +
                      "' (expected uniform | greedy | egreedy:<eps> | iwal:<p>[,<sigma>,<eta>])");
}

std::string InspectionPolicy::to_string() const {
    switch (kind_) {
        case Kind::Uniform: return "uniform";
        case Kind::Greedy: return "greedy";
        case Kind::EGreedy: return "egreedy:" + csv::format_double(epsilon_);
        case Kind::Iwal:
            return "iwal:" + csv::format_double(iwal_.target) + "," + csv::format_double(iwal_.sigma) +
                   "," + csv::format_double(iwal_.floor);
    }
    return "uniform";
}

InspectionBatch InspectionPolicy::select(std::span<const std::string> pool, std::span<const double> scores,
                                         std::size_t d, Rng& rng) const {
    switch (kind_) {
        case Kind::Uniform: return select_uniform(pool, d, rng);
        case Kind::Greedy: return select_greedy(pool, scores, d);
        case Kind::EGreedy: return select_egreedy(pool, scores, d, epsilon_, rng);
        case Kind::Iwal:
            if (pool.empty() || d == 0) {
                InspectionBatch empty;
                empty.exhausted = d > pool.size();
                return empty;
            }
            return sample_batch(iwal_distribution(pool, scores, iwal_), d, rng, iwal_.w_max);
    }
    return {};
}

}  // namespace remediate
