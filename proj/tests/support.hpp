#pragma once

// Scenario builders shared by the unit tests and the acceptance runner.

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "remediate/decision.hpp"
#include "remediate/engine.hpp"

namespace remediate::testing {

// 1,000 homes, 770 hazardous. The first 100 carry a "Lead" record (77 of them
// hazardous), the rest "Copper" (693 hazardous).
inline CityDataset table3_city() {
    std::vector<ParcelRecord> parcels;
    for (int i = 0; i < 1000; ++i) {
        ParcelRecord p;
        char id[16];
        std::snprintf(id, sizeof id, "H%04d", i);
        p.parcel_id = id;
        p.numeric = {1930.0, 50000.0, 43.0, -83.7};
        p.precinct = "A";
        const bool flagged = i < 100;
        p.record_label = flagged ? "Lead" : "Copper";
        const bool hazardous = flagged ? i < 77 : i < 100 + 693;
        p.verified = VerifiedLine{hazardous ? PortionMaterial::Lead : PortionMaterial::Copper,
                                  PortionMaterial::Copper, ObservationSource::Replacement, 0};
        parcels.push_back(std::move(p));
    }
    return CityDataset(FeatureSchema::standard(), std::move(parcels));
}

// E[theta | k of n] under a Beta(a, b) prior by quadrature of the unnormalized
// posterior, scaled at its log-maximum to stay in range.
inline double posterior_mean_by_quadrature(double a, double b, double n, double k) {
    const double p = a + k - 1.0, q = b + n - k - 1.0;
    double peak = 0.0;
    if (p > 0.0 && q > 0.0) {
        const double mode = p / (p + q);
        peak = p * std::log(mode) + q * std::log1p(-mode);
    }
    // The integrator passes xc = x - 0 (negative) near 0 and 1 - x near 1.
    auto density = [&](double x, double xc) {
        const double lo = xc < 0.0 ? -xc : x;
        const double hi = xc > 0.0 ? xc : 1.0 - x;
        const double a_term = p == 0.0 ? 0.0 : p * std::log(lo);
        const double b_term = q == 0.0 ? 0.0 : q * std::log(hi);
        return std::exp(a_term + b_term - peak);
    };
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double z = integrator.integrate(density, 0.0, 1.0);
    const double m = integrator.integrate([&](double x, double xc) { return x * density(x, xc); }, 0.0, 1.0);
    return m / z;
}

enum class Table3 { InspectAll, NoInspection, TenPercent };

inline ExperimentConfig table3_config(Table3 scenario) {
    ExperimentConfig cfg;
    cfg.epochs = 1;
    cfg.replacements_per_epoch = 1000;
    cfg.model.kind = ModelKind::Constant;
    cfg.track_pool_auroc = false;
    switch (scenario) {
        case Table3::InspectAll:
            cfg.policy = "uniform";
            cfg.inspections_per_epoch = 1000;
            break;
        case Table3::NoInspection:
            cfg.policy = "greedy";
            cfg.inspections_per_epoch = 0;
            break;
        case Table3::TenPercent:
            // The record rule ranks the 100 flagged homes first.
            cfg.policy = "greedy";
            cfg.inspections_per_epoch = 100;
            cfg.model.kind = ModelKind::Record;
            break;
    }
    return cfg;
}

// Exhaustive pairwise count: 1 per correctly ordered (positive, negative)
// pair, 1/2 per tie. Integer arithmetic until the final division.
inline double pairwise_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    long long twice = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            twice += scores[i] > scores[j] ? 2 : (scores[i] == scores[j] ? 1 : 0);
        }
    }
    for (int y : labels) neg += y == 0 ? 1 : 0;
    return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// Random scored set with coarse scores (many ties) and both classes present.
inline void fuzz_scored(Rng& r, std::size_t max_n, std::vector<double>& scores, std::vector<int>& labels) {
    const std::size_t n = 2 + r.below(max_n - 1);
    const std::uint64_t levels = 1 + r.below(20);
    scores.assign(n, 0.0);
    labels.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = static_cast<double>(r.below(levels)) / static_cast<double>(levels);
        labels[i] = r.bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
}

struct PoolEstimate {
    double mean = 0.0;
    double truth = 0.0;
    double se = 0.0;
};

// Weighted hazard rate of IWAL batches drawn from a synthetic pool scored by
// its generating probabilities, against the pool's true rate.
inline PoolEstimate iwal_pool_estimate(std::size_t n_pool, std::size_t batch, int reps, std::uint64_t seed) {
    SyntheticCityConfig sc;
    sc.n_parcels = n_pool;
    sc.seed = seed;
    const auto city = generate_synthetic_city(sc);
    std::vector<std::string> pool;
    for (const auto& p : city.dataset.parcels()) pool.push_back(p.parcel_id);
    const auto dist = iwal_distribution(pool, city.hazard_probability, IwalConfig{});
    Rng rng(derive_seed(seed, 1));
    std::vector<double> est;
    for (int r = 0; r < reps; ++r) {
        const auto b = sample_batch(dist, batch, rng);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const auto idx = city.dataset.index_of(b.ids[i]);
            num += b.weights[i] * city.truth[idx].label().y();
            den += b.weights[i];
        }
        est.push_back(num / den);
    }
    PoolEstimate out;
    out.truth = static_cast<double>(city.hazardous_count()) / static_cast<double>(n_pool);
    for (double e : est) out.mean += e;
    out.mean /= reps;
    double ss = 0;
    for (double e : est) ss += (e - out.mean) * (e - out.mean);
    out.se = std::sqrt(ss / (reps - 1)) / std::sqrt(static_cast<double>(reps));
    return out;
}

struct FuzzOutcome {
    std::size_t runs = 0;
    std::size_t actions = 0;
    std::size_t violations = 0;
    std::string first;
};

// Random small cities and random configurations; every run is checked for the
// ledger identity after each action, the budget bound and double visits.
inline FuzzOutcome ledger_fuzz(std::size_t runs, std::uint64_t seed) {
    FuzzOutcome out;
    const char* policies[] = {"uniform", "greedy", "egreedy:0.4", "iwal:0.7", "iwal:0.3,0.1,0.2"};
    const ModelKind kinds[] = {ModelKind::Constant, ModelKind::Record, ModelKind::Oracle, ModelKind::Logistic,
                               ModelKind::Boosted};
    auto fail = [&](const std::string& what) {
        if (out.violations++ == 0) out.first = what;
    };
    for (std::size_t run = 0; run < runs; ++run) {
        Rng r(derive_seed(seed, run));
        SyntheticCityConfig sc;
        sc.n_parcels = 1 + r.below(40);
        sc.prevalence = r.uniform(0.05, 0.95);
        sc.n_precincts = 1 + r.below(4);
        sc.record_missing_rate = r.uniform(0.0, 0.3);
        sc.seed = r.next();
        const auto city = generate_synthetic_city(sc);
        const auto env = Environment::generative(city);

        ExperimentConfig cfg;
        cfg.seed = r.next();
        cfg.budget = r.bernoulli(0.2) ? std::numeric_limits<double>::infinity() : r.uniform(0.0, 80000.0);
        cfg.epochs = static_cast<int>(r.below(7));
        cfg.inspections_per_epoch = r.below(9);
        cfg.replacements_per_epoch = r.below(11);
        cfg.costs.c_h = r.uniform(10.0, 500.0);
        cfg.costs.c_r_minus = r.uniform(100.0, 3000.0);
        cfg.costs.c_r_plus = cfg.costs.c_r_minus + r.uniform(1.0, 4000.0);
        cfg.policy = policies[r.below(5)];
        cfg.model.kind = kinds[r.below(5)];
        cfg.model.boost.n_rounds = 3;
        cfg.model.importance_weights = r.bernoulli(0.5);
        cfg.hydrovac_failure_rate = r.bernoulli(0.5) ? 0.0 : r.uniform(0.0, 0.5);
        cfg.initial_labeled = r.below(sc.n_parcels / 4 + 1);
        if (r.bernoulli(0.2)) cfg.stop_after_successes = r.below(10);
        cfg.track_pool_auroc = false;

        ++out.runs;
        const std::string tag = "run " + std::to_string(run) + ": ";
        ExperimentLog log;
        try {
            log = run_experiment(cfg, env);
        } catch (const std::exception& e) {
            fail(tag + e.what());
            continue;
        }
        CostLedger ledger;
        std::set<std::string> inspected_ok, replaced, found_safe;
        for (const auto& a : log.actions()) {
            ++out.actions;
            if (a.kind == ActionKind::Inspection) {
                if (inspected_ok.count(a.parcel_id)) fail(tag + "inspected twice " + a.parcel_id);
                if (replaced.count(a.parcel_id)) fail(tag + "inspected after replacement " + a.parcel_id);
                ledger.record_inspection(cfg.costs);
                if (a.cost != cfg.costs.c_h) fail(tag + "inspection mispriced");
                if (!a.failed) {
                    inspected_ok.insert(a.parcel_id);
                    if (!a.hazardous) found_safe.insert(a.parcel_id);
                }
            } else {
                if (!replaced.insert(a.parcel_id).second) fail(tag + "replaced twice " + a.parcel_id);
                if (found_safe.count(a.parcel_id)) fail(tag + "replaced a home inspected safe " + a.parcel_id);
                ledger.record_replacement(cfg.costs, a.hazardous);
                if (a.cost != (a.hazardous ? cfg.costs.c_r_plus : cfg.costs.c_r_minus)) fail(tag + "replacement mispriced");
            }
            const double identity = cfg.costs.c_h * static_cast<double>(ledger.n_h) +
                                    cfg.costs.c_r_plus * static_cast<double>(ledger.n_r_plus) +
                                    cfg.costs.c_r_minus * static_cast<double>(ledger.n_r_minus);
            if (std::abs(a.total_after - identity) > 1e-9 * std::max(1.0, identity)) fail(tag + "identity broken");
            if (a.total_after > cfg.budget) fail(tag + "budget exceeded");
        }
        if (!(ledger == log.ledger)) fail(tag + "final ledger differs from the action trace");
        if (log.ledger.n_r_plus > env.hazardous_count()) fail(tag + "more successes than hazardous homes");
        try {
            if (!(replay(log.actions(), env, cfg.costs) == log.ledger)) fail(tag + "replay differs");
        } catch (const std::exception& e) {
            fail(tag + "replay threw: " + e.what());
        }
    }
    return out;
}

}  // namespace remediate::testing
