#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"

#include "remediate/data_model.hpp"
#include "remediate/decision.hpp"
#include "remediate/error.hpp"

#include "support.hpp"

using namespace remediate;

namespace {

std::vector<std::string> make_pool(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "H%05zu", i);
        ids.emplace_back(buf);
    }
    return ids;
}

// Coarse values so ties are common.
std::vector<double> coarse_scores(std::size_t n, Rng& rng) {
    std::vector<double> s(n);
    for (auto& x : s) x = static_cast<double>(rng.below(8)) / 8.0;
    return s;
}

std::vector<std::string> sort_oracle(const std::vector<std::string>& pool, const std::vector<double>& scores,
                                     std::size_t d) {
    std::vector<std::pair<double, std::string>> v;
    for (std::size_t i = 0; i < pool.size(); ++i) v.emplace_back(-scores[i], pool[i]);
    std::sort(v.begin(), v.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(d, v.size()); ++i) out.push_back(v[i].second);
    return out;
}

void check_subset_distinct(const InspectionBatch& b, const std::vector<std::string>& pool) {
    std::set<std::string> seen(b.ids.begin(), b.ids.end());
    CHECK(seen.size() == b.ids.size());
    for (const auto& id : b.ids) CHECK(std::binary_search(pool.begin(), pool.end(), id));
    CHECK(b.weights.size() == b.ids.size());
}

}  // namespace

TEST_CASE("uniform: boundary cases") {
    const auto pool = make_pool(10);
    Rng rng(1);
    auto all = select_uniform(pool, 10, rng);
    std::sort(all.ids.begin(), all.ids.end());
    CHECK(all.ids == pool);
    CHECK_FALSE(all.exhausted);
    CHECK(select_uniform(pool, 0, rng).size() == 0);
    const auto over = select_uniform(pool, 12, rng);
    CHECK(over.size() == 10);
    CHECK(over.exhausted);
}

TEST_CASE("uniform: every home is picked with frequency d / |U|") {
    // 1,000 frequencies tested at once: a few land beyond 3 SE by chance
    // (2.7 expected), so the count outside 3 SE is bounded and no home may
    // sit beyond the Bonferroni-level 4.5 SE.
    const auto pool = make_pool(1000);
    std::vector<int> hits(pool.size(), 0);
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < pool.size(); ++i) pos[pool[i]] = i;
    Rng rng(77);
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
        const auto b = select_uniform(pool, 100, rng);
        for (const auto& id : b.ids) ++hits[pos[id]];
    }
    const double se = std::sqrt(0.1 * 0.9 / reps);
    int beyond3 = 0;
    double worst = 0.0;
    for (int h : hits) {
        const double z = std::abs(h / static_cast<double>(reps) - 0.1) / se;
        if (z > 3.0) ++beyond3;
        worst = std::max(worst, z);
    }
    CHECK(beyond3 <= 10);
    CHECK(worst <= 4.5);
}

TEST_CASE("greedy: examples and tie rule") {
    const std::vector<std::string> pool = {"a", "b", "c"};
    const std::vector<double> s = {0.9, 0.8, 0.1};
    CHECK(select_greedy(pool, s, 2).ids == std::vector<std::string>{"a", "b"});
    const std::vector<std::string> pool2 = {"p1", "p2", "p3", "p4"};
    const std::vector<double> flat(4, 0.5);
    CHECK(select_greedy(pool2, flat, 2).ids == std::vector<std::string>{"p1", "p2"});
    CHECK(select_greedy(pool, s, 5).exhausted);
    const std::vector<double> short_scores = {0.1};
    CHECK_THROWS_AS(select_greedy(pool, short_scores, 1), DataError);
}

TEST_CASE("greedy: matches a full-sort oracle") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const auto pool = make_pool(1 + rng.below(60));
        const auto s = coarse_scores(pool.size(), rng);
        const std::size_t d = rng.below(pool.size() + 3);
        CHECK(select_greedy(pool, s, d).ids == sort_oracle(pool, s, d));
    }
}

TEST_CASE("egreedy: epsilon 0 and 1 reduce to greedy and uniform") {
    Rng gen(9);
    for (int t = 0; t < 20; ++t) {
        const auto pool = make_pool(5 + gen.below(100));
        const auto s = coarse_scores(pool.size(), gen);
        const std::size_t d = gen.below(pool.size() + 1);
        Rng r1(t), r2(t);
        CHECK(select_egreedy(pool, s, d, 0.0, r1).ids == select_greedy(pool, s, d).ids);
        CHECK(select_egreedy(pool, s, d, 1.0, r1).ids == select_uniform(pool, d, r2).ids);
        // Same stream afterwards.
        CHECK(r1.next() == r2.next());
    }
    const auto pool = make_pool(3);
    const std::vector<double> s(3, 0.5);
    Rng rng(1);
    CHECK_THROWS_AS(select_egreedy(pool, s, 1, 1.5, rng), ConfigError);
}

TEST_CASE("egreedy: epsilon 0.5 splits the batch") {
    const auto pool = make_pool(1000);
    Rng gen(12);
    std::vector<double> s(pool.size());
    for (auto& x : s) x = gen.uniform();
    const auto top = sort_oracle(pool, s, 50);
    Rng rng(5);
    double sum = 0.0;
    for (int r = 0; r < 1000; ++r) {
        const auto b = select_egreedy(pool, s, 100, 0.5, rng);
        check_subset_distinct(b, pool);
        REQUIRE(b.size() == 100);
        CHECK(std::vector<std::string>(b.ids.begin(), b.ids.begin() + 50) == top);
        sum += static_cast<double>(b.uniform_picks);
    }
    CHECK(sum / 1000.0 == 50.0);
}

TEST_CASE("iwal distribution: kernel, symmetry and floor") {
    IwalConfig cfg;
    const auto pool = make_pool(6);
    const std::vector<double> s = {0.7, 0.6, 0.8, 0.1, 1.0, 0.0};
    const auto dist = iwal_distribution(pool, s, cfg);
    const double total = std::accumulate(dist.phi.begin(), dist.phi.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
    for (double p : dist.phi) CHECK(p >= cfg.floor / 6.0);
    CHECK(*std::max_element(dist.phi.begin(), dist.phi.end()) == dist.phi[0]);
    CHECK(dist.phi[1] == doctest::Approx(dist.phi[2]).epsilon(1e-12));

    // Without the floor phi is the normalized kernel, peak 1 at the target.
    cfg.floor = 0.0;
    const auto raw = iwal_distribution(pool, s, cfg);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double z = s[i] - 0.7;
        CHECK(raw.phi[i] / raw.phi[0] == doctest::Approx(std::exp(-z * z / (2 * 0.2 * 0.2))).epsilon(1e-12));
    }
}

TEST_CASE("iwal distribution: errors") {
    const std::vector<std::string> none;
    const std::vector<double> no_scores;
    CHECK_THROWS_AS(iwal_distribution(none, no_scores, {}), DataError);
    const auto pool = make_pool(2);
    const std::vector<double> bad = {0.5, 1.5};
    CHECK_THROWS_AS(iwal_distribution(pool, bad, {}), DataError);
    IwalConfig cfg;
    cfg.target = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sample_batch: degenerate and clipped weights") {
    SelectionDistribution one{{"a", "b", "c"}, {1.0, 0.0, 0.0}};
    Rng rng(2);
    const auto b = sample_batch(one, 1, rng);
    CHECK(b.ids == std::vector<std::string>{"a"});
    CHECK(b.weights[0] == 1.0);
    CHECK_FALSE(b.clipped);

    SelectionDistribution skewed{{"a", "b"}, {0.99, 0.01}};
    bool saw_clip = false;
    for (int r = 0; r < 50; ++r) {
        const auto s = sample_batch(skewed, 2, rng, 20.0);
        for (double w : s.weights) {
            CHECK(w >= 1.0);
            CHECK(w <= 20.0);
        }
        saw_clip = saw_clip || s.clipped;
    }
    CHECK(saw_clip);
    CHECK(sample_batch(skewed, 3, rng).exhausted);
    CHECK(sample_batch(skewed, 0, rng).size() == 0);
}

TEST_CASE("sample_batch: uniform phi gives unit weights and uniform picks") {
    const auto pool = make_pool(20);
    SelectionDistribution flat{pool, std::vector<double>(20, 0.05)};
    Rng rng(6);
    std::vector<int> hits(20, 0);
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
        const auto b = sample_batch(flat, 5, rng);
        check_subset_distinct(b, pool);
        for (double w : b.weights) CHECK(w == 1.0);
        for (const auto& id : b.ids) ++hits[std::stoi(id.substr(1))];
    }
    const double se = std::sqrt(0.25 * 0.75 / reps);
    for (int h : hits) CHECK(std::abs(h / static_cast<double>(reps) - 0.25) <= 3.5 * se);
}

TEST_CASE("sample_batch: first-draw frequencies follow phi") {
    SelectionDistribution dist{{"a", "b", "c"}, {0.5, 0.3, 0.2}};
    Rng rng(31);
    std::map<std::string, int> first;
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
        const auto b = sample_batch(dist, 2, rng);
        REQUIRE(b.size() == 2);
        CHECK(b.ids[0] != b.ids[1]);
        ++first[b.ids[0]];
    }
    const std::map<std::string, double> phi = {{"a", 0.5}, {"b", 0.3}, {"c", 0.2}};
    for (const auto& [id, p] : phi) {
        const double se = std::sqrt(p * (1 - p) / reps);
        CHECK(std::abs(first[id] / static_cast<double>(reps) - p) <= 3.0 * se);
    }
}

TEST_CASE("replacements: pending homes go first") {
    const std::vector<std::string> pool = {"q", "r", "s"};
    const std::vector<double> s = {0.9, 0.2, 0.4};
    const std::vector<std::string> pending = {"p1"};
    const auto sel = select_replacements(pool, s, pending, 2);
    CHECK(sel.ids == std::vector<std::string>{"p1", "q"});
    CHECK(sel.from_pending == 1);
    CHECK_FALSE(sel.complete);
    CHECK(select_replacements(pool, s, pending, 0).ids.empty());
    const std::vector<std::string> none;
    const std::vector<double> no_scores;
    const auto done = select_replacements(none, no_scores, none, 5);
    CHECK(done.ids.empty());
    CHECK(done.complete);
}

TEST_CASE("replacements: match a sort oracle") {
    Rng rng(13);
    for (int t = 0; t < 100; ++t) {
        const auto all = make_pool(2 + rng.below(50));
        std::vector<std::string> pool, pending;
        for (const auto& id : all) (rng.bernoulli(0.2) ? pending : pool).push_back(id);
        std::reverse(pending.begin(), pending.end());  // queue order is kept as given
        const auto s = coarse_scores(pool.size(), rng);
        const std::size_t b = rng.below(all.size() + 2);
        std::vector<std::string> want(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(std::min(b, pending.size())));
        for (const auto& id : sort_oracle(pool, s, b - want.size())) want.push_back(id);
        CHECK(select_replacements(pool, s, pending, b).ids == want);
    }
}

TEST_CASE("strictly increasing score transforms leave greedy choices unchanged") {
    Rng rng(21);
    for (int t = 0; t < 50; ++t) {
        const auto pool = make_pool(1 + rng.below(80));
        std::vector<double> s(pool.size());
        for (auto& x : s) x = rng.bernoulli(0.3) ? 0.5 : rng.uniform(0.01, 0.99);
        std::vector<double> cubed, logits;
        for (double x : s) {
            cubed.push_back(x * x * x);
            logits.push_back(std::log(x / (1 - x)));
        }
        const std::size_t d = rng.below(pool.size() + 1);
        const auto base = select_greedy(pool, s, d).ids;
        CHECK(select_greedy(pool, cubed, d).ids == base);
        CHECK(select_greedy(pool, logits, d).ids == base);
        const std::vector<std::string> pending = {"Z1"};
        CHECK(select_replacements(pool, logits, pending, d).ids == select_replacements(pool, s, pending, d).ids);
    }
}

TEST_CASE("every policy emits a duplicate-free subset of the pool") {
    Rng rng(8);
    for (const char* spec : {"uniform", "greedy", "egreedy:0.3", "iwal:0.7", "iwal:0.5,0.1,0.05"}) {
        const auto policy = InspectionPolicy::parse(spec);
        for (int t = 0; t < 20; ++t) {
            const auto pool = make_pool(1 + rng.below(200));
            std::vector<double> s(pool.size());
            for (auto& x : s) x = rng.uniform();
            const auto b = policy.select(pool, s, rng.below(pool.size() + 5), rng);
            check_subset_distinct(b, pool);
        }
    }
}

TEST_CASE("policy strings") {
    CHECK(InspectionPolicy::parse("uniform").kind() == InspectionPolicy::Kind::Uniform);
    CHECK(InspectionPolicy::parse("egreedy:0.25").epsilon() == 0.25);
    const auto iw = InspectionPolicy::parse("iwal:0.6,0.1,0.05");
    CHECK(iw.iwal_config().target == 0.6);
    CHECK(iw.iwal_config().sigma == 0.1);
    CHECK(iw.iwal_config().floor == 0.05);
    CHECK(InspectionPolicy::parse(iw.to_string()).to_string() == iw.to_string());
    for (const char* bad : {"", "random", "egreedy", "egreedy:2", "iwal:0.7,0.1", "greedy:1", "iwal:x"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(InspectionPolicy::parse(bad), ConfigError);
    }
}

TEST_CASE("iwal: weighted prevalence estimate is unbiased up to clipping") {
    const auto r = testing::iwal_pool_estimate(2000, 100, 100, 41);
    CAPTURE(r.mean);
    CAPTURE(r.truth);
    CAPTURE(r.se);
    CHECK(std::abs(r.mean - r.truth) <= 3.0 * r.se);
}
