// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance --cli <path to remediate> --workdir <scratch dir> [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"

#include "remediate/classifier.hpp"
#include "remediate/config.hpp"
#include "remediate/metrics.hpp"
#include "remediate/spatial_bayes.hpp"

#include "../support.hpp"

namespace fs = std::filesystem;
using namespace remediate;
using nlohmann::json;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;  // runtime bound; 0 = none
    std::function<Verdict()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SyntheticCityConfig acceptance_city(std::size_t n, std::uint64_t seed) {
    SyntheticCityConfig c;
    c.n_parcels = n;
    c.prevalence = 0.75;
    c.signal = {4.0, 2.0, 3.0};  // twice the generator default
    c.seed = seed;
    return c;
}

ModelConfig boosted_model() {
    ModelConfig m;
    m.kind = ModelKind::Boosted;
    m.boost.n_rounds = 100;
    return m;
}

// Fit on a random 75% of the revealed city and score the rest.
double holdout_auroc(const SyntheticCity& city, const ModelConfig& model, std::uint64_t seed) {
    const auto ds = city.revealed();
    const auto encoder = FeatureEncoder::build(ds, model.encoder);
    const auto features = encoder.encode_all(ds);
    auto rows = labeled_rows(ds);
    Rng rng(seed);
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    const std::size_t n_hold = rows.size() / 4;
    std::vector<std::size_t> hold(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(rows.begin() + static_cast<std::ptrdiff_t>(n_hold), rows.end());
    std::sort(hold.begin(), hold.end());
    std::sort(train.begin(), train.end());
    const auto fitted = HazardModel::fit({ds, features, train}, model);
    return auroc(score_rows(fitted, ds, features, hold)).value_or(0.0);
}

ExperimentConfig pipeline_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.epochs = 15;
    cfg.inspections_per_epoch = 150;
    cfg.replacements_per_epoch = 300;
    cfg.policy = "iwal:0.7";
    cfg.model = boosted_model();
    cfg.truncate = Truncation{4500, 2250};
    cfg.track_pool_auroc = false;
    cfg.seed = seed;
    return cfg;
}

ExperimentConfig baseline_config(std::uint64_t seed) {
    auto cfg = pipeline_config(seed);
    cfg.policy = "greedy";
    cfg.inspections_per_epoch = 0;
    cfg.model = ModelConfig{};
    cfg.model.kind = ModelKind::Record;
    return cfg;
}

struct SeedRun {
    double auc = 0, hit = 0, base_hit = 0, savings = 0;
};

// Criteria 3 and 4 share the same 25 backtests.
const std::vector<SeedRun>& backtests() {
    static const std::vector<SeedRun> runs = [] {
        std::vector<SeedRun> out;
        for (std::uint64_t s = 1; s <= 25; ++s) {
            const auto city = generate_synthetic_city(acceptance_city(6506, s));
            const auto env = Environment::backtest(city.revealed());
            SeedRun r;
            r.auc = holdout_auroc(city, boosted_model(), derive_seed(s, 6));
            const auto pcfg = pipeline_config(derive_seed(s, 1));
            const auto bcfg = baseline_config(derive_seed(s, 1));
            const auto p = summarize(run_experiment(pcfg, env), pcfg);
            const auto b = summarize(run_experiment(bcfg, env), bcfg);
            r.hit = p.hit_rate.value_or(0.0);
            r.base_hit = b.hit_rate.value_or(0.0);
            if (p.effective_cost && b.effective_cost) r.savings = 1.0 - *p.effective_cost / *b.effective_cost;
            out.push_back(r);
        }
        return out;
    }();
    return runs;
}

Verdict table3() {
    const auto city = testing::table3_city();
    const auto env = Environment::backtest(city);
    const double want[] = {5325.0, 5747.0, 5705.0};
    const testing::Table3 cases[] = {testing::Table3::InspectAll, testing::Table3::NoInspection,
                                     testing::Table3::TenPercent};
    Verdict v{true, ""};
    for (int i = 0; i < 3; ++i) {
        const auto cfg = testing::table3_config(cases[i]);
        const auto s = summarize(run_experiment(cfg, env), cfg);
        const double got = s.effective_cost.value_or(0.0);
        v.pass = v.pass && std::abs(got - want[i]) <= 1.0;
        v.detail += fmt("%s%.2f", i ? " / " : "effective cost ", got);
    }
    return v;
}

Verdict cost_defaults() {
    const auto c = parse_experiment_config(json::object()).costs;
    return {c.c_h == 250.0 && c.c_r_minus == 2500.0 && c.c_r_plus == 5000.0,
            fmt("c_h %.0f, c_r- %.0f, c_r+ %.0f", c.c_h, c.c_r_minus, c.c_r_plus)};
}

Verdict hit_rate_improvement() {
    const auto& runs = backtests();
    int passed = 0;
    double min_auc = 1, min_hit = 1, max_base = 0;
    for (const auto& r : runs) {
        passed += (r.auc >= 0.93 && r.hit >= 0.95 && r.hit - r.base_hit >= 0.10) ? 1 : 0;
        min_auc = std::min(min_auc, r.auc);
        min_hit = std::min(min_hit, r.hit);
        max_base = std::max(max_base, r.base_hit);
    }
    return {passed >= 20, fmt("%d/25 seeds pass; min AUROC %.4f, min hit rate %.4f, max baseline hit rate %.4f",
                              passed, min_auc, min_hit, max_base)};
}

Verdict savings() {
    const auto& runs = backtests();
    double mean = 0, lo = 1;
    for (const auto& r : runs) {
        mean += r.savings / 25.0;
        lo = std::min(lo, r.savings);
    }
    return {mean >= 0.05, fmt("mean savings %.2f%% (min %.2f%%)", 100 * mean, 100 * lo)};
}

Verdict city_scale() {
    const auto city = generate_synthetic_city(acceptance_city(48000, 48));
    const double auc = holdout_auroc(city, boosted_model(), 7);
    ExperimentConfig cfg;
    cfg.epochs = 100;
    cfg.inspections_per_epoch = 750;
    cfg.replacements_per_epoch = 1500;
    cfg.policy = "iwal:0.7";
    cfg.model = boosted_model();
    cfg.stop_after_successes = 18000;
    cfg.track_pool_auroc = false;
    cfg.seed = 49;
    const auto log = run_experiment(cfg, Environment::generative(city));
    const auto s = summarize(log, cfg);
    const double hit = s.hit_rate.value_or(0.0);
    return {auc >= 0.93 && hit >= 0.95 && log.ledger.n_r_plus >= 18000 && log.stop == StopReason::SuccessTarget,
            fmt("holdout AUROC %.4f, %zu successes in %zu epochs, hit rate %.4f", auc, log.ledger.n_r_plus,
                log.epochs.size(), hit)};
}

Verdict auroc_oracle() {
    Rng r(6);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> scores;
        std::vector<int> labels;
        testing::fuzz_scored(r, 200, scores, labels);
        const double want = testing::pairwise_auroc(scores, labels);
        const auto got = auroc(ScoredSet(scores, labels));
        worst = std::max(worst, got ? std::abs(*got - want) : INFINITY);
    }
    return {worst <= 1e-12, fmt("max |rank - pairwise| = %.3g over 1000 instances", worst)};
}

Verdict posterior() {
    Rng rng(50);
    double worst = 0;
    for (int c = 0; c < 50; ++c) {
        const double a = rng.uniform(0.3, 20.0), b = rng.uniform(0.3, 20.0);
        const std::size_t n = rng.below(151);
        const std::size_t k = rng.below(n + 1);
        const double got = precinct_posterior_mean(PoolingModel{a, b, false, {}}, {"P", n, k});
        const double want =
            testing::posterior_mean_by_quadrature(a, b, static_cast<double>(n), static_cast<double>(k));
        worst = std::max(worst, std::abs(got - want));
    }
    return {worst < 1e-9, fmt("max |closed form - quadrature| = %.3g over 50 cases", worst)};
}

Verdict newton_step() {
    std::vector<TrainingExample> ex = {{{0.0}, 0, 1.0}, {{1.0}, 1, 1.0}};
    const auto train = TrainingSet::from_examples(ex);
    BoostConfig cfg;
    cfg.n_rounds = 1;
    cfg.max_depth = 1;
    cfg.learning_rate = 1.0;
    cfg.min_child_weight = 0.0;
    bool ok = true;
    std::string detail;
    for (double lambda : {0.0, 1.0}) {
        cfg.l2_penalty = lambda;
        const auto m = fit_boosted(train, cfg);
        // g = -0.5 / +0.5, h = 0.25 per point.
        const double want = 0.5 / (0.25 + lambda);
        const double x0[] = {0.0}, x1[] = {1.0};
        const double lo = m.trees().at(0).predict(x0), hi = m.trees().at(0).predict(x1);
        ok = ok && lo == -want && hi == want;
        detail += fmt("%slambda %.0f: leaves %.4f / %.4f", detail.empty() ? "" : "; ", lambda, lo, hi);
    }
    return {ok, detail};
}

Verdict iwal_unbiased() {
    const auto r = testing::iwal_pool_estimate(2000, 100, 100, 41);
    const double z = std::abs(r.mean - r.truth) / r.se;
    return {z <= 3.0, fmt("estimate %.4f vs pool %.4f, |z| = %.2f", r.mean, r.truth, z)};
}

// CLI determinism.
struct CliRunner {
    std::string exe;
    fs::path dir;

    int operator()(const std::string& args) const {
        const auto cmd = exe + " " + args + " > " + (dir / "cli.log").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    fs::path write(const std::string& name, const json& j) const {
        std::ofstream(dir / name) << j.dump(2);
        return dir / name;
    }
};

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[fs::relative(e.path(), root).generic_string()] = s.str();
    }
    return out;
}

Verdict cli_determinism(const std::string& exe, const fs::path& work) {
    const CliRunner cli{exe, work / "determinism"};
    fs::remove_all(cli.dir);
    fs::create_directories(cli.dir);
    const json city = {{"n_parcels", 1500}, {"seed", 3}};
    const json experiment = {{"epochs", 4},
                             {"inspections_per_epoch", 50},
                             {"replacements_per_epoch", 100},
                             {"model", {{"boost", {{"n_rounds", 30}}}}},
                             {"replications", 2},
                             {"threads", 2}};
    const auto gen = cli.write("generate.json", city);
    if (cli("generate --config " + gen.string() + " --out " + (cli.dir / "city").string()) != 0) {
        return {false, "generate failed"};
    }
    const auto parcels = (cli.dir / "city" / "parcels.csv").string();
    const auto observations = (cli.dir / "city" / "observations.csv").string();
    struct Cmd {
        std::string name;
        fs::path config;
        std::string extra;
    };
    const std::vector<Cmd> cmds = {
        {"generate", gen, ""},
        {"evaluate",
         cli.write("evaluate.json", {{"data", {{"synthetic", city}, {"labeled_fraction", 0.7}}},
                                     {"model", {{"boost", {{"n_rounds", 30}}}}},
                                     {"prevalence", {{"n_bootstrap", 20}}},
                                     {"threads", 2}}),
         ""},
        {"backtest",
         cli.write("backtest.json",
                   {{"data", {{"parcels", parcels}, {"observations", observations}}}, {"experiment", experiment}}),
         " --seed 4"},
        {"simulate", cli.write("simulate.json", {{"data", {{"synthetic", city}}}, {"experiment", experiment}}),
         " --format json"},
        {"report", cli.write("report.json", {{"bundles", {(cli.dir / "backtest_0").string()}}}),
         " --truncate-visits 200,100"},
    };
    std::string detail;
    bool ok = true;
    for (const auto& c : cmds) {
        std::map<std::string, std::string> first;
        for (int pass = 0; pass < 2; ++pass) {
            const auto out = cli.dir / (c.name + "_" + std::to_string(pass));
            fs::remove_all(out);
            if (cli(c.name + " --config " + c.config.string() + " --out " + out.string() + c.extra) != 0) {
                return {false, c.name + " failed"};
            }
            auto files = tree(out);
            if (pass == 0) {
                first = std::move(files);
            } else {
                const bool same = !first.empty() && files == first;
                ok = ok && same;
                detail += fmt("%s%s %zu files %s", detail.empty() ? "" : ", ", c.name.c_str(), files.size(),
                              same ? "identical" : "DIFFER");
            }
        }
    }
    return {ok, detail};
}

Verdict classifier_ordering() {
    int wins = 0;
    double margin = 0;
    ModelConfig logistic;
    logistic.kind = ModelKind::Logistic;
    for (std::uint64_t s = 1; s <= 25; ++s) {
        const auto city = generate_synthetic_city(acceptance_city(3000, 1100 + s));
        const double b = holdout_auroc(city, boosted_model(), s);
        const double l = holdout_auroc(city, logistic, s);
        wins += b >= l ? 1 : 0;
        margin += (b - l) / 25.0;
    }
    return {wins >= 20, fmt("boosted >= logistic in %d/25 splits, mean margin %+.4f", wins, margin)};
}

Verdict ledger_invariants() {
    const auto r = testing::ledger_fuzz(10000, 12);
    return {r.violations == 0 && r.runs == 10000,
            fmt("%zu runs, %zu actions, %zu violations%s%s", r.runs, r.actions, r.violations,
                r.first.empty() ? "" : "; first: ", r.first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string cli_path;
    std::string workdir = "acceptance_work";
    std::vector<int> only;
    app.add_option("--cli", cli_path, "remediate executable")->required();
    app.add_option("--workdir", workdir, "scratch directory");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(workdir);

    // Runtime bounds in seconds. #3 and #4 share one 5 minute budget, charged to #3.
    const std::vector<Criterion> criteria = {
        {1, "Table 3 cost arithmetic", 1, table3},
        {2, "cost schedule defaults", 0, cost_defaults},
        {3, "hit-rate improvement over record-only baseline", 300, hit_rate_improvement},
        {4, "effective-cost savings", 300, savings},
        {5, "48,000-home generative run", 600, city_scale},
        {6, "AUROC equals pairwise count", 10, auroc_oracle},
        {7, "beta-binomial posterior vs quadrature", 5, posterior},
        {8, "boosting Newton step", 1, newton_step},
        {9, "IWAL prevalence unbiasedness", 30, iwal_unbiased},
        {10, "CLI determinism", 0, [&] { return cli_determinism(cli_path, workdir); }},
        {11, "boosted vs logistic AUROC", 0, classifier_ordering},
        {12, "ledger invariant fuzz", 0, ledger_invariants},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = fmt("%.2fs", secs);
        if (c.limit_s > 0) {
            timing += fmt(" (limit %.0fs)", c.limit_s);
            if (secs > c.limit_s) {
                v.pass = false;
                v.detail += "; over time";
            }
        }
        if (!v.pass) ++failed;
        std::printf("%s  #%-2d %-48s %s [%s]\n", v.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), v.detail.c_str(),
                    timing.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
