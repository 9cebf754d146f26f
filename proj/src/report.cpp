#include "remediate/report.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "remediate/csv.hpp"
#include "remediate/error.hpp"
#include "remediate/metrics.hpp"

namespace remediate {

namespace {

using nlohmann::json;

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> mean_present(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (!v) continue;
        sum += *v;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::string table(const CurveSeries& curve, TableFormat format) {
    if (format == TableFormat::Json) return dump(curve.to_json());
    std::ostringstream out;
    curve.write_csv(out);
    return out.str();
}

std::string table_name(const std::string& stem, TableFormat format) {
    return stem + (format == TableFormat::Json ? ".json" : ".csv");
}

CityDataset reveal_fraction(const SyntheticCity& city, double fraction, std::uint64_t seed) {
    if (fraction >= 1.0) return city.revealed();
    const auto truth = city.truth_observations();
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(truth.size())));
    std::vector<std::size_t> idx(truth.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<ServiceLineObservation> picked;
    picked.reserve(k);
    for (std::size_t i : idx) picked.push_back(truth[i]);
    return apply_observations(city.dataset, picked);
}

json summary_json(const Summary& s, const ExperimentLog& log) {
    json j = s.to_json();
    j["seed"] = log.seed;
    j["environment_hazardous"] = log.environment_hazardous;
    j["full_ledger"] = log.ledger.to_json();
    return j;
}

struct RunStats {
    json replications = json::array();
    std::optional<double> hit_rate;
    std::optional<double> effective_cost;
};

RunStats run_stats(const std::vector<ExperimentLog>& logs, const ExperimentConfig& cfg) {
    RunStats st;
    std::vector<std::optional<double>> hits, costs;
    for (const auto& log : logs) {
        const Summary s = summarize(log, cfg);
        hits.push_back(s.hit_rate);
        costs.push_back(s.effective_cost);
        st.replications.push_back(summary_json(s, log));
    }
    st.hit_rate = mean_present(hits);
    st.effective_cost = mean_present(costs);
    return st;
}

}  // namespace

TableFormat parse_table_format(std::string_view text) {
    if (text == "csv") return TableFormat::Csv;
    if (text == "json") return TableFormat::Json;
    throw ConfigError("--format must be csv or json");
}

void Bundle::write(const std::filesystem::path& dir) const {
    for (const auto& [rel, content] : files) {
        const auto path = dir / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write '" + path.string() + "'");
        out << content;
    }
}

CityDataset load_dataset(const DataSource& source) {
    if (source.synthetic) {
        const auto city = generate_synthetic_city(*source.synthetic);
        return reveal_fraction(city, source.labeled_fraction, derive_seed(source.synthetic->seed, 5));
    }
    std::ifstream parcels(source.parcels);
    if (!parcels) throw DataError("cannot open parcel file '" + source.parcels.string() + "'");
    CityDataset ds = ingest_parcels(parcels);
    if (!source.observations.empty()) {
        std::ifstream obs(source.observations);
        if (!obs) throw DataError("cannot open observation file '" + source.observations.string() + "'");
        ds = apply_observations(std::move(ds), ingest_observations(obs));
    }
    return ds;
}

Environment make_environment(const RunConfig& cfg) {
    if (cfg.environment == "generative") return Environment::generative(generate_synthetic_city(*cfg.data.synthetic));
    if (cfg.environment == "simulated") {
        return Environment::simulated(load_dataset(cfg.data), cfg.knn_k, derive_seed(cfg.seed, 4));
    }
    if (cfg.data.synthetic) {
        DataSource all = cfg.data;
        all.labeled_fraction = 1.0;
        return Environment::backtest(load_dataset(all));
    }
    return Environment::backtest(load_dataset(cfg.data));
}

std::string ledger_csv(std::span<const Action> actions, std::size_t replication) {
    std::ostringstream out;
    csv::write_row(out, {"replication", "step", "epoch", "action", "parcel_id", "outcome", "weight", "cost", "n_h",
                         "n_r_plus", "n_r_minus", "total_cost"});
    std::size_t n_h = 0, n_plus = 0, n_minus = 0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const auto& a = actions[i];
        std::string outcome;
        if (a.kind == ActionKind::Inspection) {
            ++n_h;
            outcome = a.failed ? "failed" : (a.hazardous ? "hazardous" : "safe");
        } else {
            (a.hazardous ? n_plus : n_minus)++;
            outcome = a.hazardous ? "hazardous" : "safe";
        }
        csv::write_row(out, {std::to_string(replication), std::to_string(i + 1), std::to_string(a.epoch),
                             std::string(to_string(a.kind)), a.parcel_id, outcome, csv::format_double(a.weight),
                             csv::format_double(a.cost), std::to_string(n_h), std::to_string(n_plus),
                             std::to_string(n_minus), csv::format_double(a.total_after)});
    }
    return out.str();
}

Bundle generate_bundle(const SyntheticCityConfig& cfg) {
    const auto city = generate_synthetic_city(cfg);
    Bundle b;
    std::ostringstream parcels, obs;
    write_parcels(parcels, city.dataset);
    write_observations(obs, city.truth_observations());
    b.files["parcels.csv"] = parcels.str();
    b.files["observations.csv"] = obs.str();
    const auto hazardous = city.hazardous_count();
    b.files["summary.json"] = dump({{"command", "generate"},
                                    {"config", to_json(cfg)},
                                    {"n_parcels", city.dataset.size()},
                                    {"n_precincts", city.dataset.precincts().size()},
                                    {"hazardous", hazardous},
                                    {"prevalence", static_cast<double>(hazardous) /
                                                       static_cast<double>(city.dataset.size())}});
    return b;
}

Bundle evaluate_bundle(const EvaluateConfig& cfg, TableFormat format) {
    const CityDataset ds = load_dataset(cfg.data);
    const auto encoder = FeatureEncoder::build(ds, cfg.model.encoder);
    const auto features = encoder.encode_all(ds);
    auto labeled = labeled_rows(ds);
    if (labeled.size() < 4) throw DataError("evaluation needs at least four labeled homes");

    // Fixed holdout split.
    Rng rng(derive_seed(cfg.seed, 6));
    for (std::size_t i = labeled.size(); i > 1; --i) std::swap(labeled[i - 1], labeled[rng.below(i)]);
    const auto n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(labeled.size()))));
    std::vector<std::size_t> holdout(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(labeled.begin() + static_cast<std::ptrdiff_t>(n_hold), labeled.end());
    std::sort(holdout.begin(), holdout.end());
    std::sort(train.begin(), train.end());

    const auto model = HazardModel::fit({ds, features, train}, cfg.model);
    const ScoredSet scored = score_rows(model, ds, features, holdout);

    Bundle b;
    json summary = {{"command", "evaluate"},
                    {"data", cfg.data.to_json()},
                    {"model", to_json(cfg.model)},
                    {"seed", cfg.seed},
                    {"n_parcels", ds.size()},
                    {"n_labeled", ds.labeled_count()},
                    {"holdout", holdout.size()},
                    {"train", train.size()}};
    summary["auroc"] = optional_json(auroc(scored));
    summary["confusion_top_fraction"] = confusion_top_fraction(scored, cfg.top_fraction).to_json();
    summary["confusion_top_fraction"]["fraction"] = cfg.top_fraction;
    summary["confusion_at_0.5"] = confusion_at_threshold(scored, 0.5).to_json();
    summary["holdout_log_loss"] = [&] {
        double loss = 0.0;
        for (std::size_t i = 0; i < scored.size(); ++i) {
            const double p = scored.scores[i];
            loss -= scored.labels[i] ? std::log(p) : std::log1p(-p);
        }
        return loss / static_cast<double>(scored.size());
    }();

    if (const auto roc = roc_points(scored)) b.files[table_name("curves/roc", format)] = table(*roc, format);
    b.files[table_name("curves/reliability", format)] = table(reliability_curve(scored, cfg.reliability_bins), format);

    const auto lc = learning_curve(ds, features, cfg.model, cfg.learning);
    b.files[table_name("curves/learning", format)] = table(lc, format);
    summary["learning_curve_flags"] = lc.flags;
    const auto tc = temporal_learning_curve(ds, features, cfg.model, cfg.temporal_period);
    b.files[table_name("curves/temporal", format)] = table(tc, format);
    summary["temporal_curve_flags"] = tc.flags;

    const auto full = HazardModel::fit({ds, features, labeled_rows(ds)}, cfg.model);
    if (const auto* boosted = full.boosted()) summary["feature_importance"] = feature_importance(*boosted);
    if (cfg.prevalence) {
        summary["prevalence_interval"] = prevalence_interval(ds, features, cfg.model, cfg.prevalence_cfg).to_json();
        summary["prevalence_interval"]["confidence"] = cfg.prevalence_cfg.confidence;
    }
    const auto crosstab = records_crosstab(ds);
    json ct = json::object();
    for (std::size_t r = 0; r < crosstab.rows.size(); ++r) {
        for (std::size_t c = 0; c < crosstab.columns.size(); ++c) {
            if (crosstab.counts[r][c]) ct[crosstab.rows[r]][crosstab.columns[c]] = crosstab.counts[r][c];
        }
    }
    summary["records_crosstab"] = ct;

    b.files["model.json"] = dump({{"encoder", encoder.to_json()}, {"model", full.to_json()}});
    b.files["summary.json"] = dump(summary);
    return b;
}

Bundle run_bundle(const RunConfig& cfg, TableFormat format, std::string_view command) {
    const Environment env = make_environment(cfg);
    const auto logs = run_replications(cfg.experiment, env);
    const RunStats stats = run_stats(logs, cfg.experiment);

    json summary = {{"command", command},
                    {"environment",
                     {{"kind", env.kind()}, {"parcels", env.city().size()}, {"hazardous", env.hazardous_count()}}},
                    {"data", cfg.data.to_json()},
                    {"seed", cfg.seed},
                    {"experiment", to_json(cfg.experiment)},
                    {"replications", stats.replications},
                    {"hit_rate", optional_json(stats.hit_rate)},
                    {"effective_cost", optional_json(stats.effective_cost)}};
    if (cfg.baseline) {
        const auto base_cfg = baseline_experiment(cfg);
        const RunStats base = run_stats(run_replications(base_cfg, env), base_cfg);
        summary["baseline"] = {{"overrides", *cfg.baseline},
                               {"hit_rate", optional_json(base.hit_rate)},
                               {"effective_cost", optional_json(base.effective_cost)},
                               {"replications", base.replications}};
        if (stats.effective_cost && base.effective_cost) {
            summary["savings_vs_baseline"] = 1.0 - *stats.effective_cost / *base.effective_cost;
        } else {
            summary["savings_vs_baseline"] = nullptr;
        }
    }

    Bundle b;
    std::string ledger, ndjson;
    json ledger_rows = json::array();
    for (std::size_t r = 0; r < logs.size(); ++r) {
        const auto actions = logs[r].actions();
        if (format == TableFormat::Csv) {
            std::string part = ledger_csv(actions, r);
            if (r > 0) part.erase(0, part.find('\n') + 1);  // header once
            ledger += part;
        } else {
            for (const auto& a : actions) {
                json row = a.to_json();
                row["replication"] = r;
                ledger_rows.push_back(row);
            }
        }
        for (const auto& e : logs[r].epochs) ndjson += json{{"replication", r}, {"epoch", e.to_json()}}.dump() + "\n";
        ndjson += json{{"replication", r}, {"summary", stats.replications[r]}}.dump() + "\n";
    }
    if (format == TableFormat::Csv) b.files["ledger.csv"] = ledger;
    else b.files["ledger.json"] = dump(ledger_rows);
    b.files["epochs.ndjson"] = ndjson;

    CurveSeries progress;
    progress.metric = "epoch_progress";
    progress.x_name = "epoch";
    progress.y_name = "cumulative_hit_rate";
    progress.meta = {{"replication", 0}};
    CurveSeries pool_auc;
    pool_auc.metric = "pool_auroc";
    pool_auc.x_name = "epoch";
    pool_auc.y_name = "auroc";
    pool_auc.meta = {{"replication", 0}};
    if (!logs.empty()) {
        for (const auto& e : logs.front().epochs) {
            if (const auto h = hit_rate(e.ledger)) {
                progress.points.push_back({static_cast<double>(e.epoch), *h, 0.0, e.ledger.replacement_visits()});
            }
            if (e.model.pool_auroc) {
                pool_auc.points.push_back({static_cast<double>(e.epoch), *e.model.pool_auroc, 0.0, e.model.n_labeled});
            }
        }
        b.files["model.json"] = dump({{"encoder", logs.front().encoder.to_json()},
                                      {"model", logs.front().final_model.to_json()}});
    }
    b.files[table_name("curves/hit_rate", format)] = table(progress, format);
    b.files[table_name("curves/pool_auroc", format)] = table(pool_auc, format);
    b.files["summary.json"] = dump(summary);
    return b;
}

Bundle report_bundle(const std::vector<std::filesystem::path>& bundles, const std::optional<Truncation>& truncation,
                     TableFormat format) {
    if (bundles.empty()) throw ConfigError("report needs at least one bundle");
    json runs = json::array();
    std::ostringstream table_csv;
    csv::write_row(table_csv, {"bundle", "replication", "hit_rate", "effective_cost", "n_h", "n_r_plus", "n_r_minus",
                               "total_cost", "ledger_consistent"});
    json table_rows = json::array();

    for (const auto& dir : bundles) {
        const json summary = load_json_file(dir / "summary.json");
        if (!summary.contains("experiment")) throw DataError("'" + dir.string() + "' is not a run bundle");
        const CostSchedule costs = parse_costs(summary.at("experiment").at("costs"));
        std::optional<Truncation> trunc = truncation;
        if (!trunc && !summary.at("experiment").at("truncate_visits").is_null()) {
            const auto& t = summary.at("experiment").at("truncate_visits");
            trunc = Truncation{t[0].get<std::size_t>(), t[1].get<std::size_t>()};
        }

        std::ifstream in(dir / "epochs.ndjson");
        if (!in) throw DataError("'" + dir.string() + "' has no epochs.ndjson");
        std::map<std::size_t, std::vector<Action>> actions;
        std::map<std::size_t, CostLedger> logged;
        std::string line;
        try {
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const json rec = json::parse(line);
                const auto r = rec.at("replication").get<std::size_t>();
                if (rec.contains("epoch")) {
                    const EpochLog e = EpochLog::from_json(rec.at("epoch"));
                    actions[r].insert(actions[r].end(), e.actions.begin(), e.actions.end());
                    logged[r] = e.ledger;
                }
            }
        } catch (const json::exception& e) {
            throw DataError("'" + dir.string() + "/epochs.ndjson' is malformed: " + e.what());
        }

        json reps = json::array();
        for (const auto& [r, acts] : actions) {
            const Summary s = summarize(acts, costs, trunc);
            const Summary full = summarize(acts, costs, std::nullopt);
            const bool consistent = full.ledger == logged[r] && full.ledger.identity_holds(costs);
            json rj = s.to_json();
            rj["replication"] = r;
            rj["ledger_consistent"] = consistent;
            reps.push_back(rj);
            const std::string name = dir.filename().empty() ? dir.parent_path().filename().string()
                                                            : dir.filename().string();
            auto fmt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
            csv::write_row(table_csv, {name, std::to_string(r), fmt(s.hit_rate), fmt(s.effective_cost),
                                       std::to_string(s.ledger.n_h), std::to_string(s.ledger.n_r_plus),
                                       std::to_string(s.ledger.n_r_minus), csv::format_double(s.ledger.total),
                                       consistent ? "true" : "false"});
            table_rows.push_back({{"bundle", name}, {"replication", r}, {"summary", rj}});
        }
        runs.push_back({{"bundle", dir.generic_string()}, {"command", summary.value("command", "")}, {"replications", reps}});
    }

    Bundle b;
    json out = {{"command", "report"}, {"runs", runs}};
    if (truncation) out["truncate_visits"] = {{"n_slr", truncation->n_slr}, {"n_hvi", truncation->n_hvi}};
    b.files["summary.json"] = dump(out);
    if (format == TableFormat::Csv) b.files["report.csv"] = table_csv.str();
    else b.files["report.json"] = dump(table_rows);
    return b;
}

}  // namespace remediate
