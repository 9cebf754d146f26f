#include "remediate/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "remediate/error.hpp"
#include "remediate/metrics.hpp"
#include "remediate/parallel.hpp"

namespace remediate {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void CostSchedule::validate() const {
    for (double c : {c_h, c_r_plus, c_r_minus}) {
        if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("unit costs must be positive and finite");
    }
    if (!(c_r_minus < c_r_plus)) throw ConfigError("c_r_minus must be below c_r_plus");
}

void CostLedger::record_inspection(const CostSchedule& c) {
    ++n_h;
    total += c.c_h;
}

void CostLedger::record_replacement(const CostSchedule& c, bool hazardous) {
    if (hazardous) {
        ++n_r_plus;
        total += c.c_r_plus;
    } else {
        ++n_r_minus;
        total += c.c_r_minus;
    }
}

bool CostLedger::identity_holds(const CostSchedule& c) const {
    const double expected = c.c_h * static_cast<double>(n_h) + c.c_r_plus * static_cast<double>(n_r_plus) +
                            c.c_r_minus * static_cast<double>(n_r_minus);
    return std::abs(total - expected) <= 1e-9 * std::max(1.0, std::abs(expected));
}

nlohmann::json CostLedger::to_json() const {
    return {{"n_h", n_h}, {"n_r_plus", n_r_plus}, {"n_r_minus", n_r_minus}, {"total_cost", total}};
}

std::optional<double> hit_rate(const CostLedger& ledger) {
    if (ledger.replacement_visits() == 0) return std::nullopt;
    return static_cast<double>(ledger.n_r_plus) / static_cast<double>(ledger.replacement_visits());
}

std::optional<double> effective_cost(const CostLedger& ledger) {
    if (ledger.n_r_plus == 0) return std::nullopt;
    return ledger.total / static_cast<double>(ledger.n_r_plus);
}

void ExperimentConfig::validate() const {
    if (!(budget >= 0.0)) throw ConfigError("budget must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(hydrovac_failure_rate >= 0.0 && hydrovac_failure_rate < 1.0)) {
        throw ConfigError("hydrovac failure rate must lie in [0, 1)");
    }
    if (replications == 0) throw ConfigError("replications must be >= 1");
    costs.validate();
    model.validate();
    (void)InspectionPolicy::parse(policy);
}

// ---------------------------------------------------------------------------

Environment::Environment(std::string kind, CityDataset city, std::vector<VerifiedLine> truth)
    : kind_(std::move(kind)), city_(std::move(city)), truth_(std::move(truth)) {
    if (truth_.size() != city_.size()) throw DataError("environment truth does not cover every parcel");
    for (const auto& t : truth_) hazardous_ += t.label().hazardous ? 1 : 0;
}

Environment Environment::backtest(const CityDataset& labeled) {
    std::vector<VerifiedLine> truth;
    truth.reserve(labeled.size());
    for (const auto& p : labeled.parcels()) {
        if (!p.verified) throw DataError("backtest parcel '" + p.parcel_id + "' has no verified label");
        truth.push_back(*p.verified);
    }
    return Environment("backtest", labeled.without_labels(), std::move(truth));
}

Environment Environment::generative(const SyntheticCity& city) {
    return Environment("generative", city.dataset.without_labels(), city.truth);
}

Environment Environment::simulated(const CityDataset& template_ds, std::size_t k, std::uint64_t seed) {
    const CityDataset labeled = template_ds.labeled_subset();
    std::vector<ParcelRecord> unlabeled;
    for (const auto& p : template_ds.parcels())
        if (!p.labeled()) unlabeled.push_back(p);
    const auto propagated = knn_propagate_labels(labeled, unlabeled, k, derive_seed(seed, 0));

    Rng rng(derive_seed(seed, 1));
    std::vector<VerifiedLine> truth(template_ds.size());
    for (std::size_t i = 0; i < template_ds.size(); ++i) {
        if (template_ds.parcel(i).verified) truth[i] = *template_ds.parcel(i).verified;
    }
    for (const auto& pl : propagated) {
        VerifiedLine line = materials_for_label(pl.label, rng);
        line.epoch = 0;
        truth[template_ds.index_of(pl.parcel_id)] = line;
    }
    return Environment("simulated", template_ds.without_labels(), std::move(truth));
}

// ---------------------------------------------------------------------------

std::string_view to_string(ActionKind k) noexcept {
    return k == ActionKind::Inspection ? "inspection" : "replacement";
}

std::string_view to_string(StopReason r) noexcept {
    switch (r) {
        case StopReason::None: return "none";
        case StopReason::Epochs: return "epochs";
        case StopReason::Budget: return "budget";
        case StopReason::Exhausted: return "exhausted";
        case StopReason::SuccessTarget: return "success_target";
    }
    return "none";
}

StopReason parse_stop_reason(std::string_view s) {
    for (auto r : {StopReason::None, StopReason::Epochs, StopReason::Budget, StopReason::Exhausted,
                   StopReason::SuccessTarget}) {
        if (to_string(r) == s) return r;
    }
    throw DataError("unknown stop reason '" + std::string(s) + "'");
}

nlohmann::json Action::to_json() const {
    return {{"epoch", epoch},         {"action", to_string(kind)},   {"parcel_id", parcel_id},
            {"hazardous", hazardous}, {"failed", failed},            {"weight", weight},
            {"from_pending", from_pending}, {"cost", cost},          {"total_after", total_after}};
}

Action Action::from_json(const nlohmann::json& j) {
    Action a;
    a.epoch = j.at("epoch").get<int>();
    const auto kind = j.at("action").get<std::string>();
    if (kind == "inspection") a.kind = ActionKind::Inspection;
    else if (kind == "replacement") a.kind = ActionKind::Replacement;
    else throw DataError("unknown action '" + kind + "'");
    a.parcel_id = j.at("parcel_id").get<std::string>();
    a.hazardous = j.at("hazardous").get<bool>();
    a.failed = j.at("failed").get<bool>();
    a.weight = j.at("weight").get<double>();
    a.from_pending = j.at("from_pending").get<bool>();
    a.cost = j.at("cost").get<double>();
    a.total_after = j.at("total_after").get<double>();
    return a;
}

nlohmann::json EpochLog::to_json() const {
    auto acts = nlohmann::json::array();
    for (const auto& a : actions) acts.push_back(a.to_json());
    return {{"epoch", epoch},
            {"actions", acts},
            {"ledger", ledger.to_json()},
            {"model",
             {{"n_labeled", model.n_labeled},
              {"n_train", model.n_train},
              {"pool_auroc", optional_json(model.pool_auroc)},
              {"mean_score", model.mean_score},
              {"spatial_active", model.spatial_active},
              {"recalibration_clamped", model.recalibration_clamped},
              {"weights_clipped", model.weights_clipped}}},
            {"unlabeled_after", unlabeled_after},
            {"pending_after", pending_after},
            {"stop", to_string(stop)}};
}

EpochLog EpochLog::from_json(const nlohmann::json& j) {
    EpochLog e;
    e.epoch = j.at("epoch").get<int>();
    for (const auto& a : j.at("actions")) e.actions.push_back(Action::from_json(a));
    const auto& l = j.at("ledger");
    e.ledger.n_h = l.at("n_h").get<std::size_t>();
    e.ledger.n_r_plus = l.at("n_r_plus").get<std::size_t>();
    e.ledger.n_r_minus = l.at("n_r_minus").get<std::size_t>();
    e.ledger.total = l.at("total_cost").get<double>();
    const auto& m = j.at("model");
    e.model.n_labeled = m.at("n_labeled").get<std::size_t>();
    e.model.n_train = m.at("n_train").get<std::size_t>();
    if (!m.at("pool_auroc").is_null()) e.model.pool_auroc = m.at("pool_auroc").get<double>();
    e.model.mean_score = m.at("mean_score").get<double>();
    e.model.spatial_active = m.at("spatial_active").get<bool>();
    e.model.recalibration_clamped = m.at("recalibration_clamped").get<bool>();
    e.model.weights_clipped = m.at("weights_clipped").get<bool>();
    e.unlabeled_after = j.at("unlabeled_after").get<std::size_t>();
    e.pending_after = j.at("pending_after").get<std::size_t>();
    e.stop = parse_stop_reason(j.at("stop").get<std::string>());
    return e;
}

nlohmann::json Summary::to_json() const {
    nlohmann::json j = {{"ledger", ledger.to_json()},
                        {"hit_rate", optional_json(hit_rate)},
                        {"effective_cost", optional_json(effective_cost)},
                        {"truncated", truncated},
                        {"epochs", epochs},
                        {"stop", to_string(stop)}};
    if (truncation) j["truncate_visits"] = {{"n_slr", truncation->n_slr}, {"n_hvi", truncation->n_hvi}};
    return j;
}

std::vector<Action> ExperimentLog::actions() const {
    std::vector<Action> out;
    for (const auto& e : epochs) out.insert(out.end(), e.actions.begin(), e.actions.end());
    return out;
}

// ---------------------------------------------------------------------------

Experiment::Experiment(ExperimentConfig cfg, const Environment& env)
    : cfg_(std::move(cfg)), env_(&env), rng_(derive_seed(cfg_.seed, 1)) {
    cfg_.validate();
    policy_ = InspectionPolicy::parse(cfg_.policy);
    city_ = env.city();
    encoder_ = FeatureEncoder::build(city_, cfg_.model.encoder);
    features_ = encoder_.encode_all(city_);
    weight_.assign(city_.size(), 1.0);
    replaced_.assign(city_.size(), false);

    if (cfg_.initial_labeled > 0) {
        if (cfg_.initial_labeled > city_.size()) throw ConfigError("initial_labeled exceeds the number of parcels");
        std::vector<std::size_t> rows(city_.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        Rng pick(derive_seed(cfg_.seed, 2));
        for (std::size_t i = 0; i < cfg_.initial_labeled; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(pick.below(rows.size() - i));
            std::swap(rows[i], rows[j]);
        }
        rows.resize(cfg_.initial_labeled);
        std::sort(rows.begin(), rows.end());
        for (std::size_t r : rows) observe(r, ObservationSource::Pilot);
    }
    if (cfg_.epochs == 0) stop_ = StopReason::Epochs;
}

std::vector<std::size_t> Experiment::unlabeled_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < city_.size(); ++i)
        if (!city_.parcel(i).labeled()) rows.push_back(i);
    return rows;
}

void Experiment::refit() {
    const auto rows = labeled_rows(city_);
    std::vector<double> w;
    w.reserve(rows.size());
    for (std::size_t r : rows) w.push_back(weight_[r]);
    model_ = HazardModel::fit({city_, features_, rows, w, env_->truth()}, cfg_.model);
}

bool Experiment::afford(double cost) const { return ledger_.total + cost <= cfg_.budget; }

bool Experiment::success_target_reached() const {
    return cfg_.stop_after_successes && ledger_.n_r_plus >= *cfg_.stop_after_successes;
}

void Experiment::observe(std::size_t row, ObservationSource source) {
    const VerifiedLine& t = env_->truth(row);
    ServiceLineObservation obs{city_.parcel(row).parcel_id, t.public_material, t.private_material, source,
                               epoch_};
    city_ = apply_observation(std::move(city_), obs);
}

void Experiment::check_ledger() const {
    if (!ledger_.identity_holds(cfg_.costs)) throw std::logic_error("cost ledger identity violated");
    if (ledger_.total > cfg_.budget) throw std::logic_error("cost ledger exceeded the budget");
}

EpochLog Experiment::run_epoch() {
    if (done()) throw std::logic_error("run_epoch called on a finished experiment");
    EpochLog log;
    log.epoch = ++epoch_;

    auto stop = [&](StopReason r) {
        if (stop_ == StopReason::None) stop_ = r;
    };
    auto pool_ids = [&](const std::vector<std::size_t>& rows) {
        std::vector<std::string> ids;
        ids.reserve(rows.size());
        for (std::size_t r : rows) ids.push_back(city_.parcel(r).parcel_id);
        return ids;
    };

    // (1) model refresh on L, scores over U
    refit();
    auto pool = unlabeled_rows();
    bool clamped = false;
    auto scores = model_.score(city_, features_, pool, &clamped);
    log.model.n_labeled = city_.labeled_count();
    log.model.n_train = model_.n_train();
    log.model.spatial_active = model_.spatial_active();
    log.model.recalibration_clamped = clamped;
    if (!scores.empty()) {
        log.model.mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    }
    if (cfg_.track_pool_auroc && !pool.empty()) {
        ScoredSet s;
        for (std::size_t i = 0; i < pool.size(); ++i) s.add(scores[i], env_->truth(pool[i]).label().y());
        log.model.pool_auroc = auroc(s);
    }

    // (2) inspections
    bool learned = false;
    if (cfg_.inspections_per_epoch > 0 && !pool.empty()) {
        const auto ids = pool_ids(pool);
        const auto batch = policy_.select(ids, scores, cfg_.inspections_per_epoch, rng_);
        log.model.weights_clipped = batch.clipped;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (success_target_reached()) {
                stop(StopReason::SuccessTarget);
                break;
            }
            if (!afford(cfg_.costs.c_h)) {
                stop(StopReason::Budget);
                break;
            }
            const std::size_t row = city_.index_of(batch.ids[i]);
            ledger_.record_inspection(cfg_.costs);
            Action a;
            a.epoch = epoch_;
            a.kind = ActionKind::Inspection;
            a.parcel_id = batch.ids[i];
            a.cost = cfg_.costs.c_h;
            a.total_after = ledger_.total;
            a.failed = cfg_.hydrovac_failure_rate > 0.0 && rng_.bernoulli(cfg_.hydrovac_failure_rate);
            if (!a.failed) {
                a.hazardous = env_->truth(row).label().hazardous;
                a.weight = cfg_.model.importance_weights ? batch.weights[i] : 1.0;
                weight_[row] = a.weight;
                observe(row, ObservationSource::Hydrovac);
                if (a.hazardous) pending_.push_back(a.parcel_id);
                learned = true;
            }
            log.actions.push_back(std::move(a));
            check_ledger();
        }
    }

    // (3) mid-epoch refresh, (4) replacements
    if (!done() && cfg_.replacements_per_epoch > 0) {
        if (learned) {
            refit();
            pool = unlabeled_rows();
            scores = model_.score(city_, features_, pool);
        }
        const auto ids = pool_ids(pool);
        const auto sel = select_replacements(ids, scores, pending_, cfg_.replacements_per_epoch);
        std::size_t pending_used = 0;
        for (std::size_t i = 0; i < sel.ids.size(); ++i) {
            if (success_target_reached()) {
                stop(StopReason::SuccessTarget);
                break;
            }
            // The outcome is unknown until the dig, so price the dearer case.
            if (!afford(cfg_.costs.c_r_plus)) {
                stop(StopReason::Budget);
                break;
            }
            const std::size_t row = city_.index_of(sel.ids[i]);
            if (replaced_[row]) throw std::logic_error("home replaced twice: " + sel.ids[i]);
            Action a;
            a.epoch = epoch_;
            a.kind = ActionKind::Replacement;
            a.parcel_id = sel.ids[i];
            a.from_pending = i < sel.from_pending;
            a.hazardous = env_->truth(row).label().hazardous;
            ledger_.record_replacement(cfg_.costs, a.hazardous);
            a.cost = a.hazardous ? cfg_.costs.c_r_plus : cfg_.costs.c_r_minus;
            a.total_after = ledger_.total;
            replaced_[row] = true;
            if (a.from_pending) {
                ++pending_used;
            } else {
                weight_[row] = 1.0;
                observe(row, ObservationSource::Replacement);
            }
            log.actions.push_back(std::move(a));
            check_ledger();
        }
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(pending_used));
    }

    const std::size_t unlabeled = city_.size() - city_.labeled_count();
    if (success_target_reached()) stop(StopReason::SuccessTarget);
    if (unlabeled == 0 && pending_.empty()) stop(StopReason::Exhausted);
    if (epoch_ >= cfg_.epochs) stop(StopReason::Epochs);

    log.ledger = ledger_;
    log.unlabeled_after = unlabeled;
    log.pending_after = pending_.size();
    log.stop = stop_;
    return log;
}

ExperimentLog run_experiment(const ExperimentConfig& cfg, const Environment& env) {
    Experiment exp(cfg, env);
    ExperimentLog out;
    out.seed = cfg.seed;
    out.environment_hazardous = env.hazardous_count();
    while (!exp.done()) {
        EpochLog e = exp.run_epoch();
        // An epoch stopped before its first action leaves no trace.
        if (e.actions.empty() && e.stop == StopReason::Budget) break;
        out.epochs.push_back(std::move(e));
    }
    out.ledger = exp.ledger();
    out.stop = exp.stop_reason();
    out.encoder = exp.encoder();
    out.final_model = exp.model();
    return out;
}

std::vector<ExperimentLog> run_replications(const ExperimentConfig& cfg, const Environment& env) {
    cfg.validate();
    std::vector<ExperimentLog> logs(cfg.replications);
    parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
        ExperimentConfig c = cfg;
        c.seed = cfg.replications == 1 ? cfg.seed : derive_seed(cfg.seed, r);
        logs[r] = run_experiment(c, env);
    });
    return logs;
}

CostLedger replay(std::span<const Action> actions, const Environment& env, const CostSchedule& costs) {
    CostLedger ledger;
    std::unordered_set<std::string> inspected, replaced;
    for (const auto& a : actions) {
        const auto row = env.city().find(a.parcel_id);
        if (!row) throw UnknownParcelError(a.parcel_id);
        const bool truth = env.truth(*row).label().hazardous;
        if (a.kind == ActionKind::Inspection) {
            ledger.record_inspection(costs);
            if (a.failed) continue;
            if (a.hazardous != truth) throw DataError("logged inspection of '" + a.parcel_id + "' disagrees with the truth");
            if (!inspected.insert(a.parcel_id).second) throw DataError("'" + a.parcel_id + "' inspected twice");
        } else {
            if (a.hazardous != truth) throw DataError("logged replacement of '" + a.parcel_id + "' disagrees with the truth");
            if (!replaced.insert(a.parcel_id).second) throw DataError("'" + a.parcel_id + "' replaced twice");
            ledger.record_replacement(costs, a.hazardous);
        }
    }
    return ledger;
}

Summary summarize(std::span<const Action> actions, const CostSchedule& costs,
                  const std::optional<Truncation>& truncation) {
    Summary s;
    s.truncation = truncation;
    for (const auto& a : actions) {
        if (a.kind == ActionKind::Inspection) {
            if (truncation && s.ledger.n_h >= truncation->n_hvi) {
                s.truncated = true;
                continue;
            }
            s.ledger.record_inspection(costs);
        } else {
            if (truncation && s.ledger.replacement_visits() >= truncation->n_slr) {
                s.truncated = true;
                continue;
            }
            s.ledger.record_replacement(costs, a.hazardous);
        }
    }
    s.hit_rate = hit_rate(s.ledger);
    s.effective_cost = effective_cost(s.ledger);
    return s;
}

Summary summarize(const ExperimentLog& log, const ExperimentConfig& cfg) {
    const auto actions = log.actions();
    Summary s = summarize(actions, cfg.costs, cfg.truncate);
    s.epochs = log.epochs.size();
    s.stop = log.stop;
    return s;
}

}  // namespace remediate
