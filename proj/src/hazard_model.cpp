#include "remediate/hazard_model.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "remediate/error.hpp"

namespace remediate {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

enum class Target { Combined, Public, Private };

int target_label(const VerifiedLine& v, Target t) {
    switch (t) {
        case Target::Public: return is_hazardous(v.public_material) ? 1 : 0;
        case Target::Private: return is_hazardous(v.private_material) ? 1 : 0;
        case Target::Combined: break;
    }
    return v.label().y();
}

TrainingSet training_set(const TrainingView& view, Target target, bool use_weights) {
    TrainingSet ts;
    ts.X = view.features.select_rows(view.rows);
    ts.y.reserve(view.rows.size());
    ts.weight.reserve(view.rows.size());
    for (std::size_t i = 0; i < view.rows.size(); ++i) {
        const auto& p = view.city.parcel(view.rows[i]);
        if (!p.verified) throw DataError("training row '" + p.parcel_id + "' has no label");
        ts.y.push_back(target_label(*p.verified, target));
        ts.weight.push_back(use_weights && !view.weights.empty() ? view.weights[i] : 1.0);
    }
    return ts;
}

bool has_one_class(const TrainingSet& ts) {
    return std::all_of(ts.y.begin(), ts.y.end(), [&](int y) { return y == ts.y.front(); });
}

}  // namespace

ModelKind parse_model_kind(std::string_view text) {
    const std::string t = lower(text);
    if (t == "boosted") return ModelKind::Boosted;
    if (t == "logistic") return ModelKind::Logistic;
    if (t == "record") return ModelKind::Record;
    if (t == "constant") return ModelKind::Constant;
    if (t == "oracle") return ModelKind::Oracle;
    throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

std::string_view to_string(ModelKind k) noexcept {
    switch (k) {
        case ModelKind::Boosted: return "boosted";
        case ModelKind::Logistic: return "logistic";
        case ModelKind::Record: return "record";
        case ModelKind::Constant: return "constant";
        case ModelKind::Oracle: return "oracle";
    }
    return "boosted";
}

LabelMode parse_label_mode(std::string_view text) {
    const std::string t = lower(text);
    if (t == "single") return LabelMode::Single;
    if (t == "per_portion") return LabelMode::PerPortion;
    throw ConfigError("unknown label mode '" + std::string(text) + "'");
}

std::string_view to_string(LabelMode m) noexcept {
    return m == LabelMode::Single ? "single" : "per_portion";
}

void ModelConfig::validate() const {
    boost.validate();
    logistic.validate();
    recalibration.validate();
}

double record_rule_score(std::string_view record_label) {
    const std::string r = lower(record_label);
    if (r.find("lead") != std::string::npos || r.find("galv") != std::string::npos) return 0.9;
    if (r.empty() || r == "unknown") return 0.5;
    return 0.1;
}

std::vector<std::size_t> labeled_rows(const CityDataset& city) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < city.size(); ++i)
        if (city.parcel(i).labeled()) rows.push_back(i);
    return rows;
}

HazardModel HazardModel::fit(const TrainingView& view, const ModelConfig& cfg) {
    cfg.validate();
    if (view.features.rows != view.city.size()) {
        throw DataError("feature matrix does not match the dataset");
    }
    if (!view.weights.empty() && view.weights.size() != view.rows.size()) {
        throw DataError("training weights do not match the training rows");
    }
    HazardModel m;
    m.cfg_ = cfg;
    m.n_train_ = view.rows.size();

    switch (cfg.kind) {
        case ModelKind::Record:
        case ModelKind::Constant:
            return m;
        case ModelKind::Oracle:
            if (view.truth.size() != view.city.size()) {
                throw ConfigError("the oracle model needs the environment truth");
            }
            m.truth_.reserve(view.truth.size());
            for (const auto& t : view.truth) m.truth_.push_back(static_cast<signed char>(t.label().y()));
            m.trained_ = true;
            return m;
        case ModelKind::Boosted:
        case ModelKind::Logistic:
            break;
    }
    if (view.rows.empty()) return m;

    std::vector<Target> targets;
    if (cfg.mode == LabelMode::Single) targets = {Target::Combined};
    else targets = {Target::Public, Target::Private};

    for (Target t : targets) {
        const TrainingSet ts = training_set(view, t, cfg.importance_weights);
        if (has_one_class(ts)) m.single_class_ = true;
        if (cfg.kind == ModelKind::Boosted) m.boosted_.push_back(fit_boosted(ts, cfg.boost));
        else m.logistic_.push_back(fit_logistic_baseline(ts, cfg.logistic));
    }
    m.trained_ = true;

    if (cfg.spatial) {
        std::map<std::string, PrecinctStats> by_precinct;
        for (std::size_t r : view.rows) {
            const auto& p = view.city.parcel(r);
            auto& s = by_precinct[p.precinct];
            s.precinct = p.precinct;
            ++s.n;
            s.k += static_cast<std::size_t>(p.verified->label().y());
        }
        if (by_precinct.size() >= 2) {
            std::vector<PrecinctStats> stats;
            for (auto& [_, s] : by_precinct) stats.push_back(s);
            m.pooling_ = fit_hyperparameters(stats);
        }
    }
    return m;
}

const HazardClassifier* HazardModel::boosted() const noexcept {
    return boosted_.empty() ? nullptr : &boosted_.front();
}

std::vector<double> HazardModel::raw_scores(const CityDataset& city, const FeatureMatrix& features,
                                            std::span<const std::size_t> rows) const {
    std::vector<double> out(rows.size(), prior_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        switch (cfg_.kind) {
            case ModelKind::Record:
                out[i] = record_rule_score(city.parcel(r).record_label);
                break;
            case ModelKind::Constant:
                break;
            case ModelKind::Oracle:
                out[i] = truth_.at(r) ? 1.0 : 0.0;
                break;
            case ModelKind::Boosted:
            case ModelKind::Logistic: {
                if (!trained_) break;
                const auto x = features.row(r);
                auto predict = [&](std::size_t k) {
                    return cfg_.kind == ModelKind::Boosted ? boosted_[k].predict_proba(x)
                                                           : logistic_[k].predict_proba(x);
                };
                const std::size_t n = std::max(boosted_.size(), logistic_.size());
                if (n == 1) {
                    out[i] = predict(0);
                } else {
                    double safe = 1.0;
                    for (std::size_t k = 0; k < n; ++k) safe *= 1.0 - predict(k);
                    out[i] = 1.0 - safe;
                }
                break;
            }
        }
    }
    return out;
}

std::vector<double> HazardModel::score(const CityDataset& city, const FeatureMatrix& features,
                                       std::span<const std::size_t> rows, bool* clamped) const {
    auto out = raw_scores(city, features, rows);
    if (clamped) *clamped = false;
    if (!pooling_) return out;
    const double city_rate = pooling_->city_rate();
    std::map<std::string, double, std::less<>> rate_cache;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& precinct = city.parcel(rows[i]).precinct;
        auto it = rate_cache.find(precinct);
        if (it == rate_cache.end()) it = rate_cache.emplace(precinct, pooling_->rate_for(precinct)).first;
        const auto rc = recalibrate(out[i], it->second, city_rate, cfg_.recalibration);
        out[i] = rc.probability;
        if (clamped && rc.clamped) *clamped = true;
    }
    return out;
}

nlohmann::json HazardModel::to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(cfg_.kind);
    j["label_mode"] = to_string(cfg_.mode);
    j["n_train"] = n_train_;
    j["trained"] = trained_;
    j["single_class"] = single_class_;
    auto classifiers = nlohmann::json::array();
    for (const auto& b : boosted_) classifiers.push_back(b.to_json());
    for (const auto& l : logistic_) classifiers.push_back(l.to_json());
    j["classifiers"] = classifiers;
    if (pooling_) {
        j["spatial"] = pooling_->to_json();
        j["spatial"]["lambda"] = cfg_.recalibration.lambda;
    } else {
        j["spatial"] = nullptr;
    }
    return j;
}

}  // namespace remediate
