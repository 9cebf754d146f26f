#include "remediate/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "remediate/csv.hpp"
#include "remediate/error.hpp"

namespace remediate {

namespace {

using nlohmann::json;

bool is_count(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads optional keys from one JSON object and rejects anything it was not asked for.
class Reader {
public:
    Reader(const json& j, std::string context) : j_(j), ctx_(std::move(context)) {
        if (!j.is_object()) throw ConfigError(ctx_ + " must be a JSON object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const char* key, double& out) {
        if (auto* v = child(key)) {
            if (!v->is_number()) fail(key, "a number");
            out = v->get<double>();
        }
    }
    void get(const char* key, int& out) {
        if (auto* v = child(key)) {
            if (!v->is_number_integer()) fail(key, "an integer");
            out = v->get<int>();
        }
    }
    void get(const char* key, std::size_t& out) {
        if (auto* v = child(key)) {
            if (!is_count(*v)) fail(key, "a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void get(const char* key, std::uint64_t& out, int /*seed tag*/) {
        if (auto* v = child(key)) {
            if (!is_count(*v)) fail(key, "a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void get(const char* key, bool& out) {
        if (auto* v = child(key)) {
            if (!v->is_boolean()) fail(key, "true or false");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (auto* v = child(key)) {
            if (!v->is_string()) fail(key, "a string");
            out = v->get<std::string>();
        }
    }

    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError(ctx_ + "." + key + " must be " + what);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + ctx_ + "." + it.key() + "'");
        }
    }

private:
    const json& j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = base / path;
    return path.lexically_normal();
}

Truncation parse_truncation_json(const json& v) {
    if (!v.is_array() || v.size() != 2 || !is_count(v[0]) || !is_count(v[1])) {
        throw ConfigError("truncate_visits must be [n_slr, n_hvi]");
    }
    return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

}  // namespace

nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

SyntheticCityConfig parse_synthetic_config(const nlohmann::json& j) {
    SyntheticCityConfig c;
    Reader r(j, "synthetic");
    r.get("n_parcels", c.n_parcels);
    r.get("prevalence", c.prevalence);
    r.get("n_precincts", c.n_precincts);
    r.get("precinct_effect_scale", c.precinct_effect_scale);
    if (auto* s = r.child("signal")) {
        Reader sr(*s, "synthetic.signal");
        sr.get("year", c.signal.year);
        sr.get("value", c.signal.value);
        sr.get("location", c.signal.location);
        sr.finish();
    }
    r.get("record_noise", c.record_noise);
    r.get("record_missing_rate", c.record_missing_rate);
    r.get("n_periods", c.n_periods);
    r.get("seed", c.seed, 0);
    r.finish();
    c.validate();
    return c;
}

nlohmann::json to_json(const SyntheticCityConfig& c) {
    return {{"n_parcels", c.n_parcels},
            {"prevalence", c.prevalence},
            {"n_precincts", c.n_precincts},
            {"precinct_effect_scale", c.precinct_effect_scale},
            {"signal", {{"year", c.signal.year}, {"value", c.signal.value}, {"location", c.signal.location}}},
            {"record_noise", c.record_noise},
            {"record_missing_rate", c.record_missing_rate},
            {"n_periods", c.n_periods},
            {"seed", c.seed}};
}

ModelConfig parse_model_config(const nlohmann::json& j) {
    ModelConfig c;
    Reader r(j, "model");
    std::string text;
    r.get("kind", text);
    if (!text.empty()) c.kind = parse_model_kind(text);
    text.clear();
    r.get("label_mode", text);
    if (!text.empty()) c.mode = parse_label_mode(text);
    if (auto* b = r.child("boost")) {
        Reader br(*b, "model.boost");
        br.get("n_rounds", c.boost.n_rounds);
        br.get("max_depth", c.boost.max_depth);
        br.get("learning_rate", c.boost.learning_rate);
        br.get("min_child_weight", c.boost.min_child_weight);
        br.get("l2_penalty", c.boost.l2_penalty);
        br.get("min_split_gain", c.boost.min_split_gain);
        br.get("max_bins", c.boost.max_bins);
        br.get("subsample", c.boost.subsample);
        br.get("seed", c.boost.seed, 0);
        br.finish();
    }
    if (auto* l = r.child("logistic")) {
        Reader lr(*l, "model.logistic");
        lr.get("l1_strength", c.logistic.l1_strength);
        lr.get("max_sweeps", c.logistic.max_sweeps);
        lr.get("tolerance", c.logistic.tolerance);
        lr.finish();
    }
    r.get("spatial", c.spatial);
    r.get("lambda", c.recalibration.lambda);
    r.get("importance_weights", c.importance_weights);
    if (auto* e = r.child("encoder")) {
        Reader er(*e, "model.encoder");
        er.get("include_precinct", c.encoder.include_precinct);
        er.get("include_record_label", c.encoder.include_record_label);
        er.get("include_private_inspection", c.encoder.include_private_inspection);
        er.finish();
    }
    r.finish();
    c.validate();
    return c;
}

nlohmann::json to_json(const ModelConfig& c) {
    const auto& b = c.boost;
    return {{"kind", to_string(c.kind)},
            {"label_mode", to_string(c.mode)},
            {"boost",
             {{"n_rounds", b.n_rounds},
              {"max_depth", b.max_depth},
              {"learning_rate", b.learning_rate},
              {"min_child_weight", b.min_child_weight},
              {"l2_penalty", b.l2_penalty},
              {"min_split_gain", b.min_split_gain},
              {"max_bins", b.max_bins},
              {"subsample", b.subsample},
              {"seed", b.seed}}},
            {"logistic",
             {{"l1_strength", c.logistic.l1_strength},
              {"max_sweeps", c.logistic.max_sweeps},
              {"tolerance", c.logistic.tolerance}}},
            {"spatial", c.spatial},
            {"lambda", c.recalibration.lambda},
            {"importance_weights", c.importance_weights},
            {"encoder",
             {{"include_precinct", c.encoder.include_precinct},
              {"include_record_label", c.encoder.include_record_label},
              {"include_private_inspection", c.encoder.include_private_inspection}}}};
}

CostSchedule parse_costs(const nlohmann::json& j) {
    CostSchedule c;
    Reader r(j, "costs");
    r.get("c_h", c.c_h);
    r.get("c_r_plus", c.c_r_plus);
    r.get("c_r_minus", c.c_r_minus);
    r.finish();
    c.validate();
    return c;
}

nlohmann::json to_json(const CostSchedule& c) {
    return {{"c_h", c.c_h}, {"c_r_plus", c.c_r_plus}, {"c_r_minus", c.c_r_minus}};
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig c;
    Reader r(j, "experiment");
    if (auto* b = r.child("budget")) {
        if (b->is_null()) c.budget = std::numeric_limits<double>::infinity();
        else if (b->is_number()) c.budget = b->get<double>();
        else r.fail("budget", "a number or null");
    }
    r.get("epochs", c.epochs);
    r.get("inspections_per_epoch", c.inspections_per_epoch);
    r.get("replacements_per_epoch", c.replacements_per_epoch);
    if (auto* costs = r.child("costs")) c.costs = parse_costs(*costs);
    r.get("policy", c.policy);
    if (auto* m = r.child("model")) c.model = parse_model_config(*m);
    r.get("hydrovac_failure_rate", c.hydrovac_failure_rate);
    r.get("seed", c.seed, 0);
    r.get("initial_labeled", c.initial_labeled);
    if (auto* s = r.child("stop_after_successes"); s && !s->is_null()) {
        if (!is_count(*s)) r.fail("stop_after_successes", "a non-negative integer or null");
        c.stop_after_successes = s->get<std::size_t>();
    }
    if (auto* t = r.child("truncate_visits"); t && !t->is_null()) c.truncate = parse_truncation_json(*t);
    r.get("replications", c.replications);
    r.get("threads", c.threads);
    r.get("track_pool_auroc", c.track_pool_auroc);
    r.finish();
    c.validate();
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
    json j = {{"budget", std::isfinite(c.budget) ? json(c.budget) : json(nullptr)},
              {"epochs", c.epochs},
              {"inspections_per_epoch", c.inspections_per_epoch},
              {"replacements_per_epoch", c.replacements_per_epoch},
              {"costs", to_json(c.costs)},
              {"policy", c.policy},
              {"model", to_json(c.model)},
              {"hydrovac_failure_rate", c.hydrovac_failure_rate},
              {"seed", c.seed},
              {"initial_labeled", c.initial_labeled},
              {"stop_after_successes", c.stop_after_successes ? json(*c.stop_after_successes) : json(nullptr)},
              {"truncate_visits", c.truncate ? json::array({c.truncate->n_slr, c.truncate->n_hvi}) : json(nullptr)},
              {"replications", c.replications},
              {"threads", c.threads},
              {"track_pool_auroc", c.track_pool_auroc}};
    return j;
}

Truncation parse_truncation(std::string_view text) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw ConfigError("--truncate-visits expects <n_slr>,<n_hvi>");
    auto to_count = [&](std::string_view part) {
        const auto v = csv::parse_double(part);
        if (!v || *v < 0.0 || *v != std::floor(*v)) {
            throw ConfigError("--truncate-visits expects non-negative integers, got '" + std::string(text) + "'");
        }
        return static_cast<std::size_t>(*v);
    };
    return {to_count(text.substr(0, comma)), to_count(text.substr(comma + 1))};
}

nlohmann::json DataSource::to_json() const {
    json j = json::object();
    if (synthetic) {
        j["synthetic"] = remediate::to_json(*synthetic);
        j["labeled_fraction"] = labeled_fraction;
    } else {
        j["parcels"] = parcels.generic_string();
        if (!observations.empty()) j["observations"] = observations.generic_string();
    }
    return j;
}

DataSource parse_data_source(const nlohmann::json& j, const std::filesystem::path& base) {
    DataSource d;
    Reader r(j, "data");
    if (auto* s = r.child("synthetic")) d.synthetic = parse_synthetic_config(*s);
    std::string parcels, observations;
    r.get("parcels", parcels);
    r.get("observations", observations);
    r.get("labeled_fraction", d.labeled_fraction);
    r.finish();
    if (d.synthetic && !parcels.empty()) throw ConfigError("data takes either 'synthetic' or 'parcels', not both");
    if (!d.synthetic && parcels.empty()) throw ConfigError("data needs 'synthetic' or 'parcels'");
    if (!(d.labeled_fraction >= 0.0 && d.labeled_fraction <= 1.0)) {
        throw ConfigError("data.labeled_fraction must lie in [0, 1]");
    }
    if (!parcels.empty()) d.parcels = resolve(base, parcels);
    if (!observations.empty()) d.observations = resolve(base, observations);
    return d;
}

EvaluateConfig parse_evaluate_config(const nlohmann::json& j, const std::filesystem::path& base) {
    EvaluateConfig c;
    Reader r(j, "evaluate");
    if (auto* d = r.child("data")) c.data = parse_data_source(*d, base);
    else throw ConfigError("evaluate config needs a 'data' section");
    if (auto* m = r.child("model")) c.model = parse_model_config(*m);
    r.get("holdout_fraction", c.holdout_fraction);
    r.get("top_fraction", c.top_fraction);
    r.get("reliability_bins", c.reliability_bins);
    if (auto* l = r.child("learning_curve")) {
        Reader lr(*l, "evaluate.learning_curve");
        if (auto* f = lr.child("fractions")) {
            if (!f->is_array()) lr.fail("fractions", "an array of numbers");
            c.learning.fractions.clear();
            for (const auto& v : *f) {
                if (!v.is_number()) lr.fail("fractions", "an array of numbers");
                c.learning.fractions.push_back(v.get<double>());
            }
        }
        lr.get("replications", c.learning.replications);
        lr.finish();
    }
    r.get("temporal_period", c.temporal_period);
    if (auto* p = r.child("prevalence")) {
        if (p->is_boolean()) {
            c.prevalence = p->get<bool>();
        } else {
            Reader pr(*p, "evaluate.prevalence");
            pr.get("n_bootstrap", c.prevalence_cfg.n_bootstrap);
            pr.get("confidence", c.prevalence_cfg.confidence);
            pr.get("stratified", c.prevalence_cfg.stratified);
            pr.get("predictive", c.prevalence_cfg.predictive);
            pr.finish();
        }
    }
    std::size_t threads = 1;
    r.get("threads", threads);
    r.get("seed", c.seed, 0);
    r.finish();
    c.learning.holdout_fraction = c.holdout_fraction;
    c.learning.threads = threads;
    c.prevalence_cfg.threads = threads;
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must lie in (0, 1)");
    if (!(c.top_fraction >= 0.0 && c.top_fraction <= 1.0)) throw ConfigError("top_fraction must lie in [0, 1]");
    if (c.reliability_bins == 0) throw ConfigError("reliability_bins must be >= 1");
    if (c.temporal_period < 1) throw ConfigError("temporal_period must be >= 1");
    if (c.prevalence) c.prevalence_cfg.validate();
    reseed(c, c.seed);
    return c;
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base, std::string_view command) {
    RunConfig c;
    c.environment = command == "backtest" ? "backtest" : "generative";
    c.baseline = default_baseline();
    Reader r(j, std::string(command));
    if (auto* d = r.child("data")) c.data = parse_data_source(*d, base);
    else throw ConfigError(std::string(command) + " config needs a 'data' section");
    r.get("environment", c.environment);
    r.get("knn_k", c.knn_k);
    if (auto* e = r.child("experiment")) c.experiment = parse_experiment_config(*e);
    if (auto* b = r.child("baseline")) {
        if (b->is_null() || (b->is_boolean() && !b->get<bool>())) c.baseline.reset();
        else if (b->is_object()) c.baseline = *b;
        else if (!(b->is_boolean() && b->get<bool>())) r.fail("baseline", "an object, true, false or null");
    }
    r.get("seed", c.seed, 0);
    r.finish();

    if (command == "backtest" && c.environment != "backtest") {
        throw ConfigError("backtest runs need environment 'backtest'");
    }
    if (command == "simulate" && c.environment != "generative" && c.environment != "simulated") {
        throw ConfigError("simulate runs need environment 'generative' or 'simulated'");
    }
    if (c.environment == "generative" && !c.data.synthetic) {
        throw ConfigError("the generative environment needs a synthetic data source");
    }
    if (c.knn_k == 0) throw ConfigError("knn_k must be >= 1");
    if (c.baseline) (void)baseline_experiment(c);
    reseed(c, c.seed);
    return c;
}

ExperimentConfig baseline_experiment(const RunConfig& cfg) {
    json merged = to_json(cfg.experiment);
    if (cfg.baseline) merged.merge_patch(*cfg.baseline);
    return parse_experiment_config(merged);
}

nlohmann::json default_baseline() {
    return {{"policy", "greedy"}, {"inspections_per_epoch", 0}, {"model", {{"kind", "record"}}}};
}

void reseed(EvaluateConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    if (cfg.data.synthetic) cfg.data.synthetic->seed = seed;
    cfg.learning.seed = derive_seed(seed, 3);
    cfg.prevalence_cfg.seed = derive_seed(seed, 2);
}

void reseed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    if (cfg.data.synthetic) cfg.data.synthetic->seed = seed;
    cfg.experiment.seed = derive_seed(seed, 1);
}

}  // namespace remediate
