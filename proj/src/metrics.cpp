#include "remediate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "remediate/csv.hpp"
#include "remediate/error.hpp"
#include "remediate/parallel.hpp"
#include "remediate/rng.hpp"

namespace remediate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(std::size_t a, std::size_t b) {
    return b == 0 ? kNaN : static_cast<double>(a) / static_cast<double>(b);
}

// Type-7 quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted.front();
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

bool both_classes(const CityDataset& ds, std::span<const std::size_t> rows) {
    bool pos = false, neg = false;
    for (std::size_t r : rows) {
        if (ds.parcel(r).label()->hazardous) pos = true;
        else neg = true;
    }
    return pos && neg;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

ScoredSet::ScoredSet(std::vector<double> s, std::vector<int> y) : scores(std::move(s)), labels(std::move(y)) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    for (int l : labels)
        if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
}

std::size_t ScoredSet::positives() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

nlohmann::json CurveSeries::to_json() const {
    auto pts = nlohmann::json::array();
    for (const auto& p : points) pts.push_back({{x_name, p.x}, {y_name, p.y}, {"spread", p.spread}, {"n", p.n}});
    return {{"metric", metric}, {"points", pts}, {"meta", meta}, {"flags", flags}};
}

void CurveSeries::write_csv(std::ostream& out) const {
    csv::write_row(out, {x_name, y_name, "spread", "n"});
    for (const auto& p : points) {
        csv::write_row(out, {csv::format_double(p.x), csv::format_double(p.y), csv::format_double(p.spread),
                             std::to_string(p.n)});
    }
}

std::optional<double> auroc(const ScoredSet& s) {
    const std::size_t n = s.size();
    const std::size_t P = s.positives();
    const std::size_t N = n - P;
    if (P == 0 || N == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });

    // Sum of positive ranks with tied groups sharing the mean rank. Ranks are
    // doubled so the sum stays integral.
    double doubled_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
        const double doubled_rank = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (s.labels[order[k]] == 1) doubled_rank_sum += doubled_rank;
        i = j;
    }
    const double p = static_cast<double>(P);
    const double u2 = doubled_rank_sum - p * (p + 1.0);  // 2 * U
    return u2 / (2.0 * p * static_cast<double>(N));
}

std::optional<CurveSeries> roc_points(const ScoredSet& s) {
    const std::size_t n = s.size();
    const std::size_t P = s.positives();
    const std::size_t N = n - P;
    if (P == 0 || N == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });

    CurveSeries curve;
    curve.metric = "roc";
    curve.x_name = "fpr";
    curve.y_name = "tpr";
    curve.points.push_back({0.0, 0.0, 0.0, 0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && s.scores[order[j]] == s.scores[order[i]]) {
            if (s.labels[order[j]] == 1) ++tp;
            else ++fp;
            ++j;
        }
        curve.points.push_back({ratio(fp, N), ratio(tp, P), 0.0, j});
        i = j;
    }
    curve.meta = {{"positives", P}, {"negatives", N}};
    return curve;
}

double trapezoid_area(const CurveSeries& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.x - a.x) * (a.y + b.y) / 2.0;
    }
    return area;
}

double Confusion::accuracy() const { return ratio(tp + tn, total()); }
double Confusion::fpr() const { return ratio(fp, fp + tn); }
double Confusion::fnr() const { return ratio(fn, fn + tp); }

nlohmann::json Confusion::to_json() const {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    return {{"tp", tp},          {"fp", fp},          {"tn", tn},          {"fn", fn},
            {"accuracy", num(accuracy())}, {"fpr", num(fpr())}, {"fnr", num(fnr())}};
}

Confusion confusion_at_threshold(const ScoredSet& s, double threshold) {
    Confusion c;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool called = s.scores[i] >= threshold;
        if (s.labels[i] == 1) (called ? c.tp : c.fn)++;
        else (called ? c.fp : c.tn)++;
    }
    return c;
}

Confusion confusion_top_fraction(const ScoredSet& s, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("top fraction must lie in [0, 1]");
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(s.size())));
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    Confusion c;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const std::size_t i = order[rank];
        const bool called = rank < k;
        if (s.labels[i] == 1) (called ? c.tp : c.fn)++;
        else (called ? c.fp : c.tn)++;
    }
    return c;
}

CurveSeries reliability_curve(const ScoredSet& s, std::size_t n_bins) {
    if (n_bins == 0) throw ConfigError("reliability curve needs at least one bin");
    std::vector<double> sum_score(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0), hits(n_bins, 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double v = std::clamp(s.scores[i], 0.0, 1.0);
        const auto b = std::min(static_cast<std::size_t>(v * static_cast<double>(n_bins)), n_bins - 1);
        sum_score[b] += s.scores[i];
        ++count[b];
        hits[b] += static_cast<std::size_t>(s.labels[i]);
    }
    CurveSeries curve;
    curve.metric = "reliability";
    curve.x_name = "mean_predicted";
    curve.y_name = "observed_rate";
    curve.meta = {{"bins", n_bins}};
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (count[b] == 0) continue;
        curve.points.push_back({sum_score[b] / static_cast<double>(count[b]), ratio(hits[b], count[b]), 0.0, count[b]});
    }
    return curve;
}

ScoredSet score_rows(const HazardModel& model, const CityDataset& ds, const FeatureMatrix& features,
                     std::span<const std::size_t> rows) {
    ScoredSet s;
    s.scores = model.score(ds, features, rows);
    s.labels.reserve(rows.size());
    for (std::size_t r : rows) {
        const auto label = ds.parcel(r).label();
        if (!label) throw DataError("cannot evaluate on unlabeled parcel '" + ds.parcel(r).parcel_id + "'");
        s.labels.push_back(label->y());
    }
    return s;
}

CurveSeries learning_curve(const CityDataset& ds, const FeatureMatrix& features, const ModelConfig& model,
                           const LearningCurveConfig& cfg) {
    if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
        throw ConfigError("holdout fraction must lie in (0, 1)");
    }
    if (cfg.replications == 0) throw ConfigError("learning curve needs at least one replication");
    std::vector<double> fractions = cfg.fractions;
    for (double f : fractions)
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("learning curve fractions must lie in (0, 1]");
    std::sort(fractions.begin(), fractions.end());

    std::vector<std::size_t> labeled = labeled_rows(ds);
    Rng split_rng(derive_seed(cfg.seed, 0));
    shuffle(labeled, split_rng);
    const auto n_hold = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(labeled.size())));
    std::vector<std::size_t> holdout(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> pool(labeled.begin() + static_cast<std::ptrdiff_t>(n_hold), labeled.end());
    std::sort(holdout.begin(), holdout.end());
    std::sort(pool.begin(), pool.end());

    CurveSeries curve;
    curve.metric = "learning_curve";
    curve.x_name = "train_size";
    curve.y_name = "auroc";
    curve.meta = {{"holdout", holdout.size()}, {"pool", pool.size()}, {"replications", cfg.replications},
                  {"seed", cfg.seed}, {"model", to_string(model.kind)}};
    if (!both_classes(ds, holdout)) {
        curve.flags.push_back("holdout has a single class");
        return curve;
    }

    std::size_t last_size = 0;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        const auto m = static_cast<std::size_t>(std::llround(fractions[fi] * static_cast<double>(pool.size())));
        if (m == last_size || m == 0) continue;
        last_size = m;
        std::vector<std::optional<double>> results(cfg.replications);
        parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
            Rng rng(derive_seed(derive_seed(cfg.seed, fi + 1), r));
            std::vector<std::size_t> rows = pool;
            shuffle(rows, rng);
            rows.resize(m);
            std::sort(rows.begin(), rows.end());
            std::size_t pos = 0;
            for (std::size_t row : rows) pos += ds.parcel(row).label()->hazardous ? 1 : 0;
            if (pos < 2 || m - pos < 2) return;
            const auto fitted = HazardModel::fit({ds, features, rows}, model);
            results[r] = auroc(score_rows(fitted, ds, features, holdout));
        });
        std::vector<double> values;
        for (const auto& v : results)
            if (v) values.push_back(*v);
        if (values.size() < results.size()) {
            curve.flags.push_back("train size " + std::to_string(m) + ": " +
                                  std::to_string(results.size() - values.size()) +
                                  " replication(s) skipped, fewer than 2 examples of a class");
        }
        if (values.empty()) continue;
        curve.points.push_back({static_cast<double>(m), mean_of(values), sd_of(values), values.size()});
    }
    return curve;
}

CurveSeries temporal_learning_curve(const CityDataset& ds, const FeatureMatrix& features,
                                    const ModelConfig& model, int period) {
    if (period < 1) throw ConfigError("temporal period must be >= 1");
    const auto labeled = labeled_rows(ds);
    CurveSeries curve;
    curve.metric = "temporal_learning_curve";
    curve.x_name = "epoch";
    curve.y_name = "auroc";
    curve.meta = {{"period", period}, {"model", to_string(model.kind)}};
    if (labeled.empty()) return curve;

    int first = std::numeric_limits<int>::max(), last = std::numeric_limits<int>::min();
    for (std::size_t r : labeled) {
        first = std::min(first, ds.parcel(r).verified->epoch);
        last = std::max(last, ds.parcel(r).verified->epoch);
    }
    for (long boundary = static_cast<long>(first) + period; boundary <= last; boundary += period) {
        std::vector<std::size_t> past, future;
        for (std::size_t r : labeled) (ds.parcel(r).verified->epoch < boundary ? past : future).push_back(r);
        if (!both_classes(ds, future)) {
            curve.flags.push_back("epoch " + std::to_string(boundary) + ": future homes have a single class");
            continue;
        }
        const auto fitted = HazardModel::fit({ds, features, past}, model);
        const auto a = auroc(score_rows(fitted, ds, features, future));
        curve.points.push_back({static_cast<double>(boundary), *a, 0.0, past.size()});
    }
    return curve;
}

void PrevalenceConfig::validate() const {
    if (n_bootstrap < 2) throw ConfigError("prevalence interval needs n_bootstrap >= 2");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
}

nlohmann::json PrevalenceInterval::to_json() const {
    return {{"point", point},         {"low", low},         {"high", high},
            {"known_hazardous", known_hazardous}, {"unlabeled", unlabeled}, {"widened", widened}};
}

PrevalenceInterval prevalence_interval(const CityDataset& ds, const FeatureMatrix& features,
                                       const ModelConfig& model, const PrevalenceConfig& cfg) {
    cfg.validate();
    const auto labeled = labeled_rows(ds);
    if (labeled.empty()) throw DataError("prevalence interval needs at least one labeled home");
    std::vector<std::size_t> unlabeled;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!ds.parcel(i).labeled()) unlabeled.push_back(i);

    PrevalenceInterval out;
    out.unlabeled = unlabeled.size();
    for (std::size_t r : labeled) out.known_hazardous += ds.parcel(r).label()->hazardous ? 1 : 0;
    const double known = static_cast<double>(out.known_hazardous);
    if (unlabeled.empty()) {
        out.point = out.low = out.high = known;
        return out;
    }

    auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
    const auto full = HazardModel::fit({ds, features, labeled}, model);
    out.point = known + sum(full.score(ds, features, unlabeled));

    // Resampling groups: the whole labeled set, or one group per precinct.
    std::vector<std::vector<std::size_t>> groups;
    if (cfg.stratified) {
        std::map<std::string, std::vector<std::size_t>> by_precinct;
        for (std::size_t r : labeled) by_precinct[ds.parcel(r).precinct].push_back(r);
        for (auto& [_, rows] : by_precinct) groups.push_back(std::move(rows));
    } else {
        groups.push_back(labeled);
    }

    std::vector<double> totals(cfg.n_bootstrap);
    parallel_for(cfg.n_bootstrap, cfg.threads, [&](std::size_t b) {
        Rng rng(derive_seed(cfg.seed, b));
        std::vector<std::size_t> rows;
        rows.reserve(labeled.size());
        for (const auto& g : groups)
            for (std::size_t i = 0; i < g.size(); ++i) rows.push_back(g[static_cast<std::size_t>(rng.below(g.size()))]);
        std::sort(rows.begin(), rows.end());
        const auto fitted = HazardModel::fit({ds, features, rows}, model);
        const auto p = fitted.score(ds, features, unlabeled);
        double total = known;
        if (cfg.predictive) {
            for (double q : p) total += rng.bernoulli(q) ? 1.0 : 0.0;
        } else {
            total += sum(p);
        }
        totals[b] = total;
    });
    std::sort(totals.begin(), totals.end());
    const double tail = (1.0 - cfg.confidence) / 2.0;
    out.low = quantile(totals, tail);
    out.high = quantile(totals, 1.0 - tail);
    if (out.low > out.point) {
        out.low = out.point;
        out.widened = true;
    }
    if (out.high < out.point) {
        out.high = out.point;
        out.widened = true;
    }
    return out;
}

}  // namespace remediate
