#include <algorithm>
#include <cmath>

#include "remediate/classifier.hpp"
#include "remediate/error.hpp"

namespace remediate {

namespace {

double log_loss_term(double eta, int y) {
    // log(1 + e^eta) - y * eta, computed without overflow
    return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))) - (y == 1 ? eta : 0.0);
}

double logistic(double eta) {
    eta = std::clamp(eta, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-eta));
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace

void LogisticConfig::validate() const {
    if (!(l1_strength >= 0.0)) throw ConfigError("l1_strength must be >= 0");
    if (max_sweeps < 1) throw ConfigError("max_sweeps must be >= 1");
    if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be >= 0");
}

double LogisticModel::predict_proba(std::span<const double> x) const {
    if (x.size() != coef_.size()) throw DataError("feature arity does not match the logistic model");
    double eta = intercept_;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (coef_[j] == 0.0 || is_missing(x[j])) continue;
        eta += coef_[j] * (x[j] - mean_[j]) / scale_[j];
    }
    return logistic(eta);
}

std::vector<double> LogisticModel::predict_proba(const FeatureMatrix& X) const {
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) out[r] = predict_proba(X.row(r));
    return out;
}

nlohmann::json LogisticModel::to_json() const {
    return {{"kind", "logistic_l1"}, {"intercept", intercept_}, {"coefficients", coef_},
            {"means", mean_},        {"scales", scale_},        {"feature_names", names_}};
}

LogisticModel fit_logistic_baseline(const TrainingSet& train, const LogisticConfig& cfg) {
    cfg.validate();
    train.validate();
    const std::size_t n = train.size();
    const std::size_t p = train.X.cols;
    const double lambda = cfg.l1_strength;

    double W = 0.0, wpos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        W += train.weight[i];
        if (train.y[i] == 1) wpos += train.weight[i];
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = train.weight[i] / W;

    LogisticModel m;
    m.names_ = train.X.names;
    m.coef_.assign(p, 0.0);
    m.mean_.assign(p, 0.0);
    m.scale_.assign(p, 1.0);

    // Weighted standardization; column-major standardized copy, missing -> 0.
    std::vector<double> Z(n * p, 0.0);
    std::vector<double> bound(p, 0.0);  // 1/4 * sum w z^2, the curvature bound
    for (std::size_t j = 0; j < p; ++j) {
        double sw = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = train.X.at(i, j);
            if (is_missing(v)) continue;
            sw += w[i];
            s1 += w[i] * v;
        }
        const double mean = sw > 0.0 ? s1 / sw : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = train.X.at(i, j);
            if (is_missing(v)) continue;
            s2 += w[i] * (v - mean) * (v - mean);
        }
        const double sd = sw > 0.0 ? std::sqrt(s2 / sw) : 0.0;
        m.mean_[j] = mean;
        m.scale_[j] = sd > 0.0 ? sd : 1.0;
        double b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = train.X.at(i, j);
            const double z = (is_missing(v) || sd == 0.0) ? 0.0 : (v - mean) / sd;
            Z[j * n + i] = z;
            b += w[i] * z * z;
        }
        bound[j] = 0.25 * b;
    }

    double prevalence = wpos / W;
    if (wpos == 0.0 || wpos == W) prevalence = (wpos + 0.5) / (W + 1.0);
    double intercept = std::log(prevalence / (1.0 - prevalence));
    std::vector<double> eta(n, intercept);

    auto objective = [&]() {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) f += w[i] * log_loss_term(eta[i], train.y[i]);
        for (double c : m.coef_) f += lambda * std::abs(c);
        return f;
    };
    // Change in the smooth loss when eta moves by delta * z (z == nullptr: intercept).
    auto loss_change = [&](const double* z, double delta) {
        double d = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double step = delta * (z ? z[i] : 1.0);
            if (step == 0.0) continue;
            d += w[i] * (log_loss_term(eta[i] + step, train.y[i]) - log_loss_term(eta[i], train.y[i]));
        }
        return d;
    };
    auto apply = [&](const double* z, double delta) {
        for (std::size_t i = 0; i < n; ++i) eta[i] += delta * (z ? z[i] : 1.0);
    };

    double current = objective();
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        // Intercept: Newton step, falling back to the 1/4 curvature bound.
        {
            double g = 0.0, h = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double pr = logistic(eta[i]);
                g += w[i] * (pr - train.y[i]);
                h += w[i] * pr * (1.0 - pr);
            }
            double delta = h > 1e-12 ? -g / h : 0.0;
            if (delta != 0.0 && loss_change(nullptr, delta) > 0.0) delta = -4.0 * g;
            if (delta != 0.0 && loss_change(nullptr, delta) <= 0.0) {
                apply(nullptr, delta);
                intercept += delta;
            }
        }
        for (std::size_t j = 0; j < p; ++j) {
            if (bound[j] == 0.0) continue;
            const double* z = Z.data() + j * n;
            double g = 0.0, h = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (z[i] == 0.0) continue;
                const double pr = logistic(eta[i]);
                g += w[i] * (pr - train.y[i]) * z[i];
                h += w[i] * pr * (1.0 - pr) * z[i] * z[i];
            }
            const double old = m.coef_[j];
            auto change = [&](double candidate) {
                return loss_change(z, candidate - old) + lambda * (std::abs(candidate) - std::abs(old));
            };
            double next = old;
            if (h > 1e-12) {
                const double newton = soft_threshold(old - g / h, lambda / h);
                if (newton != old && change(newton) <= 0.0) next = newton;
            }
            if (next == old) {
                const double mm = soft_threshold(old - g / bound[j], lambda / bound[j]);
                if (mm != old && change(mm) <= 0.0) next = mm;
            }
            if (next != old) {
                apply(z, next - old);
                m.coef_[j] = next;
            }
        }
        const double updated = objective();
        m.trace_.push_back(updated);
        const double improvement = current - updated;
        current = updated;
        if (improvement < cfg.tolerance * (1.0 + std::abs(current))) break;
    }
    m.intercept_ = intercept;
    return m;
}

}  // namespace remediate
