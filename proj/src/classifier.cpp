#include "remediate/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "remediate/error.hpp"
#include "remediate/rng.hpp"

namespace remediate {

namespace {

constexpr double kMarginLimit = 30.0;
constexpr std::uint8_t kMissingBin = 255;

double sigmoid(double z) {
    z = std::clamp(z, -kMarginLimit, kMarginLimit);
    return 1.0 / (1.0 + std::exp(-z));
}

// Quantile cut points per feature; a value v falls in bin upper_bound(cuts, v).
struct BinnedData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::vector<double>> cuts;
    std::vector<std::uint8_t> bins;  // column-major

    std::uint8_t bin(std::size_t r, std::size_t c) const { return bins[c * rows + r]; }
    std::size_t n_bins(std::size_t c) const { return cuts[c].size() + 1; }
};

std::vector<double> cut_points(std::vector<std::pair<double, double>>& values, int max_bins) {
    std::sort(values.begin(), values.end());
    std::vector<double> distinct;
    std::vector<double> weight;
    for (const auto& [v, w] : values) {
        if (!distinct.empty() && distinct.back() == v) {
            weight.back() += w;
        } else {
            distinct.push_back(v);
            weight.push_back(w);
        }
    }
    auto midpoint = [&](std::size_t i) {
        const double a = distinct[i], b = distinct[i + 1];
        const double m = a + (b - a) / 2.0;
        return a < m ? m : b;
    };
    std::vector<double> cuts;
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(midpoint(i));
        return cuts;
    }
    // Weighted quantiles: a duplicated row and a doubled weight give the same cuts.
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double cumulative = 0.0;
    int next = 1;
    for (std::size_t i = 0; i + 1 < distinct.size() && next < max_bins; ++i) {
        cumulative += weight[i];
        if (cumulative >= total * next / max_bins) {
            cuts.push_back(midpoint(i));
            while (next < max_bins && cumulative >= total * next / max_bins) ++next;
        }
    }
    return cuts;
}

BinnedData bin_features(const TrainingSet& data, int max_bins) {
    BinnedData b;
    b.rows = data.X.rows;
    b.cols = data.X.cols;
    b.cuts.resize(b.cols);
    b.bins.assign(b.rows * b.cols, kMissingBin);
    std::vector<std::pair<double, double>> values;
    for (std::size_t c = 0; c < b.cols; ++c) {
        values.clear();
        for (std::size_t r = 0; r < b.rows; ++r) {
            const double v = data.X.at(r, c);
            if (!is_missing(v)) values.emplace_back(v, data.weight[r]);
        }
        b.cuts[c] = cut_points(values, max_bins);
        const auto& cuts = b.cuts[c];
        for (std::size_t r = 0; r < b.rows; ++r) {
            const double v = data.X.at(r, c);
            if (is_missing(v)) continue;
            b.bins[c * b.rows + r] = static_cast<std::uint8_t>(
                std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
        }
    }
    return b;
}

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    std::size_t bin = 0;  // bins <= bin go left; SIZE_MAX for the missing-vs-rest split
    bool missing_left = true;
};

class TreeBuilder {
public:
    TreeBuilder(const BinnedData& binned, const BoostConfig& cfg, std::span<const double> grad,
                std::span<const double> hess)
        : binned_(binned), cfg_(cfg), grad_(grad), hess_(hess) {
        offsets_.resize(binned.cols + 1, 0);
        for (std::size_t c = 0; c < binned.cols; ++c) offsets_[c + 1] = offsets_[c] + binned.n_bins(c);
        hist_g_.resize(offsets_.back());
        hist_h_.resize(offsets_.back());
        hist_n_.resize(offsets_.back());
        miss_g_.resize(binned.cols);
        miss_h_.resize(binned.cols);
        miss_n_.resize(binned.cols);
    }

    RegressionTree build(std::vector<std::size_t>& rows) {
        RegressionTree tree;
        tree.nodes.emplace_back();
        grow(tree, 0, rows, 0, rows.size(), 0);
        return tree;
    }

private:
    double score(double g, double h) const {
        const double denom = h + cfg_.l2_penalty;
        return denom > 0.0 ? g * g / denom : 0.0;
    }

    double leaf_value(double g, double h) const {
        const double denom = h + cfg_.l2_penalty;
        return denom > 0.0 ? -g / denom * cfg_.learning_rate : 0.0;
    }

    void grow(RegressionTree& tree, std::size_t node, std::vector<std::size_t>& rows,
              std::size_t begin, std::size_t end, int depth) {
        double G = 0.0, H = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            G += grad_[rows[i]];
            H += hess_[rows[i]];
        }
        tree.nodes[node].value = leaf_value(G, H);
        if (depth >= cfg_.max_depth || end - begin < 2) return;

        const SplitCandidate best = find_split(rows, begin, end, G, H);
        if (best.feature < 0) return;

        const auto f = static_cast<std::size_t>(best.feature);
        auto goes_left = [&](std::size_t r) {
            const std::uint8_t b = binned_.bin(r, f);
            if (b == kMissingBin) return best.missing_left;
            return best.bin == SIZE_MAX || b <= best.bin;
        };
        auto mid = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                         rows.begin() + static_cast<std::ptrdiff_t>(end), goes_left);
        const auto split = static_cast<std::size_t>(mid - rows.begin());

        TreeNode& n = tree.nodes[node];
        n.feature = best.feature;
        n.threshold = best.bin == SIZE_MAX ? std::numeric_limits<double>::max()
                                           : binned_.cuts[f][best.bin];
        n.missing_left = best.missing_left;
        n.left = static_cast<int>(tree.nodes.size());
        n.right = n.left + 1;
        const auto left = static_cast<std::size_t>(n.left);
        const auto right = static_cast<std::size_t>(n.right);
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        grow(tree, left, rows, begin, split, depth + 1);
        grow(tree, right, rows, split, end, depth + 1);
    }

    SplitCandidate find_split(const std::vector<std::size_t>& rows, std::size_t begin,
                              std::size_t end, double G, double H) {
        std::fill(hist_g_.begin(), hist_g_.end(), 0.0);
        std::fill(hist_h_.begin(), hist_h_.end(), 0.0);
        std::fill(hist_n_.begin(), hist_n_.end(), 0);
        std::fill(miss_g_.begin(), miss_g_.end(), 0.0);
        std::fill(miss_h_.begin(), miss_h_.end(), 0.0);
        std::fill(miss_n_.begin(), miss_n_.end(), 0);
        for (std::size_t c = 0; c < binned_.cols; ++c) {
            const std::uint8_t* col = binned_.bins.data() + c * binned_.rows;
            double* hg = hist_g_.data() + offsets_[c];
            double* hh = hist_h_.data() + offsets_[c];
            std::size_t* hn = hist_n_.data() + offsets_[c];
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t r = rows[i];
                const std::uint8_t b = col[r];
                if (b == kMissingBin) {
                    miss_g_[c] += grad_[r];
                    miss_h_[c] += hess_[r];
                    ++miss_n_[c];
                } else {
                    hg[b] += grad_[r];
                    hh[b] += hess_[r];
                    ++hn[b];
                }
            }
        }

        const std::size_t n_total = end - begin;
        const double parent = score(G, H);
        SplitCandidate best;
        best.gain = std::max(cfg_.min_split_gain, 0.0);
        auto consider = [&](double gl, double hl, std::size_t nl, double gr, double hr,
                            std::size_t nr, int f, std::size_t bin, bool missing_left) {
            if (nl == 0 || nr == 0) return;
            if (hl < cfg_.min_child_weight || hr < cfg_.min_child_weight) return;
            const double gain = score(gl, hl) + score(gr, hr) - parent;
            if (gain > best.gain) best = {gain, f, bin, missing_left};
        };

        for (std::size_t c = 0; c < binned_.cols; ++c) {
            const std::size_t nb = binned_.n_bins(c);
            const double gm = miss_g_[c], hm = miss_h_[c];
            const std::size_t nm = miss_n_[c];
            const double g_obs = G - gm, h_obs = H - hm;
            const std::size_t n_obs = n_total - nm;
            double gl = 0.0, hl = 0.0;
            std::size_t nl = 0;
            const int f = static_cast<int>(c);
            for (std::size_t b = 0; b + 1 < nb; ++b) {
                gl += hist_g_[offsets_[c] + b];
                hl += hist_h_[offsets_[c] + b];
                nl += hist_n_[offsets_[c] + b];
                if (nl == 0) continue;
                if (nl == n_obs) break;
                // Missing direction: left first, right only on strict improvement.
                consider(gl + gm, hl + hm, nl + nm, g_obs - gl, h_obs - hl, n_obs - nl, f, b, true);
                if (nm > 0) {
                    consider(gl, hl, nl, g_obs - gl + gm, h_obs - hl + hm, n_obs - nl + nm, f, b,
                             false);
                }
            }
            if (nm > 0 && n_obs > 0) {
                consider(g_obs, h_obs, n_obs, gm, hm, nm, f, SIZE_MAX, false);
            }
        }
        return best;
    }

    const BinnedData& binned_;
    const BoostConfig& cfg_;
    std::span<const double> grad_;
    std::span<const double> hess_;
    std::vector<std::size_t> offsets_;
    std::vector<double> hist_g_, hist_h_;
    std::vector<std::size_t> hist_n_;
    std::vector<double> miss_g_, miss_h_;
    std::vector<std::size_t> miss_n_;
};

}  // namespace

// ---------------------------------------------------------------------------

TrainingSet TrainingSet::from_examples(std::span<const TrainingExample> examples,
                                       std::vector<std::string> names) {
    TrainingSet t;
    const std::size_t cols = examples.empty() ? names.size() : examples.front().features.size();
    if (names.empty()) {
        for (std::size_t c = 0; c < cols; ++c) names.push_back("f" + std::to_string(c));
    }
    if (names.size() != cols) throw DataError("feature name count does not match example arity");
    t.X = FeatureMatrix(examples.size(), cols, std::move(names));
    for (std::size_t r = 0; r < examples.size(); ++r) {
        const auto& e = examples[r];
        if (e.features.size() != cols) throw DataError("training examples differ in arity");
        std::copy(e.features.begin(), e.features.end(), t.X.row(r).begin());
        t.y.push_back(e.y);
        t.weight.push_back(e.weight);
    }
    return t;
}

void TrainingSet::validate() const {
    if (y.empty()) throw DataError("training set is empty");
    if (X.rows != y.size() || weight.size() != y.size()) {
        throw DataError("training set columns have inconsistent lengths");
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 0 && y[i] != 1) throw DataError("labels must be 0 or 1");
        if (!(weight[i] > 0.0) || !std::isfinite(weight[i])) {
            throw DataError("example weights must be positive and finite");
        }
    }
}

void BoostConfig::validate() const {
    if (n_rounds < 0) throw ConfigError("n_rounds must be >= 0");
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("learning_rate must lie in (0, 1]");
    if (!(min_child_weight >= 0.0)) throw ConfigError("min_child_weight must be >= 0");
    if (!(l2_penalty >= 0.0)) throw ConfigError("l2_penalty must be >= 0");
    if (!(min_split_gain >= 0.0)) throw ConfigError("min_split_gain must be >= 0");
    if (max_bins < 2 || max_bins > 254) throw ConfigError("max_bins must lie in [2, 254]");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
}

std::size_t RegressionTree::leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        const double v = x[static_cast<std::size_t>(n.feature)];
        bool left;
        if (is_missing(v)) left = n.missing_left;
        else left = v < n.threshold;
        i = static_cast<std::size_t>(left ? n.left : n.right);
    }
    return i;
}

HazardClassifier::HazardClassifier(double base_score, std::vector<RegressionTree> trees,
                                   std::vector<std::string> feature_names, std::size_t arity)
    : base_score_(base_score), trees_(std::move(trees)), names_(std::move(feature_names)), arity_(arity) {}

double HazardClassifier::margin(std::span<const double> x) const {
    if (x.size() != arity_) {
        throw DataError("feature arity " + std::to_string(x.size()) + " does not match model arity " +
                        std::to_string(arity_));
    }
    double m = base_score_;
    for (const auto& t : trees_) m += t.predict(x);
    return m;
}

double HazardClassifier::predict_proba(std::span<const double> x) const { return sigmoid(margin(x)); }

std::vector<double> HazardClassifier::predict_proba(const FeatureMatrix& X) const {
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) out[r] = predict_proba(X.row(r));
    return out;
}

HazardClassifier HazardClassifier::truncated(std::size_t n_trees) const {
    HazardClassifier m = *this;
    if (n_trees < m.trees_.size()) m.trees_.resize(n_trees);
    return m;
}

nlohmann::json HazardClassifier::to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            nodes.push_back({n.feature, n.threshold, n.missing_left ? 1 : 0, n.left, n.right, n.value});
        }
        trees.push_back(std::move(nodes));
    }
    return {{"kind", "boosted_trees"},
            {"base_score", base_score_},
            {"base_score_clamped", clamped_},
            {"arity", arity_},
            {"feature_names", names_},
            {"node_layout", {"feature", "threshold", "missing_left", "left", "right", "value"}},
            {"trees", std::move(trees)}};
}

HazardClassifier HazardClassifier::from_json(const nlohmann::json& j) {
    try {
        std::vector<RegressionTree> trees;
        for (const auto& t : j.at("trees")) {
            RegressionTree tree;
            for (const auto& n : t) {
                TreeNode node;
                node.feature = n.at(0).get<int>();
                node.threshold = n.at(1).get<double>();
                node.missing_left = n.at(2).get<int>() != 0;
                node.left = n.at(3).get<int>();
                node.right = n.at(4).get<int>();
                node.value = n.at(5).get<double>();
                tree.nodes.push_back(node);
            }
            trees.push_back(std::move(tree));
        }
        HazardClassifier m(j.at("base_score").get<double>(), std::move(trees),
                           j.at("feature_names").get<std::vector<std::string>>(),
                           j.at("arity").get<std::size_t>());
        m.clamped_ = j.value("base_score_clamped", false);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model json: ") + e.what());
    }
}

HazardClassifier fit_boosted(const TrainingSet& train, const BoostConfig& cfg) {
    cfg.validate();
    train.validate();
    const std::size_t n = train.size();

    double wsum = 0.0, wpos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        wsum += train.weight[i];
        if (train.y[i] == 1) wpos += train.weight[i];
    }
    HazardClassifier model;
    model.names_ = train.X.names;
    model.arity_ = train.X.cols;
    double prevalence = wpos / wsum;
    if (wpos == 0.0 || wpos == wsum) {
        prevalence = (wpos + 0.5) / (wsum + 1.0);
        model.clamped_ = true;
    }
    model.base_score_ = std::log(prevalence / (1.0 - prevalence));
    if (cfg.n_rounds == 0) return model;

    const BinnedData binned = bin_features(train, cfg.max_bins);
    std::vector<double> margin(n, model.base_score_);
    std::vector<double> grad(n), hess(n);
    std::vector<std::size_t> rows;
    rows.reserve(n);
    Rng rng(cfg.seed);

    TreeBuilder builder(binned, cfg, grad, hess);
    for (int round = 0; round < cfg.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            grad[i] = train.weight[i] * (p - train.y[i]);
            hess[i] = train.weight[i] * p * (1.0 - p);
        }
        rows.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (cfg.subsample >= 1.0 || rng.bernoulli(cfg.subsample)) rows.push_back(i);
        }
        if (rows.empty()) continue;
        RegressionTree tree = builder.build(rows);
        for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict(train.X.row(i));
        model.trees_.push_back(std::move(tree));
    }
    return model;
}

std::map<std::string, double> feature_importance(const HazardClassifier& model) {
    std::vector<std::size_t> counts(model.arity(), 0);
    std::size_t total = 0;
    for (const auto& t : model.trees()) {
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) continue;
            ++counts[static_cast<std::size_t>(n.feature)];
            ++total;
        }
    }
    std::map<std::string, double> out;
    if (total == 0) return out;
    for (std::size_t f = 0; f < counts.size(); ++f) {
        if (counts[f] == 0) continue;
        const std::string name =
            f < model.feature_names().size() ? model.feature_names()[f] : "f" + std::to_string(f);
        out[name] = static_cast<double>(counts[f]) / static_cast<double>(total);
    }
    return out;
}

double weighted_log_loss(std::span<const double> probabilities, const TrainingSet& data) {
    double loss = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double p = std::clamp(probabilities[i], 1e-15, 1.0 - 1e-15);
        loss -= data.weight[i] * (data.y[i] == 1 ? std::log(p) : std::log1p(-p));
        wsum += data.weight[i];
    }
    return loss / wsum;
}

}  // namespace remediate
