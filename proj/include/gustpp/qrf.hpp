#pragma once

// Quantile regression forest: variance-reduction regression trees grown on
// bootstrap samples, prediction via Meinshausen weights (average over trees
// of 1/leaf-size co-leaf membership), and permutation-based out-of-bag
// feature importance on the squared error of the leaf-mean prediction.

#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gustpp/dataset.hpp"
#include "gustpp/distributions.hpp"
#include "gustpp/gbm.hpp"
#include "gustpp/mathutil.hpp"

namespace gustpp {

struct QrfHyper {
    int n_trees = 1000;
    double mtry_ratio = 0.5;  // predictors considered at each split
    int min_node_size = 5;    // no leaf smaller than this
    int max_depth = 20;
};

struct QrfTree {
    // internal nodes: feature >= 0; leaves: feature = -1 with items range
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left, right;
    std::vector<int> items_begin, items_count;
    std::vector<int> leaf_items;  // bootstrap training indices, with multiplicity

    int locate(const std::vector<double>& x) const {
        int node = 0;
        while (feature[node] >= 0)
            node = (x[feature[node]] <= threshold[node]) ? left[node] : right[node];
        return node;
    }

    // feature index of the root split, -1 when the tree is a single leaf
    int root_feature() const { return feature.empty() ? -1 : feature[0]; }
};

struct Forest {
    QrfHyper hyper;
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> x;  // row-major training features
    std::vector<double> y;
    std::vector<QrfTree> trees;
    std::vector<std::vector<int>> oob;  // per tree: indices not in the bootstrap
    std::uint64_t seed = 0;
};

namespace detail {

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<double>& y;
    const QrfHyper& hyper;
    int mtry;
    Rng& rng;
    QrfTree tree;

    int build(std::vector<int>& items, int begin, int count, int depth) {
        const int node = static_cast<int>(tree.feature.size());
        tree.feature.push_back(-1);
        tree.threshold.push_back(0.0);
        tree.left.push_back(-1);
        tree.right.push_back(-1);
        tree.items_begin.push_back(-1);
        tree.items_count.push_back(0);

        bool split_found = false;
        int best_feature = -1, best_pos = -1;
        double best_threshold = 0.0, best_score = kInf;
        if (depth < hyper.max_depth && count >= 2 * hyper.min_node_size) {
            const std::size_t p = x[0].size();
            // candidate features: random subset of size mtry
            std::vector<int> cand(p);
            std::iota(cand.begin(), cand.end(), 0);
            for (int i = 0; i < mtry; ++i) {
                const std::size_t j = i + rng.uniform_int(p - i);
                std::swap(cand[i], cand[j]);
            }
            cand.resize(mtry);
            std::sort(cand.begin(), cand.end());  // deterministic tie-break order

            std::vector<std::pair<double, int>> vals(count);
            for (int f : cand) {
                for (int i = 0; i < count; ++i) {
                    const int idx = items[begin + i];
                    vals[i] = {x[idx][f], idx};
                }
                std::sort(vals.begin(), vals.end());
                // prefix sums for variance reduction
                double left_sum = 0.0, total = 0.0;
                for (int i = 0; i < count; ++i) total += y[vals[i].second];
                for (int i = 0; i + 1 < count; ++i) {
                    left_sum += y[vals[i].second];
                    const int nl = i + 1, nr = count - nl;
                    if (nl < hyper.min_node_size || nr < hyper.min_node_size) continue;
                    if (vals[i].first == vals[i + 1].first) continue;  // no threshold here
                    const double right_sum = total - left_sum;
                    // minimizing SSE equals maximizing sum of squared means
                    const double score =
                        -(left_sum * left_sum / nl + right_sum * right_sum / nr);
                    const double thr = 0.5 * (vals[i].first + vals[i + 1].first);
                    if (score < best_score - 1e-12 ||
                        (std::abs(score - best_score) <= 1e-12 &&
                         (best_feature < 0 || f < best_feature ||
                          (f == best_feature && thr < best_threshold)))) {
                        best_score = score;
                        best_feature = f;
                        best_threshold = thr;
                        best_pos = nl;
                        split_found = true;
                    }
                }
            }
        }
        if (!split_found) {
            tree.items_begin[node] = static_cast<int>(tree.leaf_items.size());
            tree.items_count[node] = count;
            for (int i = 0; i < count; ++i) tree.leaf_items.push_back(items[begin + i]);
            return node;
        }
        // partition items by the chosen split
        std::vector<int> lhs, rhs;
        lhs.reserve(best_pos);
        rhs.reserve(count - best_pos);
        for (int i = 0; i < count; ++i) {
            const int idx = items[begin + i];
            (x[idx][best_feature] <= best_threshold ? lhs : rhs).push_back(idx);
        }
        std::copy(lhs.begin(), lhs.end(), items.begin() + begin);
        std::copy(rhs.begin(), rhs.end(), items.begin() + begin + lhs.size());
        tree.feature[node] = best_feature;
        tree.threshold[node] = best_threshold;
        const int l = build(items, begin, static_cast<int>(lhs.size()), depth + 1);
        tree.left[node] = l;
        const int r = build(items, begin + static_cast<int>(lhs.size()),
                            static_cast<int>(rhs.size()), depth + 1);
        tree.right[node] = r;
        return node;
    }
};

}  // namespace detail

inline Forest fit_qrf(const std::vector<std::string>& feature_names,
                      const std::vector<std::vector<double>>& rows,
                      const std::vector<double>& observations, const QrfHyper& hyper,
                      std::uint64_t rng_seed) {
    const std::size_t n = rows.size();
    if (n != observations.size()) throw std::invalid_argument("fit_qrf: size mismatch");
    if (static_cast<int>(n) < 2 * hyper.min_node_size)
        throw std::invalid_argument("fit_qrf: need at least " +
                                    std::to_string(2 * hyper.min_node_size) + " cases");
    const std::size_t p = feature_names.size();
    for (const auto& r : rows)
        if (r.size() != p) throw std::invalid_argument("fit_qrf: row width mismatch");

    Forest forest;
    forest.hyper = hyper;
    forest.feature_names = feature_names;
    forest.x = rows;
    forest.y = observations;
    forest.seed = rng_seed;
    const int mtry = std::max(1, static_cast<int>(std::ceil(hyper.mtry_ratio * static_cast<double>(p))));

    for (int t = 0; t < hyper.n_trees; ++t) {
        Rng rng(derive_seed(rng_seed, 0x7ee5u, static_cast<std::uint64_t>(t)));
        std::vector<int> boot(n);
        std::vector<bool> in_bag(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            boot[i] = static_cast<int>(rng.uniform_int(n));
            in_bag[static_cast<std::size_t>(boot[i])] = true;
        }
        detail::TreeBuilder builder{forest.x, forest.y, hyper, mtry, rng, {}};
        builder.build(boot, 0, static_cast<int>(n), 0);
        forest.trees.push_back(std::move(builder.tree));
        std::vector<int> oob;
        for (std::size_t i = 0; i < n; ++i)
            if (!in_bag[i]) oob.push_back(static_cast<int>(i));
        forest.oob.push_back(std::move(oob));
    }
    return forest;
}

// Meinshausen weights over training observations
inline std::vector<double> qrf_weights(const Forest& forest, const std::vector<double>& x_new) {
    std::vector<double> w(forest.y.size(), 0.0);
    for (const auto& tree : forest.trees) {
        const int leaf = tree.locate(x_new);
        const int count = tree.items_count[leaf];
        const double share = 1.0 / (static_cast<double>(count) * forest.trees.size());
        for (int i = 0; i < count; ++i)
            w[static_cast<std::size_t>(tree.leaf_items[tree.items_begin[leaf] + i])] += share;
    }
    return w;
}

// weighted empirical quantiles (lower generalized inverse) at the given levels
inline std::vector<double> qrf_quantiles(const Forest& forest, const std::vector<double>& x_new,
                                         const std::vector<double>& levels) {
    const auto w = qrf_weights(forest, x_new);
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return forest.y[a] < forest.y[b]; });
    std::vector<double> out(levels.size());
    std::size_t pos = 0;
    double cum = 0.0;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        if (li > 0 && levels[li] < levels[li - 1])
            throw std::invalid_argument("qrf_quantiles: levels must be non-decreasing");
        while (pos < order.size() && cum + w[order[pos]] < levels[li] - 1e-12) {
            cum += w[order[pos]];
            ++pos;
        }
        out[li] = forest.y[order[std::min(pos, order.size() - 1)]];
    }
    return out;
}

inline DiscreteForecast predict_qrf(const Forest& forest, const std::vector<double>& x_new) {
    const auto w = qrf_weights(forest, x_new);
    std::vector<double> atoms, weights;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) {
            atoms.push_back(forest.y[i]);
            weights.push_back(w[i]);
        }
    return DiscreteForecast(atoms, weights);
}

// out-of-bag permutation importance on the squared error of the per-tree
// leaf-mean prediction, averaged over trees
struct QrfImportanceEntry {
    std::string feature;
    double importance;  // mean MSE increase over trees
    double std_error;   // Monte-Carlo standard error of that mean
};

inline std::vector<QrfImportanceEntry> qrf_oob_importance(const Forest& forest) {
    const std::size_t p = forest.feature_names.size();
    std::vector<double> importance(p, 0.0), importance_sq(p, 0.0);
    std::vector<double> leaf_mean;
    int trees_used = 0;
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& tree = forest.trees[t];
        const auto& oob = forest.oob[t];
        if (oob.empty()) continue;
        ++trees_used;
        leaf_mean.assign(tree.feature.size(), 0.0);
        for (std::size_t node = 0; node < tree.feature.size(); ++node) {
            if (tree.feature[node] >= 0) continue;
            double s = 0.0;
            for (int i = 0; i < tree.items_count[node]; ++i)
                s += forest.y[static_cast<std::size_t>(
                    tree.leaf_items[tree.items_begin[node] + i])];
            leaf_mean[node] = s / tree.items_count[node];
        }
        double base_mse = 0.0;
        for (int idx : oob) {
            const double e = leaf_mean[tree.locate(forest.x[idx])] - forest.y[idx];
            base_mse += e * e;
        }
        base_mse /= static_cast<double>(oob.size());

        Rng rng(derive_seed(forest.seed, 0x00bu, static_cast<std::uint64_t>(t)));
        std::vector<int> perm(oob.size());
        for (std::size_t f = 0; f < p; ++f) {
            std::iota(perm.begin(), perm.end(), 0);
            rng.shuffle(perm);
            double mse = 0.0;
            std::vector<double> row;
            for (std::size_t i = 0; i < oob.size(); ++i) {
                row = forest.x[oob[i]];
                row[f] = forest.x[oob[static_cast<std::size_t>(perm[i])]][f];
                const double e = leaf_mean[tree.locate(row)] - forest.y[oob[i]];
                mse += e * e;
            }
            mse /= static_cast<double>(oob.size());
            importance[f] += mse - base_mse;
            importance_sq[f] += (mse - base_mse) * (mse - base_mse);
        }
    }
    std::vector<QrfImportanceEntry> out;
    const double k = static_cast<double>(std::max(trees_used, 1));
    for (std::size_t f = 0; f < p; ++f) {
        const double mean = importance[f] / k;
        const double var = std::max(0.0, importance_sq[f] / k - mean * mean);
        out.push_back({forest.feature_names[f], mean, std::sqrt(var / k)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: JSON-lines, header line + one line per tree
// ---------------------------------------------------------------------------
inline void write_forest_jsonl(std::ostream& out, const Forest& forest) {
    json header{{"method", "qrf"},
                {"feature_names", forest.feature_names},
                {"y", forest.y},
                {"seed", forest.seed},
                {"n_trees", forest.hyper.n_trees},
                {"mtry_ratio", forest.hyper.mtry_ratio},
                {"min_node_size", forest.hyper.min_node_size},
                {"max_depth", forest.hyper.max_depth}};
    out << header.dump() << "\n";
    for (const auto& t : forest.trees) {
        json jt{{"feature", t.feature},     {"threshold", t.threshold},
                {"left", t.left},           {"right", t.right},
                {"items_begin", t.items_begin}, {"items_count", t.items_count},
                {"leaf_items", t.leaf_items}};
        out << jt.dump() << "\n";
    }
}

inline Forest read_forest_jsonl(std::istream& in, const std::vector<std::vector<double>>& rows) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_forest_jsonl: empty stream");
    const json header = json::parse(line);
    Forest forest;
    forest.feature_names = header.at("feature_names").get<std::vector<std::string>>();
    forest.y = header.at("y").get<std::vector<double>>();
    forest.seed = header.value("seed", 0ULL);
    forest.hyper.n_trees = header.value("n_trees", 0);
    forest.hyper.mtry_ratio = header.value("mtry_ratio", 0.5);
    forest.hyper.min_node_size = header.value("min_node_size", 5);
    forest.hyper.max_depth = header.value("max_depth", 20);
    forest.x = rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json jt = json::parse(line);
        QrfTree t;
        t.feature = jt.at("feature").get<std::vector<int>>();
        t.threshold = jt.at("threshold").get<std::vector<double>>();
        t.left = jt.at("left").get<std::vector<int>>();
        t.right = jt.at("right").get<std::vector<int>>();
        t.items_begin = jt.at("items_begin").get<std::vector<int>>();
        t.items_count = jt.at("items_count").get<std::vector<int>>();
        t.leaf_items = jt.at("leaf_items").get<std::vector<int>>();
        forest.trees.push_back(std::move(t));
    }
    return forest;
}

// ---------------------------------------------------------------------------
// Local per-(station, lead) model; spatially constant predictors are dropped
// ---------------------------------------------------------------------------
inline const std::vector<std::string>& qrf_feature_names() {
    static const std::vector<std::string> names = {"vmax_mean", "vmax_sd",  "wind_u",
                                                   "temp",      "radiation", "yday_cos"};
    return names;
}

struct QrfModel {
    std::map<std::pair<int, int>, Forest> forests;

    const Forest& at(int station, int lead) const {
        const auto it = forests.find({station, lead});
        if (it == forests.end())
            throw std::out_of_range("QrfModel: no forest for station " + std::to_string(station) +
                                    ", lead " + std::to_string(lead));
        return it->second;
    }

    DiscreteForecast predict(const ForecastCase& c) const {
        const Forest& f = at(c.station_id, c.lead_time_h);
        return predict_qrf(f, qrf_feature_row(c));
    }

    static std::vector<double> qrf_feature_row(const ForecastCase& c) {
        const auto feats = ml_features(c);
        std::vector<double> row;
        for (const auto& name : qrf_feature_names()) row.push_back(feats.at(name));
        return row;
    }
};

inline QrfModel fit_qrf_model(const std::vector<ForecastCase>& train, const QrfHyper& hyper,
                              std::uint64_t seed) {
    QrfModel model;
    for (const auto& [key, group] : group_by_station_lead(train)) {
        std::vector<std::vector<double>> rows;
        std::vector<double> y;
        for (const auto& c : group) {
            if (!c.observation) continue;
            rows.push_back(QrfModel::qrf_feature_row(c));
            y.push_back(*c.observation);
        }
        model.forests[key] = fit_qrf(qrf_feature_names(), rows, y, hyper,
                                     derive_seed(seed, static_cast<std::uint64_t>(key.first),
                                                 static_cast<std::uint64_t>(key.second)));
    }
    return model;
}

}  // namespace gustpp
