#pragma once

// Isotonic distributional regression under the empirical stochastic order
// (componentwise order of sorted member vectors), with subsample aggregation.
//
// For each threshold t in the grid of unique training observations, the
// conditional CDF values solve the isotonic least-squares problem
//     min sum_j w_j (theta_j - 1{y_j <= t})^2
// subject to theta antitonic w.r.t. the partial order (larger covariates get
// smaller CDF values). The solver is the exact recursive partitioning scheme:
// each block either is a level set (no upper set of the induced suborder has
// mean above the block mean) or splits along a maximum-weight closure found
// by min-cut, and the recursion yields the exact projection.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "gustpp/dataset.hpp"
#include "gustpp/distributions.hpp"
#include "gustpp/mathutil.hpp"

namespace gustpp {

enum class SdOrder { Less, Greater, Equal, Incomparable };

// x <= x' in the empirical stochastic order iff sorted(x)_i <= sorted(x')_i
// for every i. Inputs must already be sorted.
inline SdOrder sd_compare_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sd_compare: length mismatch");
    bool le = true, ge = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        le &= (a[i] <= b[i]);
        ge &= (a[i] >= b[i]);
        if (!le && !ge) return SdOrder::Incomparable;
    }
    if (le && ge) return SdOrder::Equal;
    return le ? SdOrder::Less : SdOrder::Greater;
}

inline SdOrder sd_compare(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return sd_compare_sorted(a, b);
}

// ---------------------------------------------------------------------------
// Exact isotonic regression on a DAG (theta_u <= theta_v for each edge u->v)
// ---------------------------------------------------------------------------
namespace detail {

// Dinic max-flow on a small dense-ish graph, rebuilt per solve
class MaxFlow {
  public:
    explicit MaxFlow(int n) : head_(n, -1), level_(n), iter_(n) {}

    void add_edge(int from, int to, double cap) {
        edges_.push_back({to, head_[from], cap});
        head_[from] = static_cast<int>(edges_.size()) - 1;
        edges_.push_back({from, head_[to], 0.0});
        head_[to] = static_cast<int>(edges_.size()) - 1;
    }

    double solve(int s, int t) {
        double flow = 0.0;
        while (bfs(s, t)) {
            iter_ = head_;
            double f;
            while ((f = dfs(s, t, kInf)) > 0.0) flow += f;
        }
        return flow;
    }

    // after solve: nodes reachable from s in the residual graph
    std::vector<bool> min_cut_side(int s) const {
        std::vector<bool> vis(head_.size(), false);
        std::vector<int> stack{s};
        vis[s] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int e = head_[u]; e != -1; e = edges_[e].next) {
                if (edges_[e].cap > 1e-12 && !vis[edges_[e].to]) {
                    vis[edges_[e].to] = true;
                    stack.push_back(edges_[e].to);
                }
            }
        }
        return vis;
    }

  private:
    struct Edge {
        int to;
        int next;
        double cap;
    };
    std::vector<int> head_, level_, iter_;
    std::vector<Edge> edges_;

    bool bfs(int s, int t) {
        std::fill(level_.begin(), level_.end(), -1);
        std::vector<int> queue{s};
        level_[s] = 0;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int u = queue[qi];
            for (int e = head_[u]; e != -1; e = edges_[e].next)
                if (edges_[e].cap > 1e-12 && level_[edges_[e].to] < 0) {
                    level_[edges_[e].to] = level_[u] + 1;
                    queue.push_back(edges_[e].to);
                }
        }
        return level_[t] >= 0;
    }

    double dfs(int u, int t, double f) {
        if (u == t) return f;
        for (int& e = iter_[u]; e != -1; e = edges_[e].next) {
            Edge& ed = edges_[e];
            if (ed.cap > 1e-12 && level_[ed.to] == level_[u] + 1) {
                const double d = dfs(ed.to, t, std::min(f, ed.cap));
                if (d > 0.0) {
                    ed.cap -= d;
                    edges_[e ^ 1].cap += d;
                    return d;
                }
            }
        }
        return 0.0;
    }
};

// Isotonic L2 regression on a poset given by successor lists. Values z with
// weights w; returns theta with theta_u <= theta_v whenever v is a successor
// of u. Exact via recursive max-weight-closure partitioning.
//
// fit_warm refines a partition from a previous solve: every block is
// re-solved exactly, then blocks joined by violated constraint edges are
// merged and re-solved until the quotient is feasible. Untouched blocks keep
// their optimality certificates, so the combined solution is the exact
// projection. Blocks with equal values can only tie at 0 or 1 for binary
// responses, where the joint level-set condition holds trivially.
class PosetIsotonic {
  public:
    PosetIsotonic(std::vector<std::vector<int>> successors, std::vector<double> weights)
        : succ_(std::move(successors)), w_(std::move(weights)) {}

    std::vector<double> fit(const std::vector<double>& z) const {
        std::vector<std::vector<int>> partition;
        return fit_warm(z, partition);
    }

    std::vector<double> fit_warm(const std::vector<double>& z,
                                 std::vector<std::vector<int>>& partition) const {
        const int n = static_cast<int>(w_.size());
        if (partition.empty()) {
            partition.emplace_back(n);
            std::iota(partition.back().begin(), partition.back().end(), 0);
        }
        std::vector<double> theta(n, 0.0);
        std::vector<std::vector<int>> blocks;
        for (const auto& b : partition) solve_block(b, z, theta, blocks);

        std::vector<int> block_of(n, -1);
        std::vector<int> parent(blocks.size());
        while (true) {
            for (std::size_t b = 0; b < blocks.size(); ++b)
                for (int j : blocks[b]) block_of[j] = static_cast<int>(b);
            parent.resize(blocks.size());
            std::iota(parent.begin(), parent.end(), 0);
            const auto find = [&](int x) {
                while (parent[x] != x) x = parent[x] = parent[parent[x]];
                return x;
            };
            bool violated = false;
            for (int u = 0; u < n; ++u)
                for (int v : succ_[u])
                    if (theta[u] > theta[v] + 1e-12) {
                        const int a = find(block_of[u]), b = find(block_of[v]);
                        if (a != b) parent[a] = b;
                        violated = true;
                    }
            if (!violated) break;
            std::vector<std::vector<int>> merged(blocks.size());
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                auto& target = merged[static_cast<std::size_t>(find(static_cast<int>(b)))];
                target.insert(target.end(), blocks[b].begin(), blocks[b].end());
            }
            std::vector<std::vector<int>> next;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                if (merged[b].empty()) continue;
                if (find(static_cast<int>(b)) == static_cast<int>(b) &&
                    merged[b].size() == blocks[b].size()) {
                    next.push_back(std::move(merged[b]));  // untouched block
                } else {
                    solve_block(merged[b], z, theta, next);
                }
            }
            blocks = std::move(next);
        }
        partition = std::move(blocks);
        return theta;
    }

  private:
    std::vector<std::vector<int>> succ_;
    std::vector<double> w_;

    void solve_block(const std::vector<int>& block, const std::vector<double>& z,
                     std::vector<double>& theta, std::vector<std::vector<int>>& out) const {
        double wsum = 0.0, wz = 0.0;
        for (int j : block) {
            wsum += w_[j];
            wz += w_[j] * z[j];
        }
        const double mu = wz / wsum;
        if (block.size() == 1) {
            theta[block.front()] = mu;
            out.push_back(block);
            return;
        }
        // max-weight upper-closed subset U of the induced suborder maximizing
        // sum_{u in U} w_u (z_u - mu); project-selection min-cut
        std::vector<int> local(theta.size(), -1);
        for (std::size_t i = 0; i < block.size(); ++i) local[block[i]] = static_cast<int>(i);
        const int n = static_cast<int>(block.size());
        const int source = n, sink = n + 1;
        MaxFlow flow(n + 2);
        double positive_total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double gain = w_[block[i]] * (z[block[i]] - mu);
            if (gain > 0.0) {
                flow.add_edge(source, i, gain);
                positive_total += gain;
            } else if (gain < 0.0) {
                flow.add_edge(i, sink, -gain);
            }
            for (int v : succ_[block[i]]) {
                if (local[v] >= 0) flow.add_edge(i, local[v], kInf);
            }
        }
        if (positive_total <= 1e-13) {  // no profitable upper set
            for (int j : block) theta[j] = mu;
            out.push_back(block);
            return;
        }
        const double cut = flow.solve(source, sink);
        if (positive_total - cut <= 1e-11 * std::max(1.0, positive_total)) {
            for (int j : block) theta[j] = mu;
            out.push_back(block);
            return;
        }
        const auto side = flow.min_cut_side(source);
        std::vector<int> upper, lower;
        for (int i = 0; i < n; ++i) (side[i] ? upper : lower).push_back(block[i]);
        if (upper.empty() || lower.empty()) {
            for (int j : block) theta[j] = mu;
            out.push_back(block);
            return;
        }
        solve_block(lower, z, theta, out);
        solve_block(upper, z, theta, out);
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// IDR fit on one training set
// ---------------------------------------------------------------------------
struct IdrFit {
    std::vector<std::vector<double>> points;  // unique sorted covariate vectors
    std::vector<double> thresholds;           // unique observations, ascending
    // cdf[p] is the fitted conditional CDF of point p on the threshold grid
    std::vector<std::vector<double>> cdf;

    bool empty() const { return points.empty(); }
};

// Covariates are the sorted gust ensembles; duplicates merge with weights.
inline IdrFit fit_idr(const std::vector<std::vector<double>>& covariates,
                      const std::vector<double>& observations) {
    if (covariates.size() != observations.size())
        throw std::invalid_argument("fit_idr: covariate/observation size mismatch");
    const std::size_t n_raw = covariates.size();
    if (n_raw < 2) throw std::invalid_argument("fit_idr: need at least 2 cases");

    // sort-and-merge duplicate covariate points
    std::vector<std::vector<double>> sorted_cov(n_raw);
    for (std::size_t j = 0; j < n_raw; ++j) {
        sorted_cov[j] = covariates[j];
        std::sort(sorted_cov[j].begin(), sorted_cov[j].end());
    }
    std::vector<std::size_t> order(n_raw);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sorted_cov[a] < sorted_cov[b]; });

    IdrFit fit;
    std::vector<double> weights;
    std::vector<std::vector<std::size_t>> member_obs;  // raw indices per unique point
    for (std::size_t r = 0; r < n_raw; ++r) {
        const auto& v = sorted_cov[order[r]];
        if (fit.points.empty() || v != fit.points.back()) {
            fit.points.push_back(v);
            weights.push_back(0.0);
            member_obs.emplace_back();
        }
        weights.back() += 1.0;
        member_obs.back().push_back(order[r]);
    }
    const int n = static_cast<int>(fit.points.size());

    fit.thresholds = observations;
    std::sort(fit.thresholds.begin(), fit.thresholds.end());
    fit.thresholds.erase(std::unique(fit.thresholds.begin(), fit.thresholds.end()),
                         fit.thresholds.end());

    // constraint edges u -> v meaning theta_u <= theta_v; for CDF values the
    // stochastically larger point gets the smaller value, so edges run from
    // larger to smaller covariates. Only cover relations are kept (transitive
    // reduction): blocks in the partition recursion are order-convex, so
    // reachability through cover edges restricted to a block equals the
    // induced order.
    //
    // fit.points are sorted lexicographically, which is a linear extension of
    // the SD order; predecessors of v in SD order therefore have index < v.
    std::vector<std::vector<int>> succ(n);
    {
        std::vector<std::vector<int>> covers(n);  // maximal SD-predecessors
        for (int v = 0; v < n; ++v) {
            for (int u = v - 1; u >= 0; --u) {
                if (sd_compare_sorted(fit.points[u], fit.points[v]) != SdOrder::Less) continue;
                bool dominated = false;
                for (int c : covers[v]) {
                    if (sd_compare_sorted(fit.points[u], fit.points[c]) == SdOrder::Less) {
                        dominated = true;
                        break;
                    }
                }
                if (!dominated) covers[v].push_back(u);
            }
        }
        for (int v = 0; v < n; ++v)
            for (int u : covers[v]) succ[v].push_back(u);  // v > u in SD: theta_v <= theta_u
    }

    const detail::PosetIsotonic solver(std::move(succ), weights);

    // responses per threshold: weighted mean of indicators within each point;
    // the partition from the previous threshold warm-starts the next solve
    fit.cdf.assign(n, std::vector<double>(fit.thresholds.size(), 0.0));
    std::vector<double> z(n);
    std::vector<std::vector<int>> partition;
    for (std::size_t t = 0; t < fit.thresholds.size(); ++t) {
        const double thr = fit.thresholds[t];
        for (int p = 0; p < n; ++p) {
            double c = 0.0;
            for (std::size_t raw : member_obs[p]) c += (observations[raw] <= thr) ? 1.0 : 0.0;
            z[p] = c / weights[p];
        }
        const auto theta = solver.fit_warm(z, partition);
        for (int p = 0; p < n; ++p) fit.cdf[p][t] = std::min(1.0, std::max(0.0, theta[p]));
    }
    return fit;
}

inline IdrFit fit_idr_cases(const std::vector<ForecastCase>& cases) {
    std::vector<std::vector<double>> cov;
    std::vector<double> obs;
    for (const auto& c : cases) {
        if (!c.observation) continue;
        cov.push_back(c.ensemble);
        obs.push_back(*c.observation);
    }
    return fit_idr(cov, obs);
}

// Prediction: average of the tightest bounds from comparable training points,
// with the trivial bounds 0 resp. 1 standing in when a side is empty (this
// keeps predictions antitonic across arbitrary test covariates). Covariates
// incomparable to every training point fall back to the pooled CDF.
inline std::vector<double> predict_idr_cdf(const IdrFit& fit, std::vector<double> x_new) {
    if (fit.empty()) throw std::invalid_argument("predict_idr: empty fit");
    std::sort(x_new.begin(), x_new.end());
    const std::size_t T = fit.thresholds.size();
    std::vector<double> lower(T, 0.0), upper(T, 1.0);
    bool any_comparable = false;
    for (std::size_t p = 0; p < fit.points.size(); ++p) {
        const SdOrder o = sd_compare_sorted(x_new, fit.points[p]);
        if (o == SdOrder::Equal) return fit.cdf[p];
        if (o == SdOrder::Less) {
            // training point above x_new: its CDF is a lower bound
            any_comparable = true;
            for (std::size_t t = 0; t < T; ++t) lower[t] = std::max(lower[t], fit.cdf[p][t]);
        } else if (o == SdOrder::Greater) {
            any_comparable = true;
            for (std::size_t t = 0; t < T; ++t) upper[t] = std::min(upper[t], fit.cdf[p][t]);
        }
    }
    std::vector<double> out(T);
    if (any_comparable) {
        for (std::size_t t = 0; t < T; ++t) out[t] = 0.5 * (lower[t] + upper[t]);
    } else {
        // pooled empirical CDF across all training points
        for (std::size_t t = 0; t < T; ++t) {
            double acc = 0.0;
            for (std::size_t p = 0; p < fit.points.size(); ++p) acc += fit.cdf[p][t];
            out[t] = acc / static_cast<double>(fit.points.size());
        }
    }
    // enforce monotone CDF in t (bounds averaging preserves it, but guard)
    for (std::size_t t = 1; t < T; ++t) out[t] = std::max(out[t], out[t - 1]);
    for (double& v : out) v = std::min(1.0, std::max(0.0, v));
    return out;
}

// step CDF -> weighted discrete forecast on the threshold grid
inline DiscreteForecast step_cdf_forecast(const std::vector<double>& thresholds,
                                          const std::vector<double>& cdf_values) {
    std::vector<double> atoms, w;
    double prev = 0.0;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        const double jump = cdf_values[t] - prev;
        if (jump > 1e-12) {
            atoms.push_back(thresholds[t]);
            w.push_back(jump);
        }
        prev = cdf_values[t];
    }
    if (prev < 1.0 - 1e-9) {
        // remaining mass sits above the largest training observation; place it
        // on the top threshold to keep a proper distribution
        if (atoms.empty() || atoms.back() != thresholds.back()) {
            atoms.push_back(thresholds.back());
            w.push_back(1.0 - prev);
        } else {
            w.back() += 1.0 - prev;
        }
    }
    return DiscreteForecast(atoms, w);
}

inline DiscreteForecast predict_idr(const IdrFit& fit, const std::vector<double>& x_new) {
    return step_cdf_forecast(fit.thresholds, predict_idr_cdf(fit, x_new));
}

// ---------------------------------------------------------------------------
// Subbagging: fits on random half-size subsamples, combined by averaging the
// predicted CDFs
// ---------------------------------------------------------------------------
struct IdrEnsembleFit {
    std::vector<IdrFit> members;

    DiscreteForecast predict(const std::vector<double>& x_new) const {
        if (members.empty()) throw std::invalid_argument("IdrEnsembleFit: empty");
        std::vector<double> atoms;
        std::vector<double> weights;
        for (const auto& fit : members) {
            const DiscreteForecast f = predict_idr(fit, x_new);
            for (std::size_t i = 0; i < f.atoms.size(); ++i) {
                atoms.push_back(f.atoms[i]);
                weights.push_back(f.weights[i] / static_cast<double>(members.size()));
            }
        }
        return DiscreteForecast(atoms, weights);
    }
};

inline IdrEnsembleFit fit_idr_subbagged(const std::vector<ForecastCase>& cases,
                                        std::uint64_t seed, int n_subsamples = 100,
                                        double subsample_ratio = 0.5) {
    std::vector<std::vector<double>> cov;
    std::vector<double> obs;
    for (const auto& c : cases) {
        if (!c.observation) continue;
        cov.push_back(c.ensemble);
        obs.push_back(*c.observation);
    }
    const std::size_t n = cov.size();
    if (n < 10) throw std::invalid_argument("fit_idr_subbagged: need at least 10 cases");
    const std::size_t half = static_cast<std::size_t>(subsample_ratio * static_cast<double>(n));
    IdrEnsembleFit ens;
    ens.members.reserve(n_subsamples);
    for (int s = 0; s < n_subsamples; ++s) {
        Rng rng(derive_seed(seed, 0x1d2u, static_cast<std::uint64_t>(s)));
        const auto idx = rng.sample_without_replacement(n, half);
        std::vector<std::vector<double>> sub_cov;
        std::vector<double> sub_obs;
        sub_cov.reserve(half);
        for (std::size_t i : idx) {
            sub_cov.push_back(cov[i]);
            sub_obs.push_back(obs[i]);
        }
        ens.members.push_back(fit_idr(sub_cov, sub_obs));
    }
    return ens;
}

// ---------------------------------------------------------------------------
// Serialization: threshold grid + per-point CDF change points
// ---------------------------------------------------------------------------
inline json to_json(const IdrFit& fit) {
    json points = json::array();
    for (const auto& p : fit.points) points.push_back(p);
    json cdfs = json::array();
    for (const auto& row : fit.cdf) {
        json changes = json::array();
        double prev = 0.0;
        for (std::size_t t = 0; t < row.size(); ++t) {
            if (std::abs(row[t] - prev) > 1e-12) changes.push_back({t, row[t]});
            prev = row[t];
        }
        cdfs.push_back(changes);
    }
    return json{{"points", points}, {"thresholds", fit.thresholds}, {"cdf_changes", cdfs}};
}

inline IdrFit idr_fit_from_json(const json& j) {
    IdrFit fit;
    for (const auto& p : j.at("points")) fit.points.push_back(p.get<std::vector<double>>());
    fit.thresholds = j.at("thresholds").get<std::vector<double>>();
    fit.cdf.assign(fit.points.size(), std::vector<double>(fit.thresholds.size(), 0.0));
    const auto& cdfs = j.at("cdf_changes");
    for (std::size_t p = 0; p < fit.points.size(); ++p) {
        double cur = 0.0;
        std::size_t next_change = 0;
        const auto& changes = cdfs.at(p);
        for (std::size_t t = 0; t < fit.thresholds.size(); ++t) {
            if (next_change < changes.size() &&
                changes.at(next_change).at(0).get<std::size_t>() == t) {
                cur = changes.at(next_change).at(1).get<double>();
                ++next_change;
            }
            fit.cdf[p][t] = cur;
        }
    }
    return fit;
}

}  // namespace gustpp
