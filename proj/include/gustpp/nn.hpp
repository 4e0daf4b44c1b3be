#pragma once

// Locally adaptive joint network: station embedding + two softplus hidden
// layers + a head-specific output. Three heads share the architecture:
//   DRN - 2 outputs, softplus -> (mu, sigma) of a truncated logistic, CRPS loss
//   BQN - 13 outputs, softplus -> non-negative Bernstein increments, mean
//         quantile loss over the 99-level training grid
//   HEN - 20 outputs, softmax -> bin probabilities, categorical cross-entropy
// Training is Adam with seeded batch shuffling, early stopping on the
// validation loss, and one restart at halved learning rate on divergence.
// Ten members per head are aggregated by parameter averaging (DRN),
// coefficient averaging (BQN) or quantile-function Vincentization (HEN).

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gustpp/dataset.hpp"
#include "gustpp/distributions.hpp"
#include "gustpp/gbm.hpp"
#include "gustpp/scoring.hpp"

namespace gustpp {

enum class NnHead { Drn, Bqn, Hen };

inline std::string head_name(NnHead h) {
    switch (h) {
        case NnHead::Drn: return "drn";
        case NnHead::Bqn: return "bqn";
        case NnHead::Hen: return "hen";
    }
    return "?";
}

inline constexpr int kBqnDegree = 12;

struct NetworkSpec {
    NnHead head = NnHead::Drn;
    int n_features = 0;  // continuous inputs (excluding the embedding)
    int n_stations = 0;
    int embed_dim = 10;
    int hidden1 = 64;
    int hidden2 = 32;
    int n_out = 2;
    double learning_rate = 5e-4;
    int epochs = 150;
    int patience = 10;
    int batch_size = 64;

    static NetworkSpec for_head(NnHead head, int n_features, int n_stations) {
        NetworkSpec s;
        s.head = head;
        s.n_features = n_features;
        s.n_stations = n_stations;
        switch (head) {
            case NnHead::Drn:
                s.hidden1 = 64;
                s.hidden2 = 32;
                s.n_out = 2;
                break;
            case NnHead::Bqn:
                s.hidden1 = 48;
                s.hidden2 = 24;
                s.n_out = kBqnDegree + 1;
                break;
            case NnHead::Hen:
                s.hidden1 = 64;
                s.hidden2 = 32;
                s.n_out = 20;
                break;
        }
        return s;
    }

    int input_dim() const { return n_features + embed_dim; }
};

struct NetworkWeights {
    Eigen::MatrixXd embed;       // n_stations x embed_dim
    Eigen::MatrixXd w1, w2, w3;  // input x h1, h1 x h2, h2 x out
    Eigen::VectorXd b1, b2, b3;

    bool all_finite() const {
        return embed.allFinite() && w1.allFinite() && w2.allFinite() && w3.allFinite() &&
               b1.allFinite() && b2.allFinite() && b3.allFinite();
    }
};

inline NetworkWeights nn_init(const NetworkSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x111u));
    NetworkWeights w;
    w.embed.resize(spec.n_stations, spec.embed_dim);
    for (int i = 0; i < w.embed.rows(); ++i)
        for (int j = 0; j < w.embed.cols(); ++j) w.embed(i, j) = rng.uniform(-0.05, 0.05);
    const auto fan_in_uniform = [&](Eigen::MatrixXd& m, int rows, int cols) {
        m.resize(rows, cols);
        const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    };
    fan_in_uniform(w.w1, spec.input_dim(), spec.hidden1);
    fan_in_uniform(w.w2, spec.hidden1, spec.hidden2);
    fan_in_uniform(w.w3, spec.hidden2, spec.n_out);
    w.b1 = Eigen::VectorXd::Zero(spec.hidden1);
    w.b2 = Eigen::VectorXd::Zero(spec.hidden2);
    w.b3 = Eigen::VectorXd::Zero(spec.n_out);
    return w;
}

// ---------------------------------------------------------------------------
// HEN binning: start from one bin per unique observation, repeatedly merge the
// least-populated bin into its smaller-count neighbour subject to the width
// caps (first <= 2 m/s, last <= 7 m/s, interior <= 5 m/s).
// ---------------------------------------------------------------------------
struct HenBinning {
    std::vector<double> edges;  // 21 edges for 20 bins
    bool relaxed_caps = false;

    std::size_t n_bins() const { return edges.empty() ? 0 : edges.size() - 1; }

    // bin of y, clamped to the edge bins
    int bin_of(double y, bool* clamped = nullptr) const {
        if (clamped) *clamped = (y < edges.front() || y >= edges.back());
        if (y < edges.front()) return 0;
        for (std::size_t k = 0; k + 1 < edges.size(); ++k)
            if (y < edges[k + 1]) return static_cast<int>(k);
        return static_cast<int>(n_bins()) - 1;
    }
};

inline HenBinning build_hen_binning(const std::vector<double>& raw_observations,
                                    int n_bins = 20) {
    if (raw_observations.empty()) throw std::invalid_argument("hen binning: no observations");
    std::vector<double> sorted = raw_observations;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> values;
    std::vector<int> counts;
    for (double v : sorted) {
        if (values.empty() || v != values.back()) {
            values.push_back(v);
            counts.push_back(0);
        }
        counts.back() += 1;
    }
    const int k = static_cast<int>(values.size());
    if (k < n_bins)
        throw std::invalid_argument("hen binning: need at least " + std::to_string(n_bins) +
                                    " distinct observed values, got " + std::to_string(k));

    // initial edges at midpoints between consecutive unique values; outer
    // edges extend half the first/last gap (floored at zero)
    std::vector<double> edges(static_cast<std::size_t>(k) + 1);
    for (int i = 1; i < k; ++i) edges[static_cast<std::size_t>(i)] = 0.5 * (values[i - 1] + values[i]);
    const double first_gap = (k > 1) ? values[1] - values[0] : 1.0;
    const double last_gap = (k > 1) ? values[k - 1] - values[k - 2] : 1.0;
    edges.front() = std::max(0.0, values.front() - 0.5 * first_gap);
    edges.back() = values.back() + 0.5 * last_gap;

    HenBinning bin;
    std::vector<double> e = edges;
    std::vector<int> c = counts;
    double first_cap = 2.0, interior_cap = 5.0, last_cap = 7.0;
    while (static_cast<int>(c.size()) > n_bins) {
        // least-count bin, ties to the lowest index
        int target = 0;
        for (int i = 1; i < static_cast<int>(c.size()); ++i)
            if (c[i] < c[target]) target = i;

        const auto cap_for = [&](int idx, int n_total) {
            if (idx == 0) return first_cap;
            if (idx == n_total - 1) return last_cap;
            return interior_cap;
        };
        const auto try_merge = [&](int lo) -> bool {  // merge bins lo and lo+1
            if (lo < 0 || lo + 1 >= static_cast<int>(c.size())) return false;
            const double width = e[static_cast<std::size_t>(lo) + 2] - e[static_cast<std::size_t>(lo)];
            const int merged_count = static_cast<int>(c.size()) - 1;
            if (width > cap_for(lo, merged_count)) return false;
            e.erase(e.begin() + lo + 1);
            c[static_cast<std::size_t>(lo)] += c[static_cast<std::size_t>(lo) + 1];
            c.erase(c.begin() + lo + 1);
            return true;
        };

        bool merged = false;
        // smaller-count neighbour first (ties to the left), then the other one
        const int left = target - 1, right = target + 1;
        const bool left_ok = left >= 0, right_ok = right < static_cast<int>(c.size());
        int first_choice = -1, second_choice = -1;
        if (left_ok && right_ok) {
            if (c[static_cast<std::size_t>(left)] <= c[static_cast<std::size_t>(right)]) {
                first_choice = left;
                second_choice = target;
            } else {
                first_choice = target;
                second_choice = left;
            }
        } else if (left_ok) {
            first_choice = left;
        } else if (right_ok) {
            first_choice = target;
        }
        if (first_choice >= 0) merged = try_merge(first_choice);
        if (!merged && second_choice >= 0) merged = try_merge(second_choice);
        if (!merged) {
            // scan every adjacent pair for any cap-respecting merge involving
            // the globally least-count pair; failing that, relax the interior cap
            int best_pair = -1;
            long best_count = -1;
            for (int i = 0; i + 1 < static_cast<int>(c.size()); ++i) {
                const double width = e[static_cast<std::size_t>(i) + 2] - e[static_cast<std::size_t>(i)];
                if (width > cap_for(i, static_cast<int>(c.size()) - 1)) continue;
                const long pair_count = c[static_cast<std::size_t>(i)] + c[static_cast<std::size_t>(i) + 1];
                if (best_pair < 0 || pair_count < best_count) {
                    best_pair = i;
                    best_count = pair_count;
                }
            }
            if (best_pair >= 0) {
                merged = try_merge(best_pair);
            } else {
                interior_cap *= 1.5;
                bin.relaxed_caps = true;
            }
        }
    }
    bin.edges = std::move(e);
    return bin;
}

// ---------------------------------------------------------------------------
// Forward / loss / backward
// ---------------------------------------------------------------------------
struct NnBatch {
    Eigen::MatrixXd x;         // rows x n_features (standardized)
    std::vector<int> station;  // embedding row per case
    Eigen::VectorXd y;
};

namespace detail {

inline const Eigen::MatrixXd& bqn_basis99() {
    static const Eigen::MatrixXd basis = [] {
        const auto& levels = train_levels_99();
        Eigen::MatrixXd b(static_cast<int>(levels.size()), kBqnDegree + 1);
        for (int i = 0; i < b.rows(); ++i) {
            // de Casteljau on unit vectors is overkill; use the closed form
            // binom(d,l) tau^l (1-tau)^(d-l) built by recurrence
            const double tau = levels[static_cast<std::size_t>(i)];
            std::vector<double> row(kBqnDegree + 1, 0.0);
            row[0] = 1.0;
            for (int d = 1; d <= kBqnDegree; ++d)
                for (int l = d; l >= 0; --l)
                    row[static_cast<std::size_t>(l)] =
                        (l > 0 ? tau * row[static_cast<std::size_t>(l - 1)] : 0.0) +
                        (l <= d - 1 ? (1.0 - tau) * row[static_cast<std::size_t>(l)] : 0.0);
            for (int l = 0; l <= kBqnDegree; ++l) b(i, l) = row[static_cast<std::size_t>(l)];
        }
        return b;
    }();
    return basis;
}

inline double sigmoid(double t) { return logistic_cdf_std(t); }

struct ForwardCache {
    Eigen::MatrixXd input;          // B x (f+e)
    Eigen::MatrixXd h1_pre, h2_pre; // pre-activations
    Eigen::MatrixXd h1, h2;
    Eigen::MatrixXd out;            // raw outputs
};

inline void nn_forward(const NetworkSpec& spec, const NetworkWeights& w, const NnBatch& batch,
                       ForwardCache& cache) {
    const int B = static_cast<int>(batch.x.rows());
    cache.input.resize(B, spec.input_dim());
    cache.input.leftCols(spec.n_features) = batch.x;
    for (int r = 0; r < B; ++r)
        cache.input.row(r).tail(spec.embed_dim) = w.embed.row(batch.station[static_cast<std::size_t>(r)]);
    cache.h1_pre = (cache.input * w.w1).rowwise() + w.b1.transpose();
    cache.h1 = cache.h1_pre.unaryExpr([](double t) { return softplus(t); });
    cache.h2_pre = (cache.h1 * w.w2).rowwise() + w.b2.transpose();
    cache.h2 = cache.h2_pre.unaryExpr([](double t) { return softplus(t); });
    cache.out = (cache.h2 * w.w3).rowwise() + w.b3.transpose();
}

}  // namespace detail

// head transforms of a single raw output row
inline TruncatedLogistic drn_forecast(const Eigen::RowVectorXd& raw) {
    const double mu = softplus(raw[0]);
    const double sigma = std::max(softplus(raw[1]), 1e-9);
    return TruncatedLogistic(mu, sigma);
}

inline BernsteinQuantile bqn_forecast(const Eigen::RowVectorXd& raw) {
    std::vector<double> inc(static_cast<std::size_t>(raw.size()));
    for (int l = 0; l < raw.size(); ++l) inc[static_cast<std::size_t>(l)] = softplus(raw[l]);
    return coefficients_from_increments(inc);
}

inline HistogramForecast hen_forecast(const Eigen::RowVectorXd& raw, const HenBinning& binning) {
    const double m = raw.maxCoeff();
    Eigen::VectorXd p = (raw.transpose().array() - m).exp();
    p /= p.sum();
    return HistogramForecast(binning.edges, std::vector<double>(p.data(), p.data() + p.size()));
}

// per-sample loss and gradient with respect to the raw outputs
namespace detail {

inline double head_loss_grad(const NetworkSpec& spec, const Eigen::RowVectorXd& raw, double y,
                             const HenBinning* binning, Eigen::RowVectorXd* d_raw,
                             int* hen_clamped = nullptr) {
    switch (spec.head) {
        case NnHead::Drn: {
            const double mu = softplus(raw[0]);
            const double sigma = std::max(softplus(raw[1]), 1e-9);
            const TruncatedLogistic f(mu, sigma);
            const double loss = crps(f, y);
            if (d_raw) {
                double dmu, dsigma;
                crps_gradient(f, y, dmu, dsigma);
                (*d_raw)[0] = dmu * sigmoid(raw[0]);
                (*d_raw)[1] = dsigma * sigmoid(raw[1]);
            }
            return loss;
        }
        case NnHead::Bqn: {
            const auto& basis = bqn_basis99();
            Eigen::VectorXd alpha(raw.size());
            double run = 0.0;
            for (int l = 0; l < raw.size(); ++l) {
                run += softplus(raw[l]);
                alpha[l] = run;
            }
            const Eigen::VectorXd q = basis * alpha;
            double loss = 0.0;
            Eigen::VectorXd d_alpha = Eigen::VectorXd::Zero(raw.size());
            const auto& levels = train_levels_99();
            for (int i = 0; i < q.size(); ++i) {
                const double tau = levels[static_cast<std::size_t>(i)];
                const double ind = (q[i] >= y) ? 1.0 : 0.0;
                loss += (q[i] - y) * (ind - tau);
                if (d_raw) d_alpha += (ind - tau) * basis.row(i).transpose();
            }
            loss /= static_cast<double>(q.size());
            if (d_raw) {
                d_alpha /= static_cast<double>(q.size());
                // alpha_l = sum_{j<=l} softplus(raw_j): suffix sums
                double suffix = 0.0;
                for (int l = static_cast<int>(raw.size()) - 1; l >= 0; --l) {
                    suffix += d_alpha[l];
                    (*d_raw)[l] = suffix * sigmoid(raw[l]);
                }
            }
            return loss;
        }
        case NnHead::Hen: {
            if (!binning) throw std::invalid_argument("HEN loss requires a binning");
            bool clamped = false;
            const int k = binning->bin_of(y, &clamped);
            if (clamped && hen_clamped) ++(*hen_clamped);
            const double m = raw.maxCoeff();
            Eigen::RowVectorXd p = (raw.array() - m).exp();
            p /= p.sum();
            const double loss = -std::log(std::max(p[k], 1e-300));
            if (d_raw) {
                *d_raw = p;
                (*d_raw)[k] -= 1.0;
            }
            return loss;
        }
    }
    throw std::logic_error("unknown head");
}

}  // namespace detail

struct NnGradients {
    Eigen::MatrixXd embed, w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
    double loss = 0.0;
};

inline double nn_loss(const NetworkSpec& spec, const NetworkWeights& w, const NnBatch& batch,
                      const HenBinning* binning = nullptr, int* hen_clamped = nullptr) {
    detail::ForwardCache cache;
    detail::nn_forward(spec, w, batch, cache);
    double acc = 0.0;
    for (int r = 0; r < cache.out.rows(); ++r)
        acc += detail::head_loss_grad(spec, cache.out.row(r), batch.y[r], binning, nullptr,
                                      hen_clamped);
    return acc / static_cast<double>(cache.out.rows());
}

inline NnGradients nn_backward(const NetworkSpec& spec, const NetworkWeights& w,
                               const NnBatch& batch, const HenBinning* binning = nullptr) {
    detail::ForwardCache cache;
    detail::nn_forward(spec, w, batch, cache);
    const int B = static_cast<int>(cache.out.rows());
    Eigen::MatrixXd d_out(B, spec.n_out);
    double acc = 0.0;
    Eigen::RowVectorXd d_row(spec.n_out);
    for (int r = 0; r < B; ++r) {
        acc += detail::head_loss_grad(spec, cache.out.row(r), batch.y[r], binning, &d_row);
        d_out.row(r) = d_row;
    }
    d_out /= static_cast<double>(B);

    NnGradients g;
    g.loss = acc / static_cast<double>(B);
    g.w3 = cache.h2.transpose() * d_out;
    g.b3 = d_out.colwise().sum();
    Eigen::MatrixXd d_h2 = (d_out * w.w3.transpose()).array() *
                           cache.h2_pre.unaryExpr([](double t) { return detail::sigmoid(t); }).array();
    g.w2 = cache.h1.transpose() * d_h2;
    g.b2 = d_h2.colwise().sum();
    Eigen::MatrixXd d_h1 = (d_h2 * w.w2.transpose()).array() *
                           cache.h1_pre.unaryExpr([](double t) { return detail::sigmoid(t); }).array();
    g.w1 = cache.input.transpose() * d_h1;
    g.b1 = d_h1.colwise().sum();
    Eigen::MatrixXd d_input = d_h1 * w.w1.transpose();
    g.embed = Eigen::MatrixXd::Zero(w.embed.rows(), w.embed.cols());
    for (int r = 0; r < B; ++r)
        g.embed.row(batch.station[static_cast<std::size_t>(r)]) +=
            d_input.row(r).tail(spec.embed_dim);
    return g;
}

// ---------------------------------------------------------------------------
// Adam training with early stopping
// ---------------------------------------------------------------------------
struct TrainLogEntry {
    int epoch;
    double train_loss;
    double val_loss;
};

struct TrainResult {
    NetworkWeights weights;
    std::vector<TrainLogEntry> log;
    int best_epoch = 0;
    double best_val_loss = kInf;
    int skipped_batches = 0;
    int hen_clamped = 0;
    bool restarted = false;
};

namespace detail {

struct AdamState {
    Eigen::MatrixXd m_embed, v_embed, m_w1, v_w1, m_w2, v_w2, m_w3, v_w3;
    Eigen::VectorXd m_b1, v_b1, m_b2, v_b2, m_b3, v_b3;
    long t = 0;

    explicit AdamState(const NetworkWeights& w) {
        m_embed = Eigen::MatrixXd::Zero(w.embed.rows(), w.embed.cols());
        v_embed = m_embed;
        m_w1 = Eigen::MatrixXd::Zero(w.w1.rows(), w.w1.cols());
        v_w1 = m_w1;
        m_w2 = Eigen::MatrixXd::Zero(w.w2.rows(), w.w2.cols());
        v_w2 = m_w2;
        m_w3 = Eigen::MatrixXd::Zero(w.w3.rows(), w.w3.cols());
        v_w3 = m_w3;
        m_b1 = Eigen::VectorXd::Zero(w.b1.size());
        v_b1 = m_b1;
        m_b2 = Eigen::VectorXd::Zero(w.b2.size());
        v_b2 = m_b2;
        m_b3 = Eigen::VectorXd::Zero(w.b3.size());
        v_b3 = m_b3;
    }

    template <typename T>
    void update_one(T& param, T& m, T& v, const T& g, double lr) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-7;
        m = beta1 * m + (1.0 - beta1) * g;
        v = (beta2 * v.array() + (1.0 - beta2) * g.array().square()).matrix();
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }

    void step(NetworkWeights& w, const NnGradients& g, double lr) {
        ++t;
        update_one(w.embed, m_embed, v_embed, g.embed, lr);
        update_one(w.w1, m_w1, v_w1, g.w1, lr);
        update_one(w.w2, m_w2, v_w2, g.w2, lr);
        update_one(w.w3, m_w3, v_w3, g.w3, lr);
        update_one(w.b1, m_b1, v_b1, g.b1, lr);
        update_one(w.b2, m_b2, v_b2, g.b2, lr);
        update_one(w.b3, m_b3, v_b3, g.b3, lr);
    }
};

inline bool gradients_finite(const NnGradients& g) {
    return g.embed.allFinite() && g.w1.allFinite() && g.w2.allFinite() && g.w3.allFinite() &&
           g.b1.allFinite() && g.b2.allFinite() && g.b3.allFinite() && std::isfinite(g.loss);
}

}  // namespace detail

inline TrainResult nn_train(const NetworkSpec& spec, const NnBatch& train, const NnBatch& val,
                            std::uint64_t seed, const HenBinning* binning = nullptr) {
    const std::size_t n = static_cast<std::size_t>(train.x.rows());
    if (n == 0 || val.x.rows() == 0) throw std::invalid_argument("nn_train: empty train or val");

    double lr = spec.learning_rate;
    for (int attempt = 0; attempt < 2; ++attempt) {
        TrainResult res;
        res.restarted = (attempt == 1);
        NetworkWeights w = nn_init(spec, seed);
        detail::AdamState adam(w);
        NetworkWeights best = w;
        double best_val = kInf;
        int best_epoch = 0;
        bool diverged = false;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        NnBatch batch;
        for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
            Rng shuffle_rng(derive_seed(seed, 0xe90c4u, static_cast<std::uint64_t>(epoch)));
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            long seen = 0;
            for (std::size_t start = 0; start < n; start += spec.batch_size) {
                const std::size_t count = std::min<std::size_t>(spec.batch_size, n - start);
                batch.x.resize(static_cast<int>(count), spec.n_features);
                batch.y.resize(static_cast<int>(count));
                batch.station.resize(count);
                for (std::size_t i = 0; i < count; ++i) {
                    batch.x.row(static_cast<int>(i)) = train.x.row(static_cast<int>(order[start + i]));
                    batch.y[static_cast<int>(i)] = train.y[static_cast<int>(order[start + i])];
                    batch.station[i] = train.station[order[start + i]];
                }
                const NnGradients g = nn_backward(spec, w, batch, binning);
                if (!detail::gradients_finite(g)) {
                    ++res.skipped_batches;
                    continue;
                }
                adam.step(w, g, lr);
                epoch_loss += g.loss * static_cast<double>(count);
                seen += static_cast<long>(count);
            }
            epoch_loss = seen > 0 ? epoch_loss / static_cast<double>(seen) : kInf;
            const double val_loss = nn_loss(spec, w, val, binning, &res.hen_clamped);
            res.log.push_back({epoch, epoch_loss, val_loss});
            if (!std::isfinite(val_loss) || !w.all_finite()) {
                diverged = true;
                break;
            }
            if (val_loss < best_val - 1e-12) {
                best_val = val_loss;
                best = w;
                best_epoch = epoch;
            } else if (epoch - best_epoch >= spec.patience) {
                break;  // early stop after `patience` epochs without improvement
            }
        }
        if (!diverged && std::isfinite(best_val)) {
            res.weights = best;
            res.best_epoch = best_epoch;
            res.best_val_loss = best_val;
            return res;
        }
        lr *= 0.5;  // restart once with halved learning rate
    }
    throw std::runtime_error("nn_train: diverged twice (non-finite loss)");
}

// ---------------------------------------------------------------------------
// Head-specific forecasts and ensemble aggregation
// ---------------------------------------------------------------------------
inline Eigen::RowVectorXd nn_raw_output(const NetworkSpec& spec, const NetworkWeights& w,
                                        const Eigen::RowVectorXd& features, int station) {
    if (station < 0 || station >= w.embed.rows())
        throw std::out_of_range("nn_raw_output: unknown station index");
    Eigen::RowVectorXd input(spec.input_dim());
    input.head(spec.n_features) = features;
    input.tail(spec.embed_dim) = w.embed.row(station);
    const Eigen::RowVectorXd h1 =
        ((input * w.w1) + w.b1.transpose()).unaryExpr([](double t) { return softplus(t); });
    const Eigen::RowVectorXd h2 =
        ((h1 * w.w2) + w.b2.transpose()).unaryExpr([](double t) { return softplus(t); });
    return (h2 * w.w3) + w.b3.transpose();
}

// aggregate ten member outputs into the final forecast
inline ProbForecast aggregate_drn(const std::vector<TruncatedLogistic>& members) {
    return params_average(members);
}
inline ProbForecast aggregate_bqn(const std::vector<BernsteinQuantile>& members) {
    return vincentize(members);
}
inline ProbForecast aggregate_hen(const std::vector<HistogramForecast>& members) {
    std::vector<PiecewiseLinearQuantile> qfs;
    qfs.reserve(members.size());
    for (const auto& m : members) qfs.push_back(quantile_knots(m));
    return vincentize(qfs);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------
inline json to_json(const NetworkWeights& w) {
    const auto mat = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (int i = 0; i < m.rows(); ++i) {
            json row = json::array();
            for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(row);
        }
        return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
    };
    const auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    return json{{"embed", mat(w.embed)}, {"w1", mat(w.w1)}, {"w2", mat(w.w2)},
                {"w3", mat(w.w3)},       {"b1", vec(w.b1)}, {"b2", vec(w.b2)},
                {"b3", vec(w.b3)}};
}

inline NetworkWeights network_weights_from_json(const json& j) {
    const auto mat = [](const json& m) {
        Eigen::MatrixXd out(m.at("rows").get<int>(), m.at("cols").get<int>());
        for (int i = 0; i < out.rows(); ++i)
            for (int c = 0; c < out.cols(); ++c) out(i, c) = m.at("data").at(i).at(c).get<double>();
        return out;
    };
    const auto vec = [](const json& v) {
        const auto data = v.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(data.data(),
                                                                 static_cast<long>(data.size())));
    };
    NetworkWeights w;
    w.embed = mat(j.at("embed"));
    w.w1 = mat(j.at("w1"));
    w.w2 = mat(j.at("w2"));
    w.w3 = mat(j.at("w3"));
    w.b1 = vec(j.at("b1"));
    w.b2 = vec(j.at("b2"));
    w.b3 = vec(j.at("b3"));
    return w;
}

}  // namespace gustpp
