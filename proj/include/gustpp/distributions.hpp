#pragma once

// Probabilistic forecast representations: parametric truncated logistic,
// finite ensembles, weighted discrete (step) CDFs, piecewise-uniform
// histograms, Bernstein quantile functions and piecewise-linear quantile
// functions, together with the combination rules (Vincentization, parameter
// averaging) and JSON serialization.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gustpp/mathutil.hpp"

namespace gustpp {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Truncated logistic, left-truncated at zero.
//
// F0(z) = (F(z;mu,sigma) - F(0;mu,sigma)) / (1 - F(0;mu,sigma)) for z > 0.
// mu may be negative; sigma must be positive.
// ---------------------------------------------------------------------------
struct TruncatedLogistic {
    double mu = 0.0;
    double sigma = 1.0;

    TruncatedLogistic() = default;
    TruncatedLogistic(double mu_, double sigma_) : mu(mu_), sigma(sigma_) {
        if (!(sigma > 0.0) || !std::isfinite(mu) || !std::isfinite(sigma))
            throw std::domain_error("TruncatedLogistic: sigma must be > 0 and parameters finite");
    }

    // mass of the untruncated logistic above zero, 1 - F(0) = F_std(mu/sigma)
    double upper_mass() const { return logistic_cdf_std(mu / sigma); }

    // F0(z) = 1 - exp(sp(l) - sp(w)) with l = -mu/sigma, w = (z-mu)/sigma;
    // stable for arbitrarily strong truncation.
    double cdf(double z) const {
        if (z <= 0.0) return 0.0;
        const double w = (z - mu) / sigma;
        const double l = -mu / sigma;
        return -std::expm1(softplus(l) - softplus(w));
    }

    double log_pdf(double z) const {
        if (z <= 0.0) return -kInf;
        const double w = (z - mu) / sigma;
        const double l = -mu / sigma;
        return -std::abs(w) - 2.0 * softplus(-std::abs(w)) + softplus(l) - std::log(sigma);
    }

    double pdf(double z) const { return z <= 0.0 ? 0.0 : std::exp(log_pdf(z)); }

    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw std::domain_error("TruncatedLogistic::quantile: p in (0,1)");
        // target = 1 - (1-p) P with P = upper_mass; logit(target) expanded so
        // that log(P) goes through the stable softplus form
        const double P = upper_mass();
        return mu + sigma * (std::log1p(-(1.0 - p) * P) - std::log1p(-p) + softplus(-mu / sigma));
    }

    double mean() const {
        const double r = mu / sigma;
        if (r < -700.0) return sigma;  // exponential-tail limit
        return sigma * softplus(r) / logistic_cdf_std(r);
    }
    double median() const { return quantile(0.5); }

    double sample(Rng& rng) const {
        double u = rng.uniform();
        while (u <= 0.0 || u >= 1.0) u = rng.uniform();
        return quantile(u);
    }
};

// ---------------------------------------------------------------------------
// Finite ensemble; empirical CDF is a right-continuous step function with
// jumps 1/m (ties stack).
// ---------------------------------------------------------------------------
struct EnsembleForecast {
    std::vector<double> members;

    EnsembleForecast() = default;
    explicit EnsembleForecast(std::vector<double> m) : members(std::move(m)) {
        if (members.empty()) throw std::domain_error("EnsembleForecast: needs at least one member");
        for (double x : members)
            if (!std::isfinite(x)) throw std::domain_error("EnsembleForecast: non-finite member");
    }

    std::vector<double> sorted() const {
        std::vector<double> s = members;
        std::sort(s.begin(), s.end());
        return s;
    }

    double cdf(double z) const {
        std::size_t c = 0;
        for (double x : members) c += (x <= z);
        return static_cast<double>(c) / static_cast<double>(members.size());
    }

    double cdf_left(double z) const {  // P(X < z)
        std::size_t c = 0;
        for (double x : members) c += (x < z);
        return static_cast<double>(c) / static_cast<double>(members.size());
    }

    // lower generalized inverse, q(p) = inf{x : F(x) >= p}
    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw std::domain_error("EnsembleForecast::quantile: p in (0,1)");
        const std::vector<double> s = sorted();
        const std::size_t m = s.size();
        const std::size_t k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(m)));
        return s[std::min(k == 0 ? 0 : k - 1, m - 1)];
    }

    double mean() const { return mean_of(members); }
    double median() const { return quantile(0.5); }
};

// ---------------------------------------------------------------------------
// Weighted discrete distribution (piecewise-constant CDF). Used for IDR
// forecasts and subbagged step-CDF combinations. Atoms are kept sorted with
// equal atoms merged; weights normalized to 1.
// ---------------------------------------------------------------------------
struct DiscreteForecast {
    std::vector<double> atoms;    // strictly increasing
    std::vector<double> weights;  // positive, sum to 1

    DiscreteForecast() = default;
    DiscreteForecast(std::vector<double> a, std::vector<double> w) {
        if (a.empty() || a.size() != w.size())
            throw std::domain_error("DiscreteForecast: atoms/weights size mismatch");
        std::vector<std::size_t> idx(a.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
        double total = 0.0;
        for (double wi : w) {
            if (!(wi >= 0.0)) throw std::domain_error("DiscreteForecast: negative weight");
            total += wi;
        }
        if (!(total > 0.0)) throw std::domain_error("DiscreteForecast: zero total weight");
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double ai = a[idx[r]];
            const double wi = w[idx[r]] / total;
            if (wi == 0.0) continue;
            if (!atoms.empty() && ai == atoms.back()) {
                weights.back() += wi;
            } else {
                atoms.push_back(ai);
                weights.push_back(wi);
            }
        }
        if (atoms.empty()) throw std::domain_error("DiscreteForecast: all weights zero");
    }

    double cdf(double z) const {
        double c = 0.0;
        for (std::size_t i = 0; i < atoms.size() && atoms[i] <= z; ++i) c += weights[i];
        return c;
    }

    double cdf_left(double z) const {
        double c = 0.0;
        for (std::size_t i = 0; i < atoms.size() && atoms[i] < z; ++i) c += weights[i];
        return c;
    }

    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw std::domain_error("DiscreteForecast::quantile: p in (0,1)");
        double c = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            c += weights[i];
            if (c >= p - 1e-15) return atoms[i];
        }
        return atoms.back();
    }

    double mean() const {
        double s = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) s += atoms[i] * weights[i];
        return s;
    }
    double median() const { return quantile(0.5); }
};

// ---------------------------------------------------------------------------
// Piecewise-uniform histogram with edges b0 < ... < bN and bin probabilities.
// Zero density outside [b0, bN].
// ---------------------------------------------------------------------------
struct HistogramForecast {
    std::vector<double> edges;  // N+1 strictly increasing
    std::vector<double> probs;  // N, non-negative, sum 1 within 1e-12

    HistogramForecast() = default;
    HistogramForecast(std::vector<double> e, std::vector<double> p)
        : edges(std::move(e)), probs(std::move(p)) {
        if (edges.size() < 2 || probs.size() + 1 != edges.size())
            throw std::domain_error("HistogramForecast: need N+1 edges for N probs");
        for (std::size_t i = 1; i < edges.size(); ++i)
            if (!(edges[i] > edges[i - 1]))
                throw std::domain_error("HistogramForecast: edges must be strictly increasing");
        double s = 0.0;
        for (double pi : probs) {
            if (!(pi >= 0.0)) throw std::domain_error("HistogramForecast: negative probability");
            s += pi;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw std::domain_error("HistogramForecast: probabilities must sum to 1");
        // remove the residual drift so downstream cumulative sums hit 1 exactly enough
        for (double& pi : probs) pi /= s;
    }

    std::size_t n_bins() const { return probs.size(); }

    double cdf(double y) const {
        if (y < edges.front()) return 0.0;
        if (y >= edges.back()) return 1.0;
        double c = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (y < edges[k + 1]) {
                return c + probs[k] * (y - edges[k]) / (edges[k + 1] - edges[k]);
            }
            c += probs[k];
        }
        return 1.0;
    }

    double pdf(double y) const {
        if (y < edges.front() || y >= edges.back()) return 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k)
            if (y < edges[k + 1]) return probs[k] / (edges[k + 1] - edges[k]);
        return 0.0;
    }

    // Lower generalized inverse; a zero-probability bin maps to its left edge.
    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw std::domain_error("HistogramForecast::quantile: p in (0,1)");
        double c = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (c + probs[k] >= p) {
                if (probs[k] <= 0.0) return edges[k];
                return edges[k] + (p - c) / probs[k] * (edges[k + 1] - edges[k]);
            }
            c += probs[k];
        }
        return edges.back();
    }

    double mean() const {
        double s = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k)
            s += probs[k] * 0.5 * (edges[k] + edges[k + 1]);
        return s;
    }
    double median() const { return quantile(0.5); }

    // bin index containing y (clamped to the edge bins)
    std::size_t bin_index(double y) const {
        if (y < edges.front()) return 0;
        for (std::size_t k = 0; k < probs.size(); ++k)
            if (y < edges[k + 1]) return k;
        return probs.size() - 1;
    }
};

// ---------------------------------------------------------------------------
// Bernstein quantile function Q(tau) = sum_l alpha_l B_{l,d}(tau) with
// non-decreasing coefficients.
// ---------------------------------------------------------------------------
struct BernsteinQuantile {
    int degree = 0;
    std::vector<double> coefficients;  // d+1, non-decreasing

    BernsteinQuantile() = default;
    BernsteinQuantile(int d, std::vector<double> alpha) : degree(d), coefficients(std::move(alpha)) {
        if (degree < 0 || coefficients.size() != static_cast<std::size_t>(degree) + 1)
            throw std::domain_error("BernsteinQuantile: need degree+1 coefficients");
        for (std::size_t l = 1; l < coefficients.size(); ++l)
            if (coefficients[l] < coefficients[l - 1] - 1e-12)
                throw std::domain_error("BernsteinQuantile: coefficients must be non-decreasing");
    }

    // de Casteljau evaluation; exact endpoints Q(0)=alpha_0, Q(1)=alpha_d
    double eval(double tau) const {
        if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("BernsteinQuantile::eval: tau in [0,1]");
        std::vector<double> c = coefficients;
        for (int r = 1; r <= degree; ++r)
            for (int l = 0; l <= degree - r; ++l) c[l] = (1.0 - tau) * c[l] + tau * c[l + 1];
        return c[0];
    }

    double quantile(double p) const { return eval(p); }

    // numeric inverse of the quantile function on [0,1]; with flat stretches
    // cdf is the upper inverse and cdf_left the lower one
    double cdf(double y) const {
        if (y < coefficients.front()) return 0.0;
        if (y >= coefficients.back()) return 1.0;
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
            const double mid = 0.5 * (lo + hi);
            (eval(mid) <= y ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    double cdf_left(double y) const {
        if (y <= coefficients.front()) return 0.0;
        if (y > coefficients.back()) return 1.0;
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
            const double mid = 0.5 * (lo + hi);
            (eval(mid) < y ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    double mean() const {  // integral of Q over [0,1]
        double s = 0.0;
        for (double a : coefficients) s += a;
        return s / static_cast<double>(degree + 1);
    }
    double median() const { return eval(0.5); }
};

inline BernsteinQuantile coefficients_from_increments(const std::vector<double>& increments) {
    if (increments.empty()) throw std::domain_error("coefficients_from_increments: empty input");
    std::vector<double> alpha(increments.size());
    double run = 0.0;
    for (std::size_t l = 0; l < increments.size(); ++l) {
        if (!(increments[l] >= 0.0))
            throw std::domain_error("coefficients_from_increments: negative increment");
        run += increments[l];
        alpha[l] = run;
    }
    return BernsteinQuantile(static_cast<int>(increments.size()) - 1, std::move(alpha));
}

// ---------------------------------------------------------------------------
// Piecewise-linear quantile function with knot levels 0 = tau_0 < ... < tau_K = 1.
// ---------------------------------------------------------------------------
struct PiecewiseLinearQuantile {
    std::vector<double> levels;  // strictly increasing, first 0, last 1
    std::vector<double> values;  // non-decreasing

    PiecewiseLinearQuantile() = default;
    PiecewiseLinearQuantile(std::vector<double> lv, std::vector<double> va)
        : levels(std::move(lv)), values(std::move(va)) {
        if (levels.size() < 2 || levels.size() != values.size())
            throw std::domain_error("PiecewiseLinearQuantile: need matching levels/values, K >= 1");
        if (levels.front() != 0.0 || levels.back() != 1.0)
            throw std::domain_error("PiecewiseLinearQuantile: levels must span [0,1]");
        for (std::size_t i = 1; i < levels.size(); ++i) {
            if (!(levels[i] > levels[i - 1]))
                throw std::domain_error("PiecewiseLinearQuantile: levels must be strictly increasing");
            if (values[i] < values[i - 1] - 1e-12)
                throw std::domain_error("PiecewiseLinearQuantile: values must be non-decreasing");
        }
    }

    double eval(double tau) const {
        if (!(tau >= 0.0 && tau <= 1.0))
            throw std::domain_error("PiecewiseLinearQuantile::eval: tau in [0,1]");
        const auto it = std::upper_bound(levels.begin(), levels.end(), tau);
        if (it == levels.begin()) return values.front();
        if (it == levels.end()) return values.back();
        const std::size_t j = static_cast<std::size_t>(it - levels.begin());
        const double t = (tau - levels[j - 1]) / (levels[j] - levels[j - 1]);
        return values[j - 1] + t * (values[j] - values[j - 1]);
    }

    double quantile(double p) const { return eval(p); }

    // Flat value stretches are point masses: cdf is the upper inverse there,
    // cdf_left the lower one; elsewhere the CDF is continuous.
    double cdf(double y) const {
        if (y < values.front()) return 0.0;
        if (y >= values.back()) return 1.0;
        for (std::size_t j = 1; j < values.size(); ++j) {
            if (y < values[j]) {
                if (y < values[j - 1]) return levels[j - 1];
                return levels[j - 1] +
                       (y - values[j - 1]) / (values[j] - values[j - 1]) * (levels[j] - levels[j - 1]);
            }
        }
        return 1.0;
    }

    double cdf_left(double y) const {
        if (y <= values.front()) return 0.0;
        if (y > values.back()) return 1.0;
        for (std::size_t j = 1; j < values.size(); ++j) {
            if (y <= values[j]) {
                if (y <= values[j - 1]) return levels[j - 1];
                return levels[j - 1] +
                       (y - values[j - 1]) / (values[j] - values[j - 1]) * (levels[j] - levels[j - 1]);
            }
        }
        return 1.0;
    }

    double mean() const {
        double s = 0.0;
        for (std::size_t j = 1; j < levels.size(); ++j)
            s += (levels[j] - levels[j - 1]) * 0.5 * (values[j] + values[j - 1]);
        return s;
    }
    double median() const { return eval(0.5); }
};

// Quantile function of a histogram: knots at accumulated bin probabilities.
// Requires strictly positive bin probabilities (true for softmax outputs).
inline PiecewiseLinearQuantile quantile_knots(const HistogramForecast& h) {
    std::vector<double> levels(1, 0.0), values(1, h.edges.front());
    double c = 0.0;
    for (std::size_t k = 0; k < h.probs.size(); ++k) {
        if (!(h.probs[k] > 0.0))
            throw std::domain_error("quantile_knots: requires strictly positive bin probabilities");
        c += h.probs[k];
        levels.push_back(std::min(c, 1.0));
        values.push_back(h.edges[k + 1]);
    }
    levels.back() = 1.0;
    return PiecewiseLinearQuantile(std::move(levels), std::move(values));
}

// Inverse of quantile_knots: a piecewise-linear quantile function with strictly
// increasing values is the quantile function of a piecewise-uniform histogram.
inline HistogramForecast to_histogram(const PiecewiseLinearQuantile& q) {
    std::vector<double> edges, probs;
    edges.push_back(q.values.front());
    for (std::size_t j = 1; j < q.values.size(); ++j) {
        if (!(q.values[j] > q.values[j - 1]))
            throw std::domain_error("to_histogram: quantile values must be strictly increasing");
        edges.push_back(q.values[j]);
        probs.push_back(q.levels[j] - q.levels[j - 1]);
    }
    return HistogramForecast(std::move(edges), std::move(probs));
}

// ---------------------------------------------------------------------------
// Forecast combination
// ---------------------------------------------------------------------------

inline TruncatedLogistic params_average(const std::vector<TruncatedLogistic>& fs) {
    if (fs.empty()) throw std::domain_error("params_average: empty input");
    double mu = 0.0, sigma = 0.0;
    for (const auto& f : fs) {
        mu += f.mu;
        sigma += f.sigma;
    }
    const double n = static_cast<double>(fs.size());
    return TruncatedLogistic(mu / n, sigma / n);
}

// Vincentization of Bernstein forecasts: coefficient-wise mean, which equals
// the pointwise mean of the quantile functions by linearity.
inline BernsteinQuantile vincentize(const std::vector<BernsteinQuantile>& fs) {
    if (fs.empty()) throw std::domain_error("vincentize: empty input");
    const int d = fs.front().degree;
    std::vector<double> alpha(static_cast<std::size_t>(d) + 1, 0.0);
    for (const auto& f : fs) {
        if (f.degree != d) throw std::domain_error("vincentize: mixed Bernstein degrees");
        for (std::size_t l = 0; l < alpha.size(); ++l) alpha[l] += f.coefficients[l];
    }
    for (double& a : alpha) a /= static_cast<double>(fs.size());
    return BernsteinQuantile(d, std::move(alpha));
}

// Vincentization of piecewise-linear quantile functions: pointwise mean
// evaluated on the union of all knot levels.
inline PiecewiseLinearQuantile vincentize(const std::vector<PiecewiseLinearQuantile>& fs) {
    if (fs.empty()) throw std::domain_error("vincentize: empty input");
    std::vector<double> levels;
    for (const auto& f : fs) levels.insert(levels.end(), f.levels.begin(), f.levels.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    std::vector<double> values(levels.size(), 0.0);
    for (const auto& f : fs)
        for (std::size_t i = 0; i < levels.size(); ++i) values[i] += f.eval(levels[i]);
    for (double& v : values) v /= static_cast<double>(fs.size());
    return PiecewiseLinearQuantile(std::move(levels), std::move(values));
}

// ---------------------------------------------------------------------------
// Tagged union + JSON serialization
// ---------------------------------------------------------------------------

using ProbForecast = std::variant<TruncatedLogistic, EnsembleForecast, DiscreteForecast,
                                  HistogramForecast, BernsteinQuantile, PiecewiseLinearQuantile>;

inline json to_json(const TruncatedLogistic& f) {
    return json{{"type", "truncated_logistic"}, {"mu", f.mu}, {"sigma", f.sigma}};
}
inline json to_json(const EnsembleForecast& f) {
    return json{{"type", "ensemble"}, {"members", f.members}};
}
inline json to_json(const DiscreteForecast& f) {
    return json{{"type", "discrete"}, {"atoms", f.atoms}, {"weights", f.weights}};
}
inline json to_json(const HistogramForecast& f) {
    return json{{"type", "histogram"}, {"edges", f.edges}, {"probs", f.probs}};
}
inline json to_json(const BernsteinQuantile& f) {
    return json{{"type", "bernstein_quantile"}, {"degree", f.degree}, {"coefficients", f.coefficients}};
}
inline json to_json(const PiecewiseLinearQuantile& f) {
    return json{{"type", "piecewise_linear_quantile"}, {"levels", f.levels}, {"values", f.values}};
}

inline json to_json(const ProbForecast& f) {
    return std::visit([](const auto& g) { return to_json(g); }, f);
}

inline ProbForecast forecast_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "truncated_logistic")
        return TruncatedLogistic(j.at("mu").get<double>(), j.at("sigma").get<double>());
    if (type == "ensemble") return EnsembleForecast(j.at("members").get<std::vector<double>>());
    if (type == "discrete")
        return DiscreteForecast(j.at("atoms").get<std::vector<double>>(),
                                j.at("weights").get<std::vector<double>>());
    if (type == "histogram")
        return HistogramForecast(j.at("edges").get<std::vector<double>>(),
                                 j.at("probs").get<std::vector<double>>());
    if (type == "bernstein_quantile")
        return BernsteinQuantile(j.at("degree").get<int>(),
                                 j.at("coefficients").get<std::vector<double>>());
    if (type == "piecewise_linear_quantile")
        return PiecewiseLinearQuantile(j.at("levels").get<std::vector<double>>(),
                                       j.at("values").get<std::vector<double>>());
    throw std::domain_error("forecast_from_json: unknown type tag '" + type + "'");
}

// Convenience dispatchers used by scoring and verification.
inline double forecast_cdf(const ProbForecast& f, double z) {
    return std::visit([&](const auto& g) { return g.cdf(z); }, f);
}
inline double forecast_quantile(const ProbForecast& f, double p) {
    return std::visit([&](const auto& g) { return g.quantile(p); }, f);
}
inline double forecast_mean(const ProbForecast& f) {
    return std::visit([&](const auto& g) { return g.mean(); }, f);
}
inline double forecast_median(const ProbForecast& f) {
    return std::visit([&](const auto& g) { return g.median(); }, f);
}

}  // namespace gustpp
