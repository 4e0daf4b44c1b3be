#pragma once

// Proper scoring rules and consistent scoring functions for every forecast
// representation, plus a quadrature oracle used to validate the closed forms.
//
// CRPS conventions:
//   - truncated logistic: closed form derived from the definition (verified
//     against the quadrature oracle in the test suite)
//   - ensemble / discrete: mean |x_i - y| - mean pairwise difference / 2
//   - histogram: per-bin uniform-with-point-masses decomposition
//   - quantile representations: 2 x mean pinball loss on the 125-level
//     evaluation grid (training losses use the 99-level grid)

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gustpp/distributions.hpp"
#include "gustpp/mathutil.hpp"

namespace gustpp {

// Evaluation grid of 125 equidistant quantile levels i/126; contains the
// median and the 19/21 central prediction interval endpoints 1/21 and 20/21.
inline const std::vector<double>& eval_levels_125() {
    static const std::vector<double> g = [] {
        std::vector<double> v(125);
        for (int i = 1; i <= 125; ++i) v[i - 1] = static_cast<double>(i) / 126.0;
        return v;
    }();
    return g;
}

// Training grid of 99 equidistant levels 0.01 .. 0.99.
inline const std::vector<double>& train_levels_99() {
    static const std::vector<double> g = [] {
        std::vector<double> v(99);
        for (int i = 1; i <= 99; ++i) v[i - 1] = static_cast<double>(i) / 100.0;
        return v;
    }();
    return g;
}

// Nominal central coverage of an m-member ensemble range, (m-1)/(m+1).
inline constexpr double kPiCoverage20 = 19.0 / 21.0;

// ---------------------------------------------------------------------------
// Quantile loss (pinball): (q - y) (1{q >= y} - tau)
// ---------------------------------------------------------------------------
inline double quantile_loss(double q, double y, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("quantile_loss: tau in (0,1)");
    return (q - y) * ((q >= y ? 1.0 : 0.0) - tau);
}

// ---------------------------------------------------------------------------
// CRPS closed forms
// ---------------------------------------------------------------------------

namespace detail {

// Pieces of the truncated-logistic CRPS, standardized with l = -mu/sigma,
// w = (y-mu)/sigma, q = exp(-l) and P = 1 - F(l) = q/(1+q):
//
//   CRPS/sigma = (w - l) - 2 (sp(-l) - sp(-w)) / P + hp(q)
//
// where hp(q) = (log1p(q) - q/(1+q)) (1+q)^2 / q^2 is the scaled tail
// integral of the squared survival function. All three terms are bounded
// and cancellation-free for arbitrarily strong truncation. For y <= 0 the
// integrand is 1 on (y, 0] and CRPS/sigma = (l - w) + hp(q).
struct TlogisCrpsParts {
    double w = 0.0, l = 0.0;
    double ratio = 0.0;  // (sp(-l) - sp(-w)) / P
    double hp = 0.0;     // hp(q_l)
    double F_l = 0.0;    // 1/(1+q_l)
    double q_l = 0.0;
};

inline TlogisCrpsParts tlogis_crps_parts(const TruncatedLogistic& f, double y) {
    TlogisCrpsParts p;
    p.l = -f.mu / f.sigma;
    p.w = (y - f.mu) / f.sigma;
    p.q_l = std::exp(std::min(-p.l, 700.0));
    p.hp = logistic_tail_hp(p.q_l);
    p.F_l = 1.0 / (1.0 + p.q_l);
    const double q_w = std::exp(std::min(-p.w, 700.0));
    // sp(-l) - sp(-w) = log1p( (q_l - q_w) / (1 + q_w) ), divided by P = q_l/(1+q_l)
    const double num = -p.q_l * std::expm1(p.l - p.w);  // q_l - q_w
    const double x = num / (1.0 + q_w);
    if (p.l <= 30.0) {
        p.ratio = std::log1p(x) * (1.0 + p.q_l) / p.q_l;
    } else {
        // q_l <= 1e-13: log1p(x) = x to machine precision
        p.ratio = -std::expm1(p.l - p.w) * (1.0 + p.q_l) / (1.0 + q_w);
    }
    return p;
}

}  // namespace detail

inline double crps(const TruncatedLogistic& f, double y) {
    const auto p = detail::tlogis_crps_parts(f, y);
    if (y <= 0.0) return f.sigma * ((p.l - p.w) + p.hp);
    return f.sigma * ((p.w - p.l) - 2.0 * p.ratio + p.hp);
}

// Analytic gradient of the truncated-logistic CRPS with respect to (mu, sigma).
inline void crps_gradient(const TruncatedLogistic& f, double y, double& d_mu, double& d_sigma) {
    const auto p = detail::tlogis_crps_parts(f, y);
    // d/dl [q hp'(q)] identity: q hp'(q) = 1 - 2 hp(q)/(1+q)
    const double dhp_dl = -1.0 + 2.0 * p.hp / (1.0 + p.q_l);  // d hp / d l
    if (y <= 0.0) {
        const double C = (p.l - p.w) + p.hp;
        const double C_w = -1.0;
        const double C_l = 1.0 + dhp_dl;
        d_mu = -(C_w + C_l);
        d_sigma = C - p.w * C_w - p.l * C_l;
        return;
    }
    const double C = (p.w - p.l) - 2.0 * p.ratio + p.hp;
    // G(w)/P = exp(l - w) (1+q_l)/(1+q_w)
    const double q_w = std::exp(std::min(-p.w, 700.0));
    const double Gw_over_P = std::exp(p.l - p.w) * (1.0 + p.q_l) / (1.0 + q_w);
    const double C_w = 1.0 - 2.0 * Gw_over_P;
    const double C_l = -2.0 * p.ratio * p.F_l + 2.0 * p.hp / (1.0 + p.q_l);
    d_mu = -(C_w + C_l);
    d_sigma = C - p.w * C_w - p.l * C_l;
}

namespace detail {

// sum_i sum_l w_i w_l |x_i - x_l| for sorted atoms via prefix sums
inline double weighted_mean_pairwise_diff(const std::vector<double>& sorted_atoms,
                                          const std::vector<double>& weights) {
    double acc = 0.0, w_below = 0.0, wx_below = 0.0;
    for (std::size_t i = 0; i < sorted_atoms.size(); ++i) {
        acc += weights[i] * (sorted_atoms[i] * w_below - wx_below);
        w_below += weights[i];
        wx_below += weights[i] * sorted_atoms[i];
    }
    return 2.0 * acc;
}

inline double crps_step_cdf(const std::vector<double>& sorted_atoms,
                            const std::vector<double>& weights, double y) {
    double mae = 0.0;
    for (std::size_t i = 0; i < sorted_atoms.size(); ++i)
        mae += weights[i] * std::abs(sorted_atoms[i] - y);
    return mae - 0.5 * weighted_mean_pairwise_diff(sorted_atoms, weights);
}

// CRPS of a uniform distribution on [0,1] with point masses L at 0 and U at 1,
// evaluated at an observation already clamped into [0,1].
inline double crps_unif01_masses(double w, double L, double U) {
    const double c = 1.0 - L - U;
    if (c <= 0.0) {
        return w * L * L + (1.0 - w) * (1.0 - L) * (1.0 - L);
    }
    const double a1 = L + c * w;
    const double a2 = c * (1.0 - w) + U;
    return (a1 * a1 * a1 - L * L * L + a2 * a2 * a2 - U * U * U) / (3.0 * c);
}

}  // namespace detail

inline double crps(const EnsembleForecast& f, double y) {
    const std::vector<double> s = f.sorted();
    const std::vector<double> w(s.size(), 1.0 / static_cast<double>(s.size()));
    return detail::crps_step_cdf(s, w, y);
}

inline double crps(const DiscreteForecast& f, double y) {
    return detail::crps_step_cdf(f.atoms, f.weights, y);
}

// Piecewise-uniform histogram: |y - yc| plus per-bin terms, where each bin is a
// uniform distribution with the lower/upper tail masses as edge point masses.
inline double crps(const HistogramForecast& f, double y) {
    const double yc = std::min(f.edges.back(), std::max(f.edges.front(), y));
    double out = std::abs(y - yc);
    double below = 0.0;
    for (std::size_t k = 0; k < f.probs.size(); ++k) {
        const double above = 1.0 - below - f.probs[k];
        const double lo = f.edges[k], hi = f.edges[k + 1];
        const double yk = std::min(hi, std::max(lo, y));
        out += (hi - lo) * detail::crps_unif01_masses((yk - lo) / (hi - lo), below, above);
        below += f.probs[k];
    }
    return out;
}

namespace detail {

template <typename QuantileFn>
double crps_from_quantiles(QuantileFn&& q, double y, const std::vector<double>& levels) {
    double acc = 0.0;
    for (double tau : levels) acc += quantile_loss(q(tau), y, tau);
    return 2.0 * acc / static_cast<double>(levels.size());
}

}  // namespace detail

// Quantile representations are scored on the 125-level evaluation grid.
inline double crps(const BernsteinQuantile& f, double y) {
    return detail::crps_from_quantiles([&](double t) { return f.eval(t); }, y, eval_levels_125());
}

// A piecewise-linear quantile function with strictly increasing values is
// exactly a piecewise-uniform distribution; score it in closed form when
// possible and fall back to the quantile grid otherwise.
inline double crps(const PiecewiseLinearQuantile& f, double y) {
    try {
        return crps(to_histogram(f), y);
    } catch (const std::domain_error&) {
        return detail::crps_from_quantiles([&](double t) { return f.eval(t); }, y, eval_levels_125());
    }
}

inline double crps(const ProbForecast& f, double y) {
    return std::visit([&](const auto& g) { return crps(g, y); }, f);
}

// ---------------------------------------------------------------------------
// Quadrature oracle: integrate (F(z) - 1{y <= z})^2 using only CDF calls.
// Independent of every closed form above.
// ---------------------------------------------------------------------------

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& g, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = g(lm), frm = g(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& g, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = g(a), fm = g(m), fb = g(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(g, a, b, fa, fm, fb, whole, tol, 40);
}

inline void support_hints(const TruncatedLogistic& f, double& lo, double& hi,
                          std::vector<double>& breaks) {
    lo = std::max(0.0, f.quantile(1e-7));
    hi = f.quantile(1.0 - 1e-7);
    breaks.clear();
}
inline void support_hints(const EnsembleForecast& f, double& lo, double& hi,
                          std::vector<double>& breaks) {
    breaks = f.sorted();
    lo = breaks.front();
    hi = breaks.back();
}
inline void support_hints(const DiscreteForecast& f, double& lo, double& hi,
                          std::vector<double>& breaks) {
    breaks = f.atoms;
    lo = breaks.front();
    hi = breaks.back();
}
inline void support_hints(const HistogramForecast& f, double& lo, double& hi,
                          std::vector<double>& breaks) {
    breaks = f.edges;
    lo = f.edges.front();
    hi = f.edges.back();
}
inline void support_hints(const BernsteinQuantile& f, double& lo, double& hi,
                          std::vector<double>& breaks) {
    lo = f.coefficients.front();
    hi = f.coefficients.back();
    breaks.clear();
}
inline void support_hints(const PiecewiseLinearQuantile& f, double& lo, double& hi,
                          std::vector<double>& breaks) {
    breaks = f.values;
    lo = f.values.front();
    hi = f.values.back();
}

}  // namespace detail

inline double crps_numeric_oracle(const ProbForecast& f, double y) {
    double lo = 0.0, hi = 0.0;
    std::vector<double> breaks;
    std::visit([&](const auto& g) { detail::support_hints(g, lo, hi, breaks); }, f);
    breaks.push_back(y);
    breaks.push_back(std::min(lo, y));
    breaks.push_back(std::max(hi, y));
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    const double a = std::min(lo, y), b = std::max(hi, y);

    const auto integrand = [&](double z) {
        const double F = forecast_cdf(f, z);
        const double step = (y <= z) ? 1.0 : 0.0;
        return (F - step) * (F - step);
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double s = std::max(breaks[i], a), e = std::min(breaks[i + 1], b);
        if (e > s) total += detail::integrate(integrand, s, e, 1e-11 * std::max(1.0, e - s));
    }
    return total;
}

// ---------------------------------------------------------------------------
// Log score and point-forecast scores
// ---------------------------------------------------------------------------

inline double logscore(const TruncatedLogistic& f, double y) {
    const double d = f.pdf(y);
    return d > 0.0 ? -std::log(d) : kInf;
}

// Histogram log score: log(bin width) - log(bin probability)
inline double logscore(const HistogramForecast& f, double y) {
    if (y < f.edges.front() || y >= f.edges.back()) return kInf;
    const std::size_t k = f.bin_index(y);
    if (!(f.probs[k] > 0.0)) return kInf;
    return std::log(f.edges[k + 1] - f.edges[k]) - std::log(f.probs[k]);
}

inline double logscore(const PiecewiseLinearQuantile& f, double y) {
    try {
        return logscore(to_histogram(f), y);
    } catch (const std::domain_error&) {
        return kInf;
    }
}

inline double logscore(const BernsteinQuantile& f, double y) {
    if (y < f.coefficients.front() || y > f.coefficients.back()) return kInf;
    // density = 1 / Q'(tau) at tau = F(y); Q'(tau) = d sum (a_{l+1}-a_l) B_{l,d-1}
    const double tau = f.cdf(y);
    const int d = f.degree;
    if (d == 0) return kInf;
    // de Casteljau on the difference coefficients gives Q'(tau)/d
    std::vector<double> c(static_cast<std::size_t>(d));
    for (int l = 0; l < d; ++l) c[l] = f.coefficients[l + 1] - f.coefficients[l];
    for (int r = 1; r <= d - 1; ++r)
        for (int l = 0; l <= d - 1 - r; ++l) c[l] = (1.0 - tau) * c[l] + tau * c[l + 1];
    const double q_prime = static_cast<double>(d) * c[0];
    return q_prime > 0.0 ? std::log(q_prime) : kInf;
}

inline double logscore(const EnsembleForecast&, double) {
    throw std::domain_error("logscore: ensemble forecast has no density");
}
inline double logscore(const DiscreteForecast&, double) {
    throw std::domain_error("logscore: discrete forecast has no density");
}

inline double logscore(const ProbForecast& f, double y) {
    return std::visit([&](const auto& g) { return logscore(g, y); }, f);
}

inline double squared_error(const ProbForecast& f, double y) {
    const double d = forecast_mean(f) - y;
    return d * d;
}

inline double forecast_error(const ProbForecast& f, double y) { return forecast_median(f) - y; }

inline double brier(const ProbForecast& f, double y, double threshold) {
    if (!(threshold > 0.0)) throw std::domain_error("brier: threshold must be > 0");
    const double p_exceed = 1.0 - forecast_cdf(f, threshold);
    const double obs = (y > threshold) ? 1.0 : 0.0;
    return (p_exceed - obs) * (p_exceed - obs);
}

struct PiMetrics {
    double lower = 0.0;
    double upper = 0.0;
    double length = 0.0;
    bool covered = false;
};

inline PiMetrics pi_metrics(const ProbForecast& f, double y, double coverage = kPiCoverage20) {
    if (!(coverage > 0.0 && coverage < 1.0)) throw std::domain_error("pi_metrics: coverage in (0,1)");
    PiMetrics m;
    m.lower = forecast_quantile(f, 0.5 * (1.0 - coverage));
    m.upper = forecast_quantile(f, 0.5 * (1.0 + coverage));
    m.length = m.upper - m.lower;
    m.covered = (y >= m.lower && y <= m.upper);
    return m;
}

}  // namespace gustpp
