#pragma once

// Optimum-score estimation driver: BFGS with backtracking line search and a
// Nelder-Mead simplex fallback for non-converged or failed runs. Returned
// parameters never score worse than the initial point.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gustpp {

using LossFn = std::function<double(const Eigen::VectorXd&)>;
using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct OptimizerOptions {
    int max_iterations = 300;
    double gradient_tol = 1e-8;
    double step_tol = 1e-12;
    int simplex_max_iterations = 4000;
    double simplex_tol = 1e-10;
    double fd_step = 1e-6;
};

struct OptimResult {
    Eigen::VectorXd x;
    double loss = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    bool used_fallback = false;
    int iterations = 0;
    std::string note;
};

namespace detail {

inline Eigen::VectorXd fd_gradient(const LossFn& loss, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double hi = h * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + hi;
        const double fp = loss(xp);
        xp[i] = x[i] - hi;
        const double fm = loss(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    return g;
}

struct BfgsOutcome {
    Eigen::VectorXd x;
    double loss;
    bool converged;
    bool failed;  // hit NaN or made no progress at all
    int iterations;
};

inline BfgsOutcome bfgs(const LossFn& loss, const GradFn& grad, Eigen::VectorXd x,
                        const OptimizerOptions& opt) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    double fx = loss(x);
    BfgsOutcome out{x, fx, false, false, 0};
    if (!std::isfinite(fx)) {
        out.failed = true;
        return out;
    }
    Eigen::VectorXd g = grad(x);
    if (!g.allFinite()) {
        out.failed = true;
        return out;
    }
    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        if (g.norm() < opt.gradient_tol) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd d = -H * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {  // restore descent direction
            H.setIdentity();
            d = -g;
            slope = -g.squaredNorm();
            if (!(slope < 0.0)) {
                out.converged = true;  // zero gradient
                break;
            }
        }
        // Armijo backtracking
        double step = 1.0;
        double f_new = std::numeric_limits<double>::quiet_NaN();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * d;
            f_new = loss(x_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            out.failed = !std::isfinite(f_new) || out.iterations == 1;
            break;
        }
        Eigen::VectorXd g_new = grad(x_new);
        if (!g_new.allFinite()) {
            out.x = x_new;
            out.loss = f_new;
            out.failed = true;
            break;
        }
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
                rho * s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        out.x = x;
        out.loss = fx;
        if (s.norm() < opt.step_tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

inline BfgsOutcome nelder_mead(const LossFn& loss, Eigen::VectorXd x0, const OptimizerOptions& opt) {
    const Eigen::Index n = x0.size();
    const auto safe = [&](const Eigen::VectorXd& p) {
        const double v = loss(p);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    std::vector<Eigen::VectorXd> simplex;
    std::vector<double> fv;
    simplex.push_back(x0);
    fv.push_back(safe(x0));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd p = x0;
        p[i] += (p[i] != 0.0) ? 0.05 * std::abs(p[i]) : 0.1;
        simplex.push_back(p);
        fv.push_back(safe(p));
    }
    BfgsOutcome out{x0, fv[0], false, false, 0};
    const std::size_t np = simplex.size();
    for (int it = 0; it < opt.simplex_max_iterations; ++it) {
        out.iterations = it + 1;
        std::vector<std::size_t> ord(np);
        for (std::size_t i = 0; i < np; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = ord[0], worst = ord[np - 1], second = ord[np - 2];
        out.x = simplex[best];
        out.loss = fv[best];
        double span = 0.0;
        for (std::size_t i = 1; i < np; ++i)
            span = std::max(span, (simplex[ord[i]] - simplex[best]).norm());
        const double f_span = std::abs(fv[worst] - fv[best]);
        if ((span < opt.simplex_tol && f_span < opt.simplex_tol) ||
            (std::isfinite(fv[best]) && !std::isfinite(fv[worst]) && span < opt.simplex_tol)) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i < np; ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= static_cast<double>(np - 1);

        const Eigen::VectorXd refl = centroid + (centroid - simplex[worst]);
        const double f_refl = safe(refl);
        if (f_refl < fv[ord[0]]) {
            const Eigen::VectorXd exp_p = centroid + 2.0 * (centroid - simplex[worst]);
            const double f_exp = safe(exp_p);
            if (f_exp < f_refl) {
                simplex[worst] = exp_p;
                fv[worst] = f_exp;
            } else {
                simplex[worst] = refl;
                fv[worst] = f_refl;
            }
        } else if (f_refl < fv[second]) {
            simplex[worst] = refl;
            fv[worst] = f_refl;
        } else {
            const Eigen::VectorXd contr = centroid + 0.5 * (simplex[worst] - centroid);
            const double f_contr = safe(contr);
            if (f_contr < fv[worst]) {
                simplex[worst] = contr;
                fv[worst] = f_contr;
            } else {  // shrink toward best
                for (std::size_t i = 0; i < np; ++i) {
                    if (i == best) continue;
                    simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
                    fv[i] = safe(simplex[i]);
                }
            }
        }
    }
    out.failed = !std::isfinite(out.loss);
    return out;
}

}  // namespace detail

// Minimize a scalar loss. Uses the supplied analytic gradient when given,
// otherwise central finite differences. Falls back to Nelder-Mead when the
// quasi-Newton run fails or does not converge; the better of the two results
// is returned, and the result never scores worse than the initial point.
inline OptimResult minimize_score(const LossFn& loss, const Eigen::VectorXd& init,
                                  const GradFn& gradient = nullptr,
                                  const OptimizerOptions& options = {}) {
    const double f0 = loss(init);
    if (!std::isfinite(f0)) throw std::invalid_argument("minimize_score: loss not finite at init");
    const GradFn grad = gradient
                            ? gradient
                            : GradFn([&loss, &options](const Eigen::VectorXd& x) {
                                  return detail::fd_gradient(loss, x, options.fd_step);
                              });
    detail::BfgsOutcome primary = detail::bfgs(loss, grad, init, options);
    OptimResult res;
    res.x = primary.x;
    res.loss = primary.loss;
    res.converged = primary.converged;
    res.iterations = primary.iterations;
    if (primary.failed || !primary.converged) {
        const Eigen::VectorXd start =
            (std::isfinite(primary.loss) && primary.loss < f0) ? primary.x : init;
        detail::BfgsOutcome fb = detail::nelder_mead(loss, start, options);
        if (fb.loss <= res.loss || !std::isfinite(res.loss)) {
            res.x = fb.x;
            res.loss = fb.loss;
            res.converged = fb.converged;
            res.iterations += fb.iterations;
            res.used_fallback = true;
            res.note = primary.failed ? "quasi-Newton failed; simplex fallback"
                                      : "quasi-Newton not converged; simplex fallback";
        }
    }
    if (!std::isfinite(res.loss) || res.loss > f0) {
        res.x = init;
        res.loss = f0;
        res.note += res.note.empty() ? "no improvement over init" : "; no improvement over init";
    }
    return res;
}

}  // namespace gustpp
