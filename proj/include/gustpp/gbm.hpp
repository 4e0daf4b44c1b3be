#pragma once

// Gradient-boosting EMOS with extended linear links over standardized
// predictors: mu = a + sum b_i x_i, sigma = exp(c + sum d_i x_i). Intercepts
// start at the unconditional maximum-likelihood fit, slopes at zero; each
// iteration updates the single coefficient (across both links) whose
// predictor is most correlated with the respective gradient of the mean
// negative log-likelihood. The returned model is the path point with
// minimal AIC, with the parameter count = distinct nonzero coefficients + 2.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gustpp/dataset.hpp"
#include "gustpp/distributions.hpp"
#include "gustpp/emos.hpp"
#include "gustpp/optimize.hpp"

namespace gustpp {

struct GbmHyper {
    int max_iterations = 1000;
    double step = 0.05;
};

struct GbmSelection {
    int iteration;
    std::string coefficient;  // "b:<name>" or "d:<name>"
    double delta;
};

struct GbmCoefficients {
    double a = 0.0;  // location intercept
    double c = 0.0;  // log-scale intercept
    std::vector<std::string> predictors;
    std::vector<double> b;  // location slopes
    std::vector<double> d;  // scale slopes
    std::vector<GbmSelection> history;
    double aic = 0.0;
    int aic_iteration = 0;
    bool step_warning = false;
};

// gradient of the truncated-logistic negative log-likelihood with respect to
// the location and the log-scale
inline void tlogis_nll_gradient(double mu, double sigma, double y, double& d_mu, double& d_eta) {
    const double w = (y - mu) / sigma;
    const double r = mu / sigma;
    const double Fw = logistic_cdf_std(w);
    const double Fmr = logistic_cdf_std(-r);
    d_mu = (1.0 - 2.0 * Fw) / sigma + Fmr / sigma;
    d_eta = 1.0 + w * (1.0 - 2.0 * Fw) - r * Fmr;
}

namespace detail {

struct GbmData {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;  // standardized, names.size() columns
    std::vector<double> y;
};

inline double gbm_mean_nll(const GbmData& data, const GbmCoefficients& coef,
                           std::vector<double>* mu_out = nullptr,
                           std::vector<double>* sigma_out = nullptr) {
    const std::size_t n = data.y.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double mu = coef.a, eta = coef.c;
        for (std::size_t i = 0; i < data.cols.size(); ++i) {
            mu += coef.b[i] * data.cols[i][j];
            eta += coef.d[i] * data.cols[i][j];
        }
        const double sigma = std::exp(eta);
        acc -= TruncatedLogistic(mu, sigma).log_pdf(data.y[j]);
        if (mu_out) (*mu_out)[j] = mu;
        if (sigma_out) (*sigma_out)[j] = sigma;
    }
    return acc / static_cast<double>(n);
}

}  // namespace detail

inline GbmCoefficients fit_emos_gb(const std::vector<std::string>& predictor_names,
                                   const std::vector<std::vector<double>>& standardized_columns,
                                   const std::vector<double>& observations,
                                   const GbmHyper& hyper = {}) {
    detail::GbmData data{predictor_names, standardized_columns, observations};
    const std::size_t n = data.y.size();
    const std::size_t p = data.names.size();
    if (n < 10) throw std::invalid_argument("fit_emos_gb: need at least 10 cases");
    for (const auto& col : data.cols)
        if (col.size() != n) throw std::invalid_argument("fit_emos_gb: column size mismatch");

    GbmCoefficients coef;
    coef.predictors = data.names;
    coef.b.assign(p, 0.0);
    coef.d.assign(p, 0.0);

    // unconditional MLE of (mu, log sigma)
    {
        const auto nll = [&](const Eigen::VectorXd& q) {
            double acc = 0.0;
            const double sigma = std::exp(q[1]);
            for (double yv : data.y) acc -= TruncatedLogistic(q[0], sigma).log_pdf(yv);
            return acc / static_cast<double>(n);
        };
        const auto grad = [&](const Eigen::VectorXd& q) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
            const double sigma = std::exp(q[1]);
            for (double yv : data.y) {
                double dmu, deta;
                tlogis_nll_gradient(q[0], sigma, yv, dmu, deta);
                g[0] += dmu;
                g[1] += deta;
            }
            return (g / static_cast<double>(n)).eval();
        };
        Eigen::VectorXd init(2);
        init << mean_of(data.y), std::log(std::max(sd_of(data.y) * 0.55, 1e-3));
        const auto res = minimize_score(nll, init, grad);
        coef.a = res.x[0];
        coef.c = res.x[1];
    }

    // linear predictors maintained incrementally across boosting updates
    std::vector<double> mu(n, coef.a), eta(n, coef.c), g_mu(n), g_eta(n);
    const auto mean_nll = [&]() {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            acc -= TruncatedLogistic(mu[j], std::exp(eta[j])).log_pdf(data.y[j]);
        return acc / static_cast<double>(n);
    };
    double nll_cur = mean_nll();

    const auto count_nonzero = [&]() {
        int k = 0;
        for (double v : coef.b) k += (v != 0.0);
        for (double v : coef.d) k += (v != 0.0);
        return k;
    };
    const auto aic_of = [&](double mean_nll) {
        return 2.0 * mean_nll * static_cast<double>(n) + 2.0 * (count_nonzero() + 2);
    };

    GbmCoefficients best = coef;
    best.aic = aic_of(nll_cur);
    best.aic_iteration = 0;

    for (int it = 1; it <= hyper.max_iterations; ++it) {
        for (std::size_t j = 0; j < n; ++j)
            tlogis_nll_gradient(mu[j], std::exp(eta[j]), data.y[j], g_mu[j], g_eta[j]);

        // select the coefficient whose predictor correlates most with the
        // gradient of its link
        const auto correlation = [&](const std::vector<double>& x, const std::vector<double>& g) {
            double sx = 0, sg = 0, sxx = 0, sgg = 0, sxg = 0;
            for (std::size_t j = 0; j < n; ++j) {
                sx += x[j];
                sg += g[j];
                sxx += x[j] * x[j];
                sgg += g[j] * g[j];
                sxg += x[j] * g[j];
            }
            const double nx = static_cast<double>(n);
            const double var_x = sxx - sx * sx / nx;
            const double var_g = sgg - sg * sg / nx;
            if (var_x <= 0.0 || var_g <= 0.0) return 0.0;
            return (sxg - sx * sg / nx) / std::sqrt(var_x * var_g);
        };
        int best_i = -1;
        bool best_is_scale = false;
        double best_cor = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            const double cl = correlation(data.cols[i], g_mu);
            const double cs = correlation(data.cols[i], g_eta);
            if (std::abs(cl) > std::abs(best_cor)) {
                best_cor = cl;
                best_i = static_cast<int>(i);
                best_is_scale = false;
            }
            if (std::abs(cs) > std::abs(best_cor)) {
                best_cor = cs;
                best_i = static_cast<int>(i);
                best_is_scale = true;
            }
        }
        if (best_i < 0 || std::abs(best_cor) < 1e-12) break;

        // gradient coordinate of the mean NLL w.r.t. the selected coefficient
        const auto& x = data.cols[static_cast<std::size_t>(best_i)];
        const auto& g = best_is_scale ? g_eta : g_mu;
        double coord = 0.0;
        for (std::size_t j = 0; j < n; ++j) coord += x[j] * g[j];
        coord /= static_cast<double>(n);

        double delta = -hyper.step * coord;
        double& target = best_is_scale ? coef.d[static_cast<std::size_t>(best_i)]
                                       : coef.b[static_cast<std::size_t>(best_i)];
        auto& linpred = best_is_scale ? eta : mu;
        // halve on non-finite likelihood or any increase, so the training
        // negative log-likelihood is non-increasing along the path
        bool applied = false;
        for (int halve = 0; halve < 8; ++halve) {
            target += delta;
            for (std::size_t j = 0; j < n; ++j) linpred[j] += delta * x[j];
            const double nll_new = mean_nll();
            if (std::isfinite(nll_new) && nll_new <= nll_cur + 1e-13) {
                nll_cur = nll_new;
                applied = true;
                break;
            }
            target -= delta;
            for (std::size_t j = 0; j < n; ++j) linpred[j] -= delta * x[j];
            delta *= 0.5;
        }
        if (!applied) {
            coef.step_warning = true;
            break;
        }
        coef.history.push_back(
            {it, std::string(best_is_scale ? "d:" : "b:") + data.names[static_cast<std::size_t>(best_i)],
             delta});

        const double aic = aic_of(nll_cur);
        if (aic < best.aic) {
            best = coef;
            best.aic = aic;
            best.aic_iteration = it;
        }
    }
    best.history = coef.history;  // full selection path
    return best;
}

inline TruncatedLogistic predict_emos_gb(const GbmCoefficients& coef,
                                         const std::map<std::string, double>& standardized) {
    double mu = coef.a, eta = coef.c;
    for (std::size_t i = 0; i < coef.predictors.size(); ++i) {
        if (coef.b[i] == 0.0 && coef.d[i] == 0.0) continue;
        const auto it = standardized.find(coef.predictors[i]);
        if (it == standardized.end())
            throw std::invalid_argument("predict_emos_gb: missing predictor '" +
                                        coef.predictors[i] + "'");
        mu += coef.b[i] * it->second;
        eta += coef.d[i] * it->second;
    }
    return TruncatedLogistic(mu, std::exp(eta));
}

// absolute-coefficient importance tables, nonzero entries sorted descending
struct GbmImportance {
    std::vector<std::pair<std::string, double>> location;
    std::vector<std::pair<std::string, double>> scale;
};

inline GbmImportance gbm_coefficient_importance(const GbmCoefficients& coef) {
    GbmImportance imp;
    for (std::size_t i = 0; i < coef.predictors.size(); ++i) {
        if (coef.b[i] != 0.0) imp.location.push_back({coef.predictors[i], std::abs(coef.b[i])});
        if (coef.d[i] != 0.0) imp.scale.push_back({coef.predictors[i], std::abs(coef.d[i])});
    }
    const auto by_value = [](const auto& x, const auto& y) { return x.second > y.second; };
    std::sort(imp.location.begin(), imp.location.end(), by_value);
    std::sort(imp.scale.begin(), imp.scale.end(), by_value);
    return imp;
}

// ---------------------------------------------------------------------------
// Local model container with per-key standardizer
// ---------------------------------------------------------------------------
struct GbmModel {
    struct Entry {
        GbmCoefficients coefficients;
        Standardizer standardizer;
    };
    std::map<std::pair<int, int>, Entry> entries;  // (station, lead)

    const Entry& at(int station, int lead) const {
        const auto it = entries.find({station, lead});
        if (it == entries.end())
            throw std::out_of_range("GbmModel: no fit for station " + std::to_string(station) +
                                    ", lead " + std::to_string(lead));
        return it->second;
    }

    TruncatedLogistic predict(const ForecastCase& c) const;

    json to_json() const {
        json keys = json::array();
        for (const auto& [key, e] : entries) {
            json jb = json::object(), jd = json::object();
            for (std::size_t i = 0; i < e.coefficients.predictors.size(); ++i) {
                if (e.coefficients.b[i] != 0.0) jb[e.coefficients.predictors[i]] = e.coefficients.b[i];
                if (e.coefficients.d[i] != 0.0) jd[e.coefficients.predictors[i]] = e.coefficients.d[i];
            }
            json hist = json::array();
            for (const auto& h : e.coefficients.history)
                hist.push_back({{"iter", h.iteration}, {"coef", h.coefficient}, {"delta", h.delta}});
            keys.push_back({{"station", key.first},
                            {"lead", key.second},
                            {"a", e.coefficients.a},
                            {"c", e.coefficients.c},
                            {"b", jb},
                            {"d", jd},
                            {"predictors", e.coefficients.predictors},
                            {"aic", e.coefficients.aic},
                            {"aic_iteration", e.coefficients.aic_iteration},
                            {"history", hist},
                            {"standardizer", e.standardizer.to_json()}});
        }
        return json{{"method", "emos_gb"}, {"keys", keys}};
    }

    static GbmModel from_json(const json& j) {
        if (j.value("method", "") != "emos_gb")
            throw std::invalid_argument("GbmModel: wrong method tag");
        GbmModel m;
        for (const auto& e : j.at("keys")) {
            Entry entry;
            entry.coefficients.a = e.at("a").get<double>();
            entry.coefficients.c = e.at("c").get<double>();
            entry.coefficients.predictors = e.at("predictors").get<std::vector<std::string>>();
            const std::size_t p = entry.coefficients.predictors.size();
            entry.coefficients.b.assign(p, 0.0);
            entry.coefficients.d.assign(p, 0.0);
            for (std::size_t i = 0; i < p; ++i) {
                const auto& name = entry.coefficients.predictors[i];
                if (e.at("b").contains(name)) entry.coefficients.b[i] = e.at("b").at(name).get<double>();
                if (e.at("d").contains(name)) entry.coefficients.d[i] = e.at("d").at(name).get<double>();
            }
            entry.coefficients.aic = e.value("aic", 0.0);
            entry.coefficients.aic_iteration = e.value("aic_iteration", 0);
            entry.standardizer = Standardizer::from_json(e.at("standardizer"));
            m.entries[{e.at("station").get<int>(), e.at("lead").get<int>()}] = std::move(entry);
        }
        return m;
    }
};

// Feature assembly shared by the machine-learning methods: the gust summary
// statistics plus the stored scalar predictors.
inline std::map<std::string, double> ml_features(const ForecastCase& c) {
    std::map<std::string, double> f = c.predictors;
    f["vmax_mean"] = c.ens_mean();
    f["vmax_sd"] = c.ens_sd();
    return f;
}

inline TruncatedLogistic GbmModel::predict(const ForecastCase& c) const {
    const Entry& e = at(c.station_id, c.lead_time_h);
    std::map<std::string, double> std_features;
    for (const auto& [name, v] : ml_features(c))
        if (e.standardizer.has(name)) std_features[name] = e.standardizer.transform(name, v);
    return predict_emos_gb(e.coefficients, std_features);
}

inline GbmModel fit_emos_gb_model(const std::vector<ForecastCase>& train,
                                  const GbmHyper& hyper = {}) {
    GbmModel model;
    for (const auto& [key, group] : group_by_station_lead(train)) {
        std::map<std::string, std::vector<double>> raw_cols;
        std::vector<double> y;
        for (const auto& c : group) {
            if (!c.observation) continue;
            for (const auto& [name, v] : ml_features(c)) raw_cols[name].push_back(v);
            y.push_back(*c.observation);
        }
        GbmModel::Entry e;
        e.standardizer = Standardizer::fit(raw_cols);
        std::vector<std::string> names;
        std::vector<std::vector<double>> cols;
        for (auto& [name, col] : raw_cols) {
            if (!e.standardizer.has(name)) continue;  // zero-variance dropped
            names.push_back(name);
            auto& sc = cols.emplace_back(std::move(col));
            for (double& v : sc) v = e.standardizer.transform(name, v);
        }
        e.coefficients = fit_emos_gb(names, cols, y, hyper);
        model.entries[key] = std::move(e);
    }
    return model;
}

}  // namespace gustpp
