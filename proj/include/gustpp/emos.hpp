#pragma once

// Local, seasonal EMOS with a truncated-logistic predictive distribution.
// Links: mu = a + exp(b_tilde) * ens_mean, sigma = exp(c + d * log s(x)),
// fitted per (station, lead time, month) on a cyclic three-month window by
// minimizing the mean CRPS with analytic gradients.

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gustpp/dataset.hpp"
#include "gustpp/optimize.hpp"
#include "gustpp/scoring.hpp"

namespace gustpp {

inline constexpr double kSpreadFloor = 1e-4;  // s(x) floor before the log link
inline constexpr int kMinSeasonalCases = 30;

// cyclic window {m-1, m, m+1}
inline std::array<int, 3> seasonal_window(int month) {
    if (month < 1 || month > 12) throw std::invalid_argument("seasonal_window: month in 1..12");
    return {cyclic_month(month - 1), month, cyclic_month(month + 1)};
}

inline bool in_seasonal_window(int case_month, int model_month) {
    const auto w = seasonal_window(model_month);
    return case_month == w[0] || case_month == w[1] || case_month == w[2];
}

struct EmosCoefficients {
    double a = 0.0;
    double b_tilde = 0.0;
    double c = 0.0;
    double d = 0.0;
    double b() const { return std::exp(b_tilde); }
};

struct EmosFitResult {
    EmosCoefficients coefficients;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool used_fallback = false;
};

namespace detail {

struct EmosCaseStats {
    double ens_mean;
    double log_spread;
    double y;
};

inline std::vector<EmosCaseStats> emos_stats(const std::vector<ForecastCase>& cases) {
    std::vector<EmosCaseStats> s;
    s.reserve(cases.size());
    for (const auto& c : cases) {
        if (!c.observation) continue;
        s.push_back({c.ens_mean(), std::log(std::max(c.ens_sd(), kSpreadFloor)), *c.observation});
    }
    return s;
}

}  // namespace detail

inline EmosFitResult fit_emos(const std::vector<ForecastCase>& cases) {
    const auto stats = detail::emos_stats(cases);
    if (static_cast<int>(stats.size()) < kMinSeasonalCases)
        throw std::invalid_argument("fit_emos: need at least " + std::to_string(kMinSeasonalCases) +
                                    " cases with observations, got " + std::to_string(stats.size()));
    const double n = static_cast<double>(stats.size());

    const auto loss = [&](const Eigen::VectorXd& p) {
        const double b = std::exp(p[1]);
        double acc = 0.0;
        for (const auto& s : stats) {
            const double mu = p[0] + b * s.ens_mean;
            const double sigma = std::exp(p[2] + p[3] * s.log_spread);
            acc += crps(TruncatedLogistic(mu, sigma), s.y);
        }
        return acc / n;
    };
    const auto grad = [&](const Eigen::VectorXd& p) {
        const double b = std::exp(p[1]);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
        for (const auto& s : stats) {
            const double mu = p[0] + b * s.ens_mean;
            const double sigma = std::exp(p[2] + p[3] * s.log_spread);
            double dmu, dsigma;
            crps_gradient(TruncatedLogistic(mu, sigma), s.y, dmu, dsigma);
            g[0] += dmu;
            g[1] += dmu * b * s.ens_mean;
            g[2] += dsigma * sigma;
            g[3] += dsigma * sigma * s.log_spread;
        }
        return (g / n).eval();
    };

    Eigen::VectorXd init = Eigen::VectorXd::Zero(4);
    const auto res = minimize_score(loss, init, grad);
    EmosFitResult out;
    out.coefficients = {res.x[0], res.x[1], res.x[2], res.x[3]};
    out.initial_loss = loss(init);
    out.final_loss = res.loss;
    out.used_fallback = res.used_fallback;
    return out;
}

inline TruncatedLogistic predict_emos(const EmosCoefficients& coef, const ForecastCase& c) {
    const double mu = coef.a + coef.b() * c.ens_mean();
    const double sigma = std::exp(coef.c + coef.d * std::log(std::max(c.ens_sd(), kSpreadFloor)));
    return TruncatedLogistic(mu, sigma);
}

// ---------------------------------------------------------------------------
// Model container: one coefficient set per (station, lead, month); months with
// fewer than 30 window cases share the station/lead all-months fit.
// ---------------------------------------------------------------------------
struct EmosModel {
    struct Key {
        int station;
        int lead;
        int month;
        auto operator<=>(const Key&) const = default;
    };
    std::map<Key, EmosCoefficients> coefficients;

    const EmosCoefficients& at(int station, int lead, int month) const {
        const auto it = coefficients.find(Key{station, lead, month});
        if (it == coefficients.end())
            throw std::out_of_range("EmosModel: no coefficients for station " +
                                    std::to_string(station) + ", lead " + std::to_string(lead) +
                                    ", month " + std::to_string(month));
        return it->second;
    }

    TruncatedLogistic predict(const ForecastCase& c) const {
        return predict_emos(at(c.station_id, c.lead_time_h, c.date.month), c);
    }

    json to_json() const {
        json keys = json::array();
        for (const auto& [k, v] : coefficients)
            keys.push_back({{"station", k.station},
                            {"lead", k.lead},
                            {"month", k.month},
                            {"a", v.a},
                            {"b_tilde", v.b_tilde},
                            {"c", v.c},
                            {"d", v.d}});
        return json{{"method", "emos"}, {"keys", keys}};
    }

    static EmosModel from_json(const json& j) {
        if (j.value("method", "") != "emos") throw std::invalid_argument("EmosModel: wrong method tag");
        EmosModel m;
        for (const auto& e : j.at("keys"))
            m.coefficients[{e.at("station").get<int>(), e.at("lead").get<int>(),
                            e.at("month").get<int>()}] = {e.at("a").get<double>(),
                                                          e.at("b_tilde").get<double>(),
                                                          e.at("c").get<double>(),
                                                          e.at("d").get<double>()};
        return m;
    }
};

// Grouping helper shared by the local seasonal methods.
inline std::map<std::pair<int, int>, std::vector<ForecastCase>> group_by_station_lead(
    const std::vector<ForecastCase>& cases) {
    std::map<std::pair<int, int>, std::vector<ForecastCase>> groups;
    for (const auto& c : cases) groups[{c.station_id, c.lead_time_h}].push_back(c);
    return groups;
}

// Fit the full local seasonal EMOS model.
inline EmosModel fit_emos_model(const std::vector<ForecastCase>& train) {
    EmosModel model;
    for (const auto& [key, group] : group_by_station_lead(train)) {
        const auto [station, lead] = key;
        EmosCoefficients all_months;
        bool have_all_months = false;
        for (int month = 1; month <= 12; ++month) {
            std::vector<ForecastCase> window;
            for (const auto& c : group)
                if (in_seasonal_window(c.date.month, month) && c.observation) window.push_back(c);
            if (static_cast<int>(window.size()) >= kMinSeasonalCases) {
                model.coefficients[{station, lead, month}] = fit_emos(window).coefficients;
            } else {
                if (!have_all_months) {
                    std::vector<ForecastCase> obs_cases;
                    for (const auto& c : group)
                        if (c.observation) obs_cases.push_back(c);
                    all_months = fit_emos(obs_cases).coefficients;
                    have_all_months = true;
                }
                model.coefficients[{station, lead, month}] = all_months;
            }
        }
    }
    return model;
}

}  // namespace gustpp
