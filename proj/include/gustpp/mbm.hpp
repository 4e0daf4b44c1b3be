#pragma once

// Member-by-member postprocessing with the four-sub-ensemble extension:
//   x~_i = (a + b_k(i) m_k(i)) + (c + d_k(i) / delta_k(i)) (x_i - m_k(i))
// where m_k and delta_k are the mean and mean absolute difference of the
// sub-ensemble containing member i. Fitted by minimizing the CRPS of the
// adjusted ensemble; training scheme (local, seasonal) shared with EMOS.

#include <array>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "gustpp/emos.hpp"

namespace gustpp {

inline constexpr double kDeltaFloor = 1e-4;  // sub-ensemble mean-difference floor

struct MbmCoefficients {
    double a = 0.0;
    std::array<double, 4> b = {1.0, 1.0, 1.0, 1.0};
    double c = 1.0;
    std::array<double, 4> d = {0.0, 0.0, 0.0, 0.0};

    Eigen::VectorXd pack() const {
        Eigen::VectorXd p(10);
        p << a, b[0], b[1], b[2], b[3], c, d[0], d[1], d[2], d[3];
        return p;
    }
    static MbmCoefficients unpack(const Eigen::VectorXd& p) {
        MbmCoefficients m;
        m.a = p[0];
        for (int k = 0; k < 4; ++k) m.b[k] = p[1 + k];
        m.c = p[5];
        for (int k = 0; k < 4; ++k) m.d[k] = p[6 + k];
        return m;
    }
};

namespace detail {

struct SubEnsembleStats {
    std::array<double, 4> mean;
    std::array<double, 4> delta;  // floored mean absolute difference
};

inline SubEnsembleStats sub_stats(const std::vector<double>& ens) {
    SubEnsembleStats s{};
    for (int k = 0; k < kSubEnsembles; ++k) {
        const int base = k * kSubEnsembleSize;
        double m = 0.0;
        for (int i = 0; i < kSubEnsembleSize; ++i) m += ens[base + i];
        s.mean[k] = m / kSubEnsembleSize;
        double dd = 0.0;
        for (int i = 0; i < kSubEnsembleSize; ++i)
            for (int l = 0; l < kSubEnsembleSize; ++l) dd += std::abs(ens[base + i] - ens[base + l]);
        s.delta[k] = std::max(dd / (kSubEnsembleSize * kSubEnsembleSize), kDeltaFloor);
    }
    return s;
}

}  // namespace detail

inline std::vector<double> mbm_transform(const MbmCoefficients& coef,
                                         const std::vector<double>& ensemble) {
    if (static_cast<int>(ensemble.size()) != kEnsembleSize)
        throw std::invalid_argument("mbm_transform: needs a 20-member ensemble");
    const auto s = detail::sub_stats(ensemble);
    std::vector<double> out(ensemble.size());
    for (int i = 0; i < kEnsembleSize; ++i) {
        const int k = sub_ensemble_of(i) - 1;
        const double gamma = coef.c + coef.d[k] / s.delta[k];
        out[i] = (coef.a + coef.b[k] * s.mean[k]) + gamma * (ensemble[i] - s.mean[k]);
    }
    return out;
}

struct MbmFitResult {
    MbmCoefficients coefficients;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool used_fallback = false;
};

// CRPS of the adjusted ensemble, averaged over cases. The gradient is the
// almost-everywhere subgradient of the piecewise-linear loss.
inline MbmFitResult fit_mbm(const std::vector<ForecastCase>& cases) {
    struct CaseData {
        std::vector<double> ens;
        detail::SubEnsembleStats stats;
        double y;
    };
    std::vector<CaseData> data;
    for (const auto& c : cases)
        if (c.observation) data.push_back({c.ensemble, detail::sub_stats(c.ensemble), *c.observation});
    if (static_cast<int>(data.size()) < kMinSeasonalCases)
        throw std::invalid_argument("fit_mbm: need at least " + std::to_string(kMinSeasonalCases) +
                                    " cases with observations, got " + std::to_string(data.size()));
    const double n = static_cast<double>(data.size());
    const double m = kEnsembleSize;

    const auto transform_into = [&](const MbmCoefficients& coef, const CaseData& cd,
                                    std::array<double, kEnsembleSize>& xt) {
        for (int i = 0; i < kEnsembleSize; ++i) {
            const int k = sub_ensemble_of(i) - 1;
            const double gamma = coef.c + coef.d[k] / cd.stats.delta[k];
            xt[i] = (coef.a + coef.b[k] * cd.stats.mean[k]) + gamma * (cd.ens[i] - cd.stats.mean[k]);
        }
    };

    const auto loss = [&](const Eigen::VectorXd& p) {
        const auto coef = MbmCoefficients::unpack(p);
        std::array<double, kEnsembleSize> xt;
        double acc = 0.0;
        for (const auto& cd : data) {
            transform_into(coef, cd, xt);
            double mae = 0.0, delta = 0.0;
            for (int i = 0; i < kEnsembleSize; ++i) {
                mae += std::abs(xt[i] - cd.y);
                for (int l = 0; l < kEnsembleSize; ++l) delta += std::abs(xt[i] - xt[l]);
            }
            acc += mae / m - delta / (2.0 * m * m);
        }
        return acc / n;
    };

    const auto grad = [&](const Eigen::VectorXd& p) {
        const auto coef = MbmCoefficients::unpack(p);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(10);
        std::array<double, kEnsembleSize> xt;
        const auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        for (const auto& cd : data) {
            transform_into(coef, cd, xt);
            for (int i = 0; i < kEnsembleSize; ++i) {
                double pair_sign = 0.0;
                for (int l = 0; l < kEnsembleSize; ++l) pair_sign += sgn(xt[i] - xt[l]);
                const double gi = sgn(xt[i] - cd.y) / m - pair_sign / (m * m);
                const int k = sub_ensemble_of(i) - 1;
                const double dev = cd.ens[i] - cd.stats.mean[k];
                g[0] += gi;
                g[1 + k] += gi * cd.stats.mean[k];
                g[5] += gi * dev;
                g[6 + k] += gi * dev / cd.stats.delta[k];
            }
        }
        return (g / n).eval();
    };

    // optimize in scaled coordinates: sensitivities of b_k scale with the
    // ensemble-mean level and of d_k with 1/delta, which conditions the
    // quasi-Newton iteration poorly otherwise
    double mean_level = 0.0, mean_delta = 0.0;
    for (const auto& cd : data)
        for (int k = 0; k < 4; ++k) {
            mean_level += cd.stats.mean[k];
            mean_delta += cd.stats.delta[k];
        }
    mean_level = std::max(mean_level / (4.0 * n), 1e-3);
    mean_delta = std::max(mean_delta / (4.0 * n), kDeltaFloor);
    Eigen::VectorXd w(10);
    w << 1.0, 1.0 / mean_level, 1.0 / mean_level, 1.0 / mean_level, 1.0 / mean_level, 1.0,
        mean_delta, mean_delta, mean_delta, mean_delta;

    const auto scaled_loss = [&](const Eigen::VectorXd& q) {
        return loss((q.array() * w.array()).matrix());
    };
    const auto scaled_grad = [&](const Eigen::VectorXd& q) {
        return (grad((q.array() * w.array()).matrix()).array() * w.array()).matrix().eval();
    };

    const MbmCoefficients identity;
    const Eigen::VectorXd q0 = (identity.pack().array() / w.array()).matrix();
    const auto res = minimize_score(scaled_loss, q0, scaled_grad);
    MbmFitResult out;
    out.coefficients = MbmCoefficients::unpack((res.x.array() * w.array()).matrix());
    out.initial_loss = loss(identity.pack());
    out.final_loss = res.loss;
    out.used_fallback = res.used_fallback;
    return out;
}

inline EnsembleForecast predict_mbm(const MbmCoefficients& coef, const ForecastCase& c) {
    return EnsembleForecast(mbm_transform(coef, c.ensemble));
}

struct MbmModel {
    using Key = EmosModel::Key;
    std::map<Key, MbmCoefficients> coefficients;

    const MbmCoefficients& at(int station, int lead, int month) const {
        const auto it = coefficients.find(Key{station, lead, month});
        if (it == coefficients.end())
            throw std::out_of_range("MbmModel: no coefficients for station " +
                                    std::to_string(station) + ", lead " + std::to_string(lead) +
                                    ", month " + std::to_string(month));
        return it->second;
    }

    EnsembleForecast predict(const ForecastCase& c) const {
        return predict_mbm(at(c.station_id, c.lead_time_h, c.date.month), c);
    }

    json to_json() const {
        json keys = json::array();
        for (const auto& [k, v] : coefficients)
            keys.push_back({{"station", k.station},
                            {"lead", k.lead},
                            {"month", k.month},
                            {"a", v.a},
                            {"b1", v.b[0]},
                            {"b2", v.b[1]},
                            {"b3", v.b[2]},
                            {"b4", v.b[3]},
                            {"c", v.c},
                            {"d1", v.d[0]},
                            {"d2", v.d[1]},
                            {"d3", v.d[2]},
                            {"d4", v.d[3]}});
        return json{{"method", "mbm"}, {"keys", keys}};
    }

    static MbmModel from_json(const json& j) {
        if (j.value("method", "") != "mbm") throw std::invalid_argument("MbmModel: wrong method tag");
        MbmModel m;
        for (const auto& e : j.at("keys")) {
            MbmCoefficients v;
            v.a = e.at("a").get<double>();
            v.b = {e.at("b1").get<double>(), e.at("b2").get<double>(), e.at("b3").get<double>(),
                   e.at("b4").get<double>()};
            v.c = e.at("c").get<double>();
            v.d = {e.at("d1").get<double>(), e.at("d2").get<double>(), e.at("d3").get<double>(),
                   e.at("d4").get<double>()};
            m.coefficients[{e.at("station").get<int>(), e.at("lead").get<int>(),
                            e.at("month").get<int>()}] = v;
        }
        return m;
    }
};

inline MbmModel fit_mbm_model(const std::vector<ForecastCase>& train) {
    MbmModel model;
    for (const auto& [key, group] : group_by_station_lead(train)) {
        const auto [station, lead] = key;
        MbmCoefficients all_months;
        bool have_all_months = false;
        for (int month = 1; month <= 12; ++month) {
            std::vector<ForecastCase> window;
            for (const auto& c : group)
                if (in_seasonal_window(c.date.month, month) && c.observation) window.push_back(c);
            if (static_cast<int>(window.size()) >= kMinSeasonalCases) {
                model.coefficients[{station, lead, month}] = fit_mbm(window).coefficients;
            } else {
                if (!have_all_months) {
                    std::vector<ForecastCase> obs_cases;
                    for (const auto& c : group)
                        if (c.observation) obs_cases.push_back(c);
                    all_months = fit_mbm(obs_cases).coefficients;
                    have_all_months = true;
                }
                model.coefficients[{station, lead, month}] = all_months;
            }
        }
    }
    return model;
}

}  // namespace gustpp
