#pragma once

// Non-postprocessed reference forecasts: the raw ensemble and the extended
// probabilistic climatology (EPC), a per-(station, hour, month) pool of past
// observations from a cyclic three-month window.

#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "gustpp/dataset.hpp"
#include "gustpp/distributions.hpp"

namespace gustpp {

inline EnsembleForecast raw_ensemble_forecast(const ForecastCase& c) {
    return EnsembleForecast(c.ensemble);
}

// hour of day for a 00 UTC run
inline int hour_of_day(int lead_time_h) { return lead_time_h % 24; }

struct EpcModel {
    using Key = std::tuple<int, int, int>;  // station, hour, month
    std::map<Key, std::vector<double>> pools;
    std::vector<Key> empty_pools;  // month keys without any window observation

    const std::vector<double>& pool(int station, int hour, int month) const {
        const auto it = pools.find(Key{station, hour, month});
        if (it == pools.end() || it->second.empty())
            throw std::out_of_range("EPC: empty pool for station " + std::to_string(station) +
                                    ", hour " + std::to_string(hour) + ", month " +
                                    std::to_string(month));
        return it->second;
    }
};

inline EpcModel fit_epc(const std::vector<ForecastCase>& history) {
    EpcModel model;
    bool any = false;
    std::map<std::pair<int, int>, bool> station_hours;
    for (const auto& c : history) {
        if (!c.observation) continue;
        any = true;
        const int hour = hour_of_day(c.lead_time_h);
        station_hours[{c.station_id, hour}] = true;
        // an observation from month M belongs to the windows of M-1, M, M+1
        for (int dm = -1; dm <= 1; ++dm) {
            const int m = cyclic_month(c.date.month + dm);
            model.pools[EpcModel::Key{c.station_id, hour, m}].push_back(*c.observation);
        }
    }
    if (!any) throw std::invalid_argument("fit_epc: no observations in history");
    for (auto& [key, pool] : model.pools) std::sort(pool.begin(), pool.end());
    for (const auto& [sh, one] : station_hours)
        for (int m = 1; m <= 12; ++m) {
            const EpcModel::Key key{sh.first, sh.second, m};
            if (!model.pools.count(key)) model.empty_pools.push_back(key);
        }
    return model;
}

inline EnsembleForecast predict_epc(const EpcModel& model, int station, const Date& date,
                                    int lead_time_h) {
    return EnsembleForecast(model.pool(station, hour_of_day(lead_time_h), date.month));
}

}  // namespace gustpp
