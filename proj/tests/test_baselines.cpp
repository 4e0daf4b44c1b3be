#include <gtest/gtest.h>

#include "gustpp/baselines.hpp"
#include "gustpp/scoring.hpp"

using namespace gustpp;

namespace {

ForecastCase obs_case(int station, Date d, int lead, double obs) {
    ForecastCase c;
    c.station_id = station;
    c.date = d;
    c.lead_time_h = lead;
    c.ensemble.assign(20, 5.0);
    c.observation = obs;
    return c;
}

}  // namespace

TEST(Epc, OneObservationPerMonthGivesPoolsOfThree) {
    std::vector<ForecastCase> history;
    for (int m = 1; m <= 12; ++m) history.push_back(obs_case(1, {2012, m, 15}, 12, 5.0 + m));
    const auto model = fit_epc(history);
    for (int m = 1; m <= 12; ++m) EXPECT_EQ(model.pool(1, 12, m).size(), 3u) << "month " << m;
}

TEST(Epc, DecemberPoolWrapsCyclically) {
    std::vector<ForecastCase> history;
    history.push_back(obs_case(1, {2012, 11, 15}, 12, 1.0));
    history.push_back(obs_case(1, {2012, 12, 15}, 12, 2.0));
    history.push_back(obs_case(1, {2013, 1, 15}, 12, 3.0));
    history.push_back(obs_case(1, {2012, 6, 15}, 12, 9.0));
    const auto model = fit_epc(history);
    EXPECT_EQ(model.pool(1, 12, 12), (std::vector<double>{1.0, 2.0, 3.0}));
    EXPECT_EQ(model.pool(1, 12, 1), (std::vector<double>{2.0, 3.0}));
}

TEST(Epc, PoolIndependentOfInsertionOrder) {
    std::vector<ForecastCase> history;
    for (int m = 1; m <= 12; ++m)
        for (int rep = 0; rep < 4; ++rep)
            history.push_back(obs_case(2, {2012, m, 1 + rep}, 6, m + rep * 0.25));
    auto shuffled = history;
    Rng rng(5);
    rng.shuffle(shuffled);
    const auto a = fit_epc(history);
    const auto b = fit_epc(shuffled);
    for (int m = 1; m <= 12; ++m) EXPECT_EQ(a.pool(2, 6, m), b.pool(2, 6, m));
}

TEST(Epc, PredictReturnsPoolAndCrpsMatchesHandValue) {
    std::vector<ForecastCase> history;
    history.push_back(obs_case(1, {2012, 5, 1}, 12, 2.0));
    history.push_back(obs_case(1, {2012, 5, 10}, 12, 4.0));
    history.push_back(obs_case(1, {2012, 5, 20}, 12, 6.0));
    const auto model = fit_epc(history);
    const auto f = predict_epc(model, 1, {2013, 5, 7}, 12);
    EXPECT_EQ(f.members, (std::vector<double>{2.0, 4.0, 6.0}));
    EXPECT_NEAR(crps(f, 4.0), 4.0 / 9.0, 1e-14);
}

TEST(Epc, HourOfDayFromLeadTime) {
    EXPECT_EQ(hour_of_day(0), 0);
    EXPECT_EQ(hour_of_day(12), 12);
    EXPECT_EQ(hour_of_day(21), 21);
    std::vector<ForecastCase> history{obs_case(1, {2012, 5, 1}, 6, 3.0)};
    const auto model = fit_epc(history);
    EXPECT_NO_THROW(model.pool(1, 6, 5));
    EXPECT_THROW(model.pool(1, 7, 5), std::out_of_range);
}

TEST(Epc, MissingKeyNamesKey) {
    std::vector<ForecastCase> history{obs_case(1, {2012, 5, 1}, 6, 3.0)};
    const auto model = fit_epc(history);
    try {
        predict_epc(model, 9, {2013, 5, 7}, 6);
        FAIL() << "expected out_of_range";
    } catch (const std::out_of_range& e) {
        EXPECT_NE(std::string(e.what()).find("station 9"), std::string::npos);
    }
}

TEST(Epc, EmptyHistoryThrows) {
    EXPECT_THROW(fit_epc({}), std::invalid_argument);
    ForecastCase no_obs = obs_case(1, {2012, 5, 1}, 6, 3.0);
    no_obs.observation.reset();
    EXPECT_THROW(fit_epc({no_obs}), std::invalid_argument);
}

TEST(Epc, CalibratedOnStationaryClimate) {
    // stationary per-station climate: EPC is calibrated by construction
    Rng rng(71);
    std::vector<ForecastCase> history, eval;
    const std::vector<int> leads = {0, 6, 12, 18};
    for (int s = 1; s <= 5; ++s) {
        const TruncatedLogistic climate(7.0 + s, 2.0);
        for (Date d{2010, 1, 1}; d.year < 2016; d = d.next_day())
            for (int h : leads) {
                auto c = obs_case(s, d, h, climate.sample(rng));
                (d.year < 2015 ? history : eval).push_back(c);
            }
    }
    const auto model = fit_epc(history);
    int covered = 0;
    std::vector<int> bins(20, 0);
    for (const auto& c : eval) {
        const auto f = predict_epc(model, c.station_id, c.date, c.lead_time_h);
        const auto m = pi_metrics(ProbForecast(f), *c.observation);
        covered += m.covered;
        const double lo = f.cdf_left(*c.observation), hi = f.cdf(*c.observation);
        const double u = std::min(lo + (hi - lo) * rng.uniform(), 0.999999999);
        bins[static_cast<int>(u * 20)]++;
    }
    const double n = static_cast<double>(eval.size());
    EXPECT_GT(n, 7000);
    EXPECT_NEAR(covered / n, 19.0 / 21.0, 0.02);
    const double expect = n / 20.0;
    double chi2 = 0.0;
    for (int k = 0; k < 20; ++k) chi2 += (bins[k] - expect) * (bins[k] - expect) / expect;
    EXPECT_LT(chi2, chi2_critical(19, 0.05));
}

TEST(Raw, IdentityWrapperPreservesOrder) {
    ForecastCase c = obs_case(3, {2012, 7, 1}, 9, 8.0);
    for (int i = 0; i < 20; ++i) c.ensemble[i] = 20.0 - i;
    const auto f = raw_ensemble_forecast(c);
    EXPECT_EQ(f.members, c.ensemble);
}

TEST(Raw, CrpsMatchesOracle) {
    Rng rng(73);
    ForecastCase c = obs_case(1, {2012, 7, 1}, 9, 8.0);
    for (double& v : c.ensemble) v = rng.uniform(2.0, 18.0);
    const auto f = raw_ensemble_forecast(c);
    EXPECT_NEAR(crps(f, 8.0), crps_numeric_oracle(ProbForecast(f), 8.0), 1e-7);
}
