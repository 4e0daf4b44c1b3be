#include <gtest/gtest.h>

#include "gustpp/gbm.hpp"
#include "gustpp/scoring.hpp"

using namespace gustpp;

namespace {

struct PlantedData {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;  // standardized-ish (iid normal)
    std::vector<double> y;
};

// y depends only on column `signal` through the location
PlantedData planted(int n, int p, int signal, double strength, std::uint64_t seed) {
    PlantedData d;
    Rng rng(seed);
    d.cols.assign(p, std::vector<double>(n));
    for (int i = 0; i < p; ++i) {
        d.names.push_back("x" + std::to_string(i));
        for (int j = 0; j < n; ++j) d.cols[i][j] = rng.normal();
    }
    for (int j = 0; j < n; ++j) {
        const double mu = 8.0 + strength * d.cols[signal][j];
        d.y.push_back(TruncatedLogistic(mu, 1.0).sample(rng));
    }
    return d;
}

}  // namespace

TEST(TlogisNll, GradientMatchesFiniteDifferences) {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double mu = rng.uniform(-2.0, 14.0);
        const double eta = rng.uniform(-1.5, 1.5);
        const double y = rng.uniform(0.05, 25.0);
        double dmu, deta;
        tlogis_nll_gradient(mu, std::exp(eta), y, dmu, deta);
        const double h = 1e-6;
        const auto nll = [&](double m, double e) {
            return -TruncatedLogistic(m, std::exp(e)).log_pdf(y);
        };
        EXPECT_NEAR(dmu, (nll(mu + h, eta) - nll(mu - h, eta)) / (2 * h),
                    1e-5 * std::max(1.0, std::abs(dmu)));
        EXPECT_NEAR(deta, (nll(mu, eta + h) - nll(mu, eta - h)) / (2 * h),
                    1e-5 * std::max(1.0, std::abs(deta)));
    }
}

TEST(FitEmosGb, PlantedPredictorSelectedFirstNoiseNegligible) {
    // noise coefficients may enter late in the AIC-optimal path but stay
    // negligible against the planted signal
    int good = 0;
    const int runs = 10;
    for (int seed = 0; seed < runs; ++seed) {
        const auto d = planted(5000, 8, 3, 2.0, 100 + seed);
        const auto coef = fit_emos_gb(d.names, d.cols, d.y);
        bool ok = !coef.history.empty() && coef.history.front().coefficient == "b:x3";
        ok = ok && std::abs(coef.b[3] - 2.0) < 0.15;
        for (int i = 0; i < 8 && ok; ++i)
            if (i != 3 && std::abs(coef.b[i]) > 0.05 * std::abs(coef.b[3])) ok = false;
        good += ok;
    }
    EXPECT_GE(good, 9) << "planted-signal recovery failed in " << runs - good << "/" << runs;
}

TEST(FitEmosGb, AllNoiseGivesNearInterceptOnlyModel) {
    Rng rng(77);
    const int n = 2000, p = 8;
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols(p, std::vector<double>(n));
    for (int i = 0; i < p; ++i) {
        names.push_back("x" + std::to_string(i));
        for (int j = 0; j < n; ++j) cols[i][j] = rng.normal();
    }
    std::vector<double> y(n);
    for (int j = 0; j < n; ++j) y[j] = TruncatedLogistic(8.0, 1.5).sample(rng);
    const auto coef = fit_emos_gb(names, cols, y);
    int nonzero = 0;
    for (int i = 0; i < p; ++i) nonzero += (coef.b[i] != 0.0) + (coef.d[i] != 0.0);
    EXPECT_LE(nonzero, 2);
}

TEST(FitEmosGb, ZeroIterationsGivesInterceptOnly) {
    const auto d = planted(200, 4, 1, 2.0, 5);
    GbmHyper hyper;
    hyper.max_iterations = 0;
    const auto coef = fit_emos_gb(d.names, d.cols, d.y, hyper);
    for (double v : coef.b) EXPECT_EQ(v, 0.0);
    for (double v : coef.d) EXPECT_EQ(v, 0.0);
    const auto imp = gbm_coefficient_importance(coef);
    EXPECT_TRUE(imp.location.empty());
    EXPECT_TRUE(imp.scale.empty());
    // intercepts sit at the unconditional MLE: gradient approximately zero
    double g_mu = 0.0, g_eta = 0.0;
    for (std::size_t j = 0; j < d.y.size(); ++j) {
        double dmu, deta;
        tlogis_nll_gradient(coef.a, std::exp(coef.c), d.y[j], dmu, deta);
        g_mu += dmu;
        g_eta += deta;
    }
    EXPECT_LT(std::abs(g_mu / d.y.size()), 1e-5);
    EXPECT_LT(std::abs(g_eta / d.y.size()), 1e-5);
}

TEST(FitEmosGb, NllNonIncreasingAlongPathAndSparsityBound) {
    const auto d = planted(1500, 6, 2, 1.5, 11);
    const auto coef = fit_emos_gb(d.names, d.cols, d.y);
    // replay the selection history and check the training NLL never rises
    GbmCoefficients replay;
    replay.predictors = d.names;
    replay.b.assign(6, 0.0);
    replay.d.assign(6, 0.0);
    replay.a = coef.a;
    replay.c = coef.c;
    detail::GbmData data{d.names, d.cols, d.y};
    double prev = detail::gbm_mean_nll(data, replay);
    for (const auto& h : coef.history) {
        const std::string name = h.coefficient.substr(2);
        const std::size_t i = std::find(d.names.begin(), d.names.end(), name) - d.names.begin();
        (h.coefficient[0] == 'b' ? replay.b[i] : replay.d[i]) += h.delta;
        const double cur = detail::gbm_mean_nll(data, replay);
        ASSERT_LE(cur, prev + 1e-11);
        prev = cur;
    }
    int nonzero = 0;
    for (double v : coef.b) nonzero += (v != 0.0);
    for (double v : coef.d) nonzero += (v != 0.0);
    EXPECT_LE(nonzero, static_cast<int>(coef.history.size()));
}

TEST(PredictEmosGb, InterceptOnlyIsUnconditionalAndSigmaPositive) {
    const auto d = planted(300, 4, 0, 1.0, 17);
    GbmHyper hyper;
    hyper.max_iterations = 0;
    const auto coef = fit_emos_gb(d.names, d.cols, d.y, hyper);
    const auto f = predict_emos_gb(coef, {{"x0", 1.7}, {"x1", 0.0}, {"x2", -2.0}, {"x3", 0.5}});
    EXPECT_NEAR(f.mu, coef.a, 1e-12);
    EXPECT_GT(f.sigma, 0.0);
}

TEST(PredictEmosGb, MissingPredictorNamedInError) {
    const auto d = planted(3000, 4, 1, 2.0, 19);
    const auto coef = fit_emos_gb(d.names, d.cols, d.y);
    ASSERT_NE(coef.b[1], 0.0);
    try {
        predict_emos_gb(coef, {{"x0", 0.1}});
        FAIL() << "expected invalid_argument";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos);
    }
}

TEST(PredictEmosGb, CrpsMatchesOracle) {
    const auto d = planted(3000, 4, 1, 2.0, 23);
    const auto coef = fit_emos_gb(d.names, d.cols, d.y);
    const auto f = predict_emos_gb(coef, {{"x0", 0.3}, {"x1", -1.0}, {"x2", 0.9}, {"x3", 0.0}});
    EXPECT_NEAR(crps(f, 7.5), crps_numeric_oracle(ProbForecast(f), 7.5), 1e-6);
}

TEST(GbmImportance, PlantedRanksFirst) {
    const auto d = planted(5000, 8, 3, 2.0, 29);
    const auto coef = fit_emos_gb(d.names, d.cols, d.y);
    const auto imp = gbm_coefficient_importance(coef);
    ASSERT_FALSE(imp.location.empty());
    EXPECT_EQ(imp.location.front().first, "x3");
}

TEST(GbmModel, RescalingARawPredictorKeepsSelectionOrder) {
    ScenarioConfig cfg;
    cfg.n_stations = 1;
    cfg.n_years = 2;
    cfg.lead_times = {12};
    cfg.truth_spec = "planted";
    cfg.rng_seed = 31;
    const auto data = generate_scenario(cfg);
    auto scaled_cases = data.cases;
    for (auto& c : scaled_cases) c.predictors["radiation"] *= 1000.0;
    const auto m1 = fit_emos_gb_model(data.cases);
    const auto m2 = fit_emos_gb_model(scaled_cases);
    const auto& h1 = m1.at(1, 12).coefficients.history;
    const auto& h2 = m2.at(1, 12).coefficients.history;
    const std::size_t k = std::min({h1.size(), h2.size(), std::size_t{10}});
    ASSERT_GT(k, 0u);
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(h1[i].coefficient, h2[i].coefficient);
}

TEST(GbmModel, PlantedScenarioSelectsRadiationAndJsonRoundTrips) {
    ScenarioConfig cfg;
    cfg.n_stations = 2;
    cfg.n_years = 2;
    cfg.lead_times = {12};
    cfg.truth_spec = "planted";
    cfg.rng_seed = 37;
    const auto data = generate_scenario(cfg);
    const auto model = fit_emos_gb_model(data.cases);
    const auto imp = gbm_coefficient_importance(model.at(1, 12).coefficients);
    ASSERT_FALSE(imp.location.empty());
    EXPECT_EQ(imp.location.front().first, "radiation");

    const auto back = GbmModel::from_json(model.to_json());
    const auto& c = data.cases[500];
    const auto f1 = model.predict(c);
    const auto f2 = back.predict(c);
    EXPECT_NEAR(f1.mu, f2.mu, 1e-12);
    EXPECT_NEAR(f1.sigma, f2.sigma, 1e-12);
}
