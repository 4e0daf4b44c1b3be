#include <gtest/gtest.h>

#include "gustpp/idr.hpp"
#include "gustpp/scoring.hpp"

using namespace gustpp;

namespace {

// ----- oracle 1: classic pool-adjacent-violators for total orders -----
// non-increasing (antitonic) weighted least squares fit
std::vector<double> pava_antitonic(const std::vector<double>& z, const std::vector<double>& w) {
    struct Block {
        double sum, weight;
        int count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < z.size(); ++i) {
        blocks.push_back({z[i] * w[i], w[i], 1});
        // merge while the antitonic constraint (non-increasing means) is violated
        while (blocks.size() > 1) {
            const auto& b = blocks[blocks.size() - 1];
            const auto& a = blocks[blocks.size() - 2];
            if (a.sum / a.weight >= b.sum / b.weight) break;
            Block merged{a.sum + b.sum, a.weight + b.weight, a.count + b.count};
            blocks.pop_back();
            blocks.pop_back();
            blocks.push_back(merged);
        }
    }
    std::vector<double> out;
    for (const auto& b : blocks)
        for (int k = 0; k < b.count; ++k) out.push_back(b.sum / b.weight);
    return out;
}

// ----- oracle 2: Dykstra alternating projections for small posets -----
// minimize ||theta - z||^2 subject to theta_u <= theta_v for (u,v) in edges
std::vector<double> dykstra_isotonic(const std::vector<double>& z,
                                     const std::vector<std::pair<int, int>>& edges) {
    std::vector<double> theta = z;
    std::vector<std::array<double, 2>> corr(edges.size(), {0.0, 0.0});
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double max_change = 0.0;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [u, v] = edges[e];
            double pu = theta[u] + corr[e][0];
            double pv = theta[v] + corr[e][1];
            double nu = pu, nv = pv;
            if (pu > pv) {
                const double m = 0.5 * (pu + pv);
                nu = nv = m;
            }
            corr[e][0] = pu - nu;
            corr[e][1] = pv - nv;
            max_change = std::max({max_change, std::abs(theta[u] - nu), std::abs(theta[v] - nv)});
            theta[u] = nu;
            theta[v] = nv;
        }
        if (max_change < 1e-13 && sweep > 50) break;
    }
    return theta;
}

// observation of the raw case behind fit point p (fit points are sorted copies)
double obs_at(const IdrFit& fit, const std::vector<std::vector<double>>& cov,
              const std::vector<double>& obs, int p) {
    for (std::size_t i = 0; i < cov.size(); ++i) {
        std::vector<double> s = cov[i];
        std::sort(s.begin(), s.end());
        if (s == fit.points[static_cast<std::size_t>(p)]) return obs[i];
    }
    throw std::logic_error("obs_at: point not found");
}

}  // namespace

TEST(SdCompare, BasicCases) {
    EXPECT_EQ(sd_compare({1.0, 2.0}, {1.0, 2.0}), SdOrder::Equal);
    EXPECT_EQ(sd_compare({1.0, 2.0}, {2.0, 3.0}), SdOrder::Less);
    EXPECT_EQ(sd_compare({2.0, 3.0}, {1.0, 2.0}), SdOrder::Greater);
    EXPECT_EQ(sd_compare({1.0, 4.0}, {2.0, 3.0}), SdOrder::Incomparable);
    EXPECT_EQ(sd_compare({4.0, 1.0}, {2.0, 3.0}), SdOrder::Incomparable);  // sorts first
    EXPECT_THROW(sd_compare({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST(FitIdr, TotalOrderReducesToPava) {
    // 1-member ensembles: the SD order is the total order on the real line
    Rng rng(101);
    const int n = 200;
    std::vector<std::vector<double>> cov(n);
    std::vector<double> obs(n);
    for (int i = 0; i < n; ++i) {
        cov[i] = {rng.uniform(0.0, 10.0)};
        obs[i] = std::max(0.05, 0.5 * cov[i][0] + rng.normal(2.0, 1.0));
    }
    const auto fit = fit_idr(cov, obs);
    ASSERT_EQ(fit.points.size(), static_cast<std::size_t>(n));  // continuous draws: no ties
    // points are sorted ascending in the covariate
    for (std::size_t t = 0; t < fit.thresholds.size(); t += 17) {
        std::vector<double> z(n), w(n, 1.0);
        for (int p = 0; p < n; ++p) z[p] = (obs_at(fit, cov, obs, p) <= fit.thresholds[t]) ? 1.0 : 0.0;
        const auto oracle = pava_antitonic(z, w);
        for (int p = 0; p < n; ++p) ASSERT_NEAR(fit.cdf[p][t], oracle[p], 1e-10);
    }
}

TEST(FitIdr, IdenticalCovariatesGiveEmpiricalCdf) {
    std::vector<std::vector<double>> cov(6, std::vector<double>{3.0, 4.0});
    std::vector<double> obs = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    const auto fit = fit_idr(cov, obs);
    ASSERT_EQ(fit.points.size(), 1u);
    for (std::size_t t = 0; t < fit.thresholds.size(); ++t)
        EXPECT_NEAR(fit.cdf[0][t], (t + 1) / 6.0, 1e-12);
}

TEST(FitIdr, MatchesBruteForceOnSmallPosets) {
    Rng rng(303);
    for (int instance = 0; instance < 60; ++instance) {
        const int n = 4 + static_cast<int>(rng.uniform_int(5));  // 4..8
        std::vector<std::vector<double>> cov(n);
        std::vector<double> obs(n);
        for (int i = 0; i < n; ++i) {
            cov[i] = {rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)};
            std::sort(cov[i].begin(), cov[i].end());
            obs[i] = rng.uniform(0.0, 6.0);
        }
        const auto fit = fit_idr(cov, obs);
        ASSERT_EQ(fit.points.size(), static_cast<std::size_t>(n));
        // edges for the oracle in fit-point order: theta monotone DECREASING in
        // the covariate, i.e. constraint theta_larger <= theta_smaller
        std::vector<std::pair<int, int>> edges;
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v) {
                if (u == v) continue;
                if (sd_compare_sorted(fit.points[u], fit.points[v]) == SdOrder::Less)
                    edges.push_back({v, u});  // v is larger: theta_v <= theta_u
            }
        for (std::size_t t = 0; t < fit.thresholds.size(); ++t) {
            std::vector<double> z(n);
            for (int p = 0; p < n; ++p) z[p] = (obs_at(fit, cov, obs, p) <= fit.thresholds[t]) ? 1.0 : 0.0;
            const auto oracle = dykstra_isotonic(z, edges);
            for (int p = 0; p < n; ++p)
                ASSERT_NEAR(fit.cdf[p][t], oracle[p], 1e-8)
                    << "instance " << instance << " threshold " << t << " point " << p;
        }
    }
}

TEST(FitIdr, FittedCdfMonotoneInThresholdAndOrder) {
    Rng rng(404);
    const int n = 60;
    std::vector<std::vector<double>> cov(n);
    std::vector<double> obs(n);
    for (int i = 0; i < n; ++i) {
        cov[i] = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)};
        std::sort(cov[i].begin(), cov[i].end());
        obs[i] = std::max(0.05, mean_of(cov[i]) + rng.normal(0.0, 1.0));
    }
    const auto fit = fit_idr(cov, obs);
    for (std::size_t p = 0; p < fit.points.size(); ++p)
        for (std::size_t t = 1; t < fit.thresholds.size(); ++t)
            ASSERT_GE(fit.cdf[p][t], fit.cdf[p][t - 1] - 1e-9);
    for (std::size_t u = 0; u < fit.points.size(); ++u)
        for (std::size_t v = 0; v < fit.points.size(); ++v) {
            if (sd_compare_sorted(fit.points[u], fit.points[v]) != SdOrder::Less) continue;
            for (std::size_t t = 0; t < fit.thresholds.size(); t += 7)
                ASSERT_GE(fit.cdf[u][t], fit.cdf[v][t] - 1e-9);  // antitonic in the order
        }
}

TEST(PredictIdr, TrainingPointReproducesItsCdf) {
    Rng rng(505);
    const int n = 40;
    std::vector<std::vector<double>> cov(n);
    std::vector<double> obs(n);
    for (int i = 0; i < n; ++i) {
        cov[i] = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)};
        std::sort(cov[i].begin(), cov[i].end());
        obs[i] = std::max(0.05, mean_of(cov[i]) + rng.normal(0.0, 1.0));
    }
    const auto fit = fit_idr(cov, obs);
    const auto pred = predict_idr_cdf(fit, fit.points[7]);
    for (std::size_t t = 0; t < fit.thresholds.size(); ++t)
        EXPECT_NEAR(pred[t], fit.cdf[7][t], 1e-12);
}

TEST(PredictIdr, DominatingPointGetsStochasticallyLargestForecast) {
    // three-point chain; a covariate above every training point averages the
    // smallest fitted CDF with the trivial lower bound 0
    std::vector<std::vector<double>> cov = {{1.0}, {2.0}, {3.0}};
    std::vector<double> obs = {1.0, 2.0, 3.0};
    const auto fit = fit_idr(cov, obs);
    const auto pred = predict_idr_cdf(fit, {9.0});  // dominates every training point
    for (std::size_t t = 0; t < fit.thresholds.size(); ++t) {
        double min_cdf = 1.0;
        for (std::size_t p = 0; p < fit.points.size(); ++p)
            min_cdf = std::min(min_cdf, fit.cdf[p][t]);
        EXPECT_NEAR(pred[t], 0.5 * min_cdf, 1e-12);
        for (std::size_t p = 0; p < fit.points.size(); ++p)
            EXPECT_LE(pred[t], fit.cdf[p][t] + 1e-12);  // stochastically largest
    }
}

TEST(PredictIdr, IncomparableToAllUsesPooledCdf) {
    std::vector<std::vector<double>> cov = {{1.0, 5.0}, {2.0, 4.0}};
    std::vector<double> obs = {2.0, 3.0};
    const auto fit = fit_idr(cov, obs);
    const auto pred = predict_idr_cdf(fit, {0.0, 9.0});  // incomparable to both
    for (std::size_t t = 0; t < fit.thresholds.size(); ++t) {
        const double pooled = 0.5 * (fit.cdf[0][t] + fit.cdf[1][t]);
        EXPECT_NEAR(pred[t], pooled, 1e-12);
    }
}

TEST(PredictIdr, InSampleCrpsBeatsUnconditionalCdf) {
    Rng rng(606);
    const int n = 150;
    std::vector<std::vector<double>> cov(n);
    std::vector<double> obs(n);
    for (int i = 0; i < n; ++i) {
        cov[i] = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)};
        std::sort(cov[i].begin(), cov[i].end());
        obs[i] = std::max(0.05, mean_of(cov[i]) + rng.normal(0.0, 1.0));
    }
    const auto fit = fit_idr(cov, obs);
    const DiscreteForecast climo(obs, std::vector<double>(n, 1.0));
    double crps_idr = 0.0, crps_climo = 0.0;
    for (int i = 0; i < n; ++i) {
        crps_idr += crps(predict_idr(fit, cov[i]), obs[i]);
        crps_climo += crps(climo, obs[i]);
    }
    EXPECT_LE(crps_idr, crps_climo + 1e-9);
}

TEST(Subbagging, PredictionIsMeanOfMemberCdfs) {
    ScenarioConfig cfg;
    cfg.n_stations = 1;
    cfg.n_years = 1;
    cfg.lead_times = {12};
    cfg.rng_seed = 7;
    const auto data = generate_scenario(cfg);
    std::vector<ForecastCase> train(data.cases.begin(), data.cases.begin() + 80);
    const auto ens = fit_idr_subbagged(train, 99, 10, 0.5);
    ASSERT_EQ(ens.members.size(), 10u);
    for (const auto& m : ens.members)
        EXPECT_EQ(m.points.size() + 0, 40u);  // half-size subsamples (no ties expected)
    const auto& probe = data.cases[90].ensemble;
    const auto combined = ens.predict(probe);
    for (double z : {4.0, 7.0, 10.0, 13.0}) {
        double mean_cdf = 0.0;
        for (const auto& m : ens.members) mean_cdf += predict_idr(m, probe).cdf(z);
        mean_cdf /= 10.0;
        EXPECT_NEAR(combined.cdf(z), mean_cdf, 1e-9);
    }
}

TEST(Subbagging, AntitonicOverComparableTestPairs) {
    ScenarioConfig cfg;
    cfg.n_stations = 1;
    cfg.n_years = 1;
    cfg.lead_times = {12};
    cfg.rng_seed = 11;
    const auto data = generate_scenario(cfg);
    std::vector<ForecastCase> train(data.cases.begin(), data.cases.begin() + 150);
    const auto ens = fit_idr_subbagged(train, 5, 20, 0.5);
    Rng rng(77);
    // comparable pairs of real held-out covariates (the pooled-CDF fallback for
    // points incomparable to the whole training set is excluded by design)
    int checked = 0;
    while (checked < 1000) {
        const auto& a = data.cases[150 + rng.uniform_int(data.cases.size() - 150)].ensemble;
        const auto& b = data.cases[150 + rng.uniform_int(data.cases.size() - 150)].ensemble;
        const SdOrder o = sd_compare(a, b);
        if (o != SdOrder::Less) continue;
        const auto fa = ens.predict(a);
        const auto fb = ens.predict(b);
        for (double z : {5.0, 8.0, 11.0}) ASSERT_GE(fa.cdf(z), fb.cdf(z) - 1e-9);
        ++checked;
    }
    EXPECT_EQ(checked, 1000);
}

TEST(FitIdr, WarmStartSweepMatchesFromScratchSolves) {
    Rng rng(707);
    const int n = 120;
    std::vector<std::vector<double>> cov(n);
    std::vector<double> obs(n);
    for (int i = 0; i < n; ++i) {
        cov[i] = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)};
        std::sort(cov[i].begin(), cov[i].end());
        obs[i] = mean_of(cov[i]) + rng.normal(5.0, 1.5);
    }
    const auto fit = fit_idr(cov, obs);  // warm threshold sweep
    // re-solve a sample of thresholds from scratch through the public API by
    // fitting single-threshold problems (fresh partitions each time); the last
    // threshold is skipped (all indicators equal there)
    for (std::size_t t = 0; t + 1 < fit.thresholds.size(); t += 13) {
        std::vector<double> pseudo_obs(n);
        for (int p = 0; p < n; ++p)
            pseudo_obs[p] = (obs_at(fit, cov, obs, p) <= fit.thresholds[t]) ? 0.5 : 2.0;
        // pseudo data has a single interior threshold at 0.5 whose indicator
        // pattern equals the original threshold t
        std::vector<std::vector<double>> cov_in_fit_order(fit.points.begin(), fit.points.end());
        const auto single = fit_idr(cov_in_fit_order, pseudo_obs);
        ASSERT_EQ(single.thresholds.size(), 2u);
        for (int p = 0; p < n; ++p) ASSERT_NEAR(fit.cdf[p][t], single.cdf[p][0], 1e-10);
    }
}

TEST(IdrSerialization, JsonRoundTrip) {
    std::vector<std::vector<double>> cov = {{1.0}, {2.0}, {3.0}, {4.0}};
    std::vector<double> obs = {1.0, 3.0, 2.0, 4.0};
    const auto fit = fit_idr(cov, obs);
    const auto back = idr_fit_from_json(to_json(fit));
    ASSERT_EQ(back.points, fit.points);
    ASSERT_EQ(back.thresholds, fit.thresholds);
    for (std::size_t p = 0; p < fit.cdf.size(); ++p)
        for (std::size_t t = 0; t < fit.cdf[p].size(); ++t)
            ASSERT_NEAR(back.cdf[p][t], fit.cdf[p][t], 1e-12);
}
