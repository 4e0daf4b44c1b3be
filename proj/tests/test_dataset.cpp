#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gustpp/dataset.hpp"

using namespace gustpp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ScenarioConfig tiny_scenario(std::uint64_t seed, double dispersion,
                             std::array<double, 4> bias = {0, 0, 0, 0}) {
    ScenarioConfig cfg;
    cfg.n_stations = 10;
    cfg.n_years = 3;
    cfg.lead_times = {12};
    cfg.truth_spec = "linear";
    cfg.dispersion = dispersion;
    cfg.subensemble_bias = bias;
    cfg.rng_seed = seed;
    return cfg;
}

double range_coverage(const std::vector<ForecastCase>& cases) {
    int covered = 0, total = 0;
    for (const auto& c : cases) {
        if (!c.observation) continue;
        const auto [lo, hi] = std::minmax_element(c.ensemble.begin(), c.ensemble.end());
        covered += (*c.observation >= *lo && *c.observation <= *hi);
        ++total;
    }
    return static_cast<double>(covered) / total;
}

}  // namespace

TEST(Dates, SerialAndDayOfYear) {
    EXPECT_EQ((Date{2010, 1, 1}).day_of_year(), 1);
    EXPECT_EQ((Date{2012, 3, 1}).day_of_year(), 61);  // leap year
    EXPECT_EQ((Date{2010, 12, 31}).next_day(), (Date{2011, 1, 1}));
    EXPECT_EQ((Date{2012, 2, 28}).next_day(), (Date{2012, 2, 29}));
    EXPECT_EQ(Date::parse("2016-07-04"), (Date{2016, 7, 4}));
    EXPECT_THROW(Date::parse("2016-13-01"), ParseError);
    EXPECT_EQ((Date{2010, 6, 1}).serial() + 1, (Date{2010, 6, 2}).serial());
}

TEST(Csv, SingleRowRoundTrip) {
    ForecastCase c;
    c.station_id = 7;
    c.date = {2013, 5, 9};
    c.lead_time_h = 12;
    c.ensemble.assign(20, 5.5);
    c.ensemble[3] = 7.25;
    c.predictors = {{"temp", 281.5}, {"wind_u", -1.25}};
    c.observation = 6.125;

    const std::string path = "tmp_single.csv";
    write_csv(path, {c});
    const auto loaded = load_csv(path);
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_EQ(loaded[0].station_id, 7);
    EXPECT_EQ(loaded[0].ensemble[3], 7.25);
    EXPECT_EQ(loaded[0].predictors.at("wind_u"), -1.25);
    ASSERT_TRUE(loaded[0].observation);
    EXPECT_EQ(*loaded[0].observation, 6.125);
    std::remove(path.c_str());
}

TEST(Csv, NegativeEnsembleValueNamesColumn) {
    const std::string path = "tmp_bad.csv";
    {
        std::ofstream out(path);
        out << "station_id,date,lead_time,obs";
        for (int i = 1; i <= 20; ++i) out << ",ens_" << i;
        out << "\n1,2013-05-09,12,6.0";
        for (int i = 1; i <= 20; ++i) out << (i == 5 ? ",-1.0" : ",4.0");
        out << "\n";
    }
    try {
        load_csv(path);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("ens_5"), std::string::npos);
    }
    std::remove(path.c_str());
}

TEST(Csv, MalformedRowReportsLineNumber) {
    const std::string path = "tmp_malformed.csv";
    {
        std::ofstream out(path);
        out << "station_id,date,lead_time,obs";
        for (int i = 1; i <= 20; ++i) out << ",ens_" << i;
        out << "\n1,2013-05-09,12,abc";
        for (int i = 1; i <= 20; ++i) out << ",4.0";
        out << "\n";
    }
    try {
        load_csv(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
    }
    std::remove(path.c_str());
}

TEST(Csv, MissingObservationFlaggedNotDropped) {
    ForecastCase c;
    c.station_id = 1;
    c.date = {2013, 5, 9};
    c.lead_time_h = 3;
    c.ensemble.assign(20, 5.0);
    c.observation = std::nullopt;
    const std::string path = "tmp_missing.csv";
    write_csv(path, {c});
    const auto loaded = load_csv(path);
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_FALSE(loaded[0].observation.has_value());
    std::remove(path.c_str());
}

TEST(Csv, CanonicalFilesRoundTripByteIdentical) {
    const auto data = generate_scenario(tiny_scenario(42, 0.9));
    std::vector<ForecastCase> subset(data.cases.begin(), data.cases.begin() + 200);
    const std::string p1 = "tmp_rt1.csv", p2 = "tmp_rt2.csv";
    write_csv(p1, subset);
    write_csv(p2, load_csv(p1));
    EXPECT_EQ(slurp(p1), slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST(Scenario, SameSeedIsByteIdentical) {
    const auto a = generate_scenario(tiny_scenario(99, 0.8));
    const auto b = generate_scenario(tiny_scenario(99, 0.8));
    ASSERT_EQ(a.cases.size(), b.cases.size());
    for (std::size_t i = 0; i < a.cases.size(); i += 97) {
        EXPECT_EQ(a.cases[i].ensemble, b.cases[i].ensemble);
        EXPECT_EQ(*a.cases[i].observation, *b.cases[i].observation);
        EXPECT_EQ(a.cases[i].predictors, b.cases[i].predictors);
    }
    const auto c = generate_scenario(tiny_scenario(100, 0.8));
    EXPECT_NE(*a.cases[0].observation, *c.cases[0].observation);
}

TEST(Scenario, InvalidDispersionThrows) {
    auto cfg = tiny_scenario(1, 0.5);
    cfg.dispersion = 0.0;
    EXPECT_THROW(generate_scenario(cfg), std::invalid_argument);
    cfg.dispersion = -0.3;
    EXPECT_THROW(generate_scenario(cfg), std::invalid_argument);
    cfg.dispersion = 1.5;
    EXPECT_THROW(generate_scenario(cfg), std::invalid_argument);
}

TEST(Scenario, CalibratedEnsembleHasFlatRankHistogram) {
    const auto data = generate_scenario(tiny_scenario(8, 1.0));
    std::vector<int> counts(21, 0);
    Rng tie(13);
    for (const auto& c : data.cases) {
        int below = 0, equal = 0;
        for (double x : c.ensemble) {
            below += (x < *c.observation);
            equal += (x == *c.observation);
        }
        const int rank = below + static_cast<int>(tie.uniform_int(equal + 1)) + 1;
        counts[rank - 1]++;
    }
    const double n = static_cast<double>(data.cases.size());
    const double expect = n / 21.0;
    double chi2 = 0.0;
    for (int k = 0; k < 21; ++k) chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
    EXPECT_LT(chi2, chi2_critical(20, 0.05)) << "rank histogram not flat, chi2=" << chi2;
}

TEST(Scenario, UnderdispersionReducesCoverage) {
    const double full = range_coverage(generate_scenario(tiny_scenario(3, 1.0)).cases);
    const double mid = range_coverage(generate_scenario(tiny_scenario(3, 0.7)).cases);
    const double low = range_coverage(generate_scenario(tiny_scenario(3, 0.4)).cases);
    EXPECT_NEAR(full, 19.0 / 21.0, 0.02);
    EXPECT_LT(mid, full);
    EXPECT_LT(low, mid);
    EXPECT_LT(range_coverage(generate_scenario(tiny_scenario(5, 0.5)).cases), 19.0 / 21.0);
}

TEST(Scenario, ConfigJsonRoundTrip) {
    auto cfg = tiny_scenario(11, 0.6, {1.0, -1.0, 2.0, -2.0});
    cfg.truth_spec = "nonlinear";
    const auto j = cfg.to_json();
    const auto back = ScenarioConfig::from_json(j);
    EXPECT_EQ(back.n_stations, cfg.n_stations);
    EXPECT_EQ(back.truth_spec, "nonlinear");
    EXPECT_EQ(back.subensemble_bias, cfg.subensemble_bias);
    EXPECT_EQ(back.rng_seed, cfg.rng_seed);
}

TEST(Split, PartitionSumsToTotal) {
    ScenarioConfig cfg = tiny_scenario(21, 0.9);
    cfg.n_stations = 2;
    cfg.n_years = 7;
    const auto data = generate_scenario(cfg);
    const auto s = split_chronological(data.cases, {2010, 2014}, {2015, 2015}, {2016, 2016});
    EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), data.cases.size());
    EXPECT_FALSE(s.train.empty());
    EXPECT_FALSE(s.validation.empty());
    EXPECT_FALSE(s.test.empty());
    for (const auto& c : s.train) EXPECT_LE(c.date.year, 2014);
    for (const auto& c : s.test) EXPECT_EQ(c.date.year, 2016);
    EXPECT_EQ(s.train_full().size(), s.train.size() + s.validation.size());
}

TEST(Split, EmptyValidationRangeAllowed) {
    ScenarioConfig cfg = tiny_scenario(22, 0.9);
    cfg.n_stations = 1;
    const auto data = generate_scenario(cfg);
    const auto s = split_chronological(data.cases, {2010, 2011}, {2015, 2014}, {2012, 2012});
    EXPECT_TRUE(s.validation.empty());
    EXPECT_FALSE(s.train.empty());
    EXPECT_FALSE(s.test.empty());
}

TEST(Split, OverlappingRangesThrow) {
    ScenarioConfig cfg = tiny_scenario(23, 0.9);
    cfg.n_stations = 1;
    const auto data = generate_scenario(cfg);
    EXPECT_THROW(split_chronological(data.cases, {2010, 2012}, {2012, 2012}, {2013, 2013}),
                 std::invalid_argument);
}

TEST(Standardizer, TwoPointColumn) {
    // sample sd convention (divisor n-1): {1,3} -> -1/sqrt(2), +1/sqrt(2)
    const auto s = Standardizer::fit({{"x", {1.0, 3.0}}});
    EXPECT_NEAR(s.transform("x", 1.0), -1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(s.transform("x", 3.0), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Standardizer, ConstantPredictorDropped) {
    const auto s = Standardizer::fit({{"c", {2.0, 2.0, 2.0}}, {"x", {1.0, 2.0, 4.0}}});
    EXPECT_EQ(s.dropped, std::vector<std::string>{"c"});
    EXPECT_FALSE(s.has("c"));
    EXPECT_TRUE(s.has("x"));
}

TEST(Standardizer, TrainingColumnsCenteredAfterApply) {
    ScenarioConfig cfg = tiny_scenario(31, 0.9);
    cfg.n_stations = 4;
    cfg.n_years = 1;
    const auto data = generate_scenario(cfg);
    const auto s = Standardizer::fit_cases(data.cases);
    std::map<std::string, double> sums;
    std::map<std::string, int> counts;
    for (const auto& c : data.cases)
        for (const auto& [name, v] : s.apply(c)) {
            sums[name] += v;
            counts[name]++;
        }
    for (const auto& [name, total] : sums)
        EXPECT_LT(std::abs(total / counts[name]), 1e-10) << name;
}

TEST(Standardizer, JsonRoundTrip) {
    const auto s = Standardizer::fit({{"a", {1.0, 2.0, 3.0}}, {"b", {5.0, 5.0, 5.0}}});
    const auto back = Standardizer::from_json(s.to_json());
    EXPECT_EQ(back.dropped, s.dropped);
    EXPECT_NEAR(back.transform("a", 2.5), s.transform("a", 2.5), 1e-15);
}

TEST(SubEnsembles, IndexMapping) {
    EXPECT_EQ(sub_ensemble_of(0), 1);
    EXPECT_EQ(sub_ensemble_of(4), 1);
    EXPECT_EQ(sub_ensemble_of(5), 2);
    EXPECT_EQ(sub_ensemble_of(19), 4);
}

TEST(Scenario, PlantedSignalDecouplesEnsembleFromTruth) {
    ScenarioConfig cfg = tiny_scenario(41, 0.9);
    cfg.truth_spec = "planted";
    cfg.n_stations = 2;
    cfg.n_years = 2;
    const auto data = generate_scenario(cfg);
    // correlation of observation with radiation should be strong, with the
    // ensemble mean weak
    double sy = 0, sr = 0, sm = 0, syy = 0, srr = 0, smm = 0, syr = 0, sym = 0;
    const double n = static_cast<double>(data.cases.size());
    for (const auto& c : data.cases) {
        const double y = *c.observation, r = c.predictors.at("radiation"), m = c.ens_mean();
        sy += y; sr += r; sm += m;
        syy += y * y; srr += r * r; smm += m * m;
        syr += y * r; sym += y * m;
    }
    const double cor_yr = (syr - sy * sr / n) / std::sqrt((syy - sy * sy / n) * (srr - sr * sr / n));
    const double cor_ym = (sym - sy * sm / n) / std::sqrt((syy - sy * sy / n) * (smm - sm * sm / n));
    EXPECT_GT(cor_yr, 0.5);
    EXPECT_LT(std::abs(cor_ym), 0.2);
}
