#include "evcs/utility_sim.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace evcs;

namespace {

PairAttributes random_pairs(SplitMix64& rng, std::size_t customers, std::size_t stations)
{
    PairAttributes a;
    for (std::size_t i = 0; i < customers; ++i) {
        a.customer_ids.push_back("c" + std::to_string(i));
    }
    for (std::size_t j = 0; j < stations; ++j) {
        a.station_ids.push_back("s" + std::to_string(j));
    }
    for (std::size_t x = 0; x < customers * stations; ++x) {
        a.x.push_back(oracle::random_alt(rng));
    }
    return a;
}

std::vector<ParameterSet> random_folds(SplitMix64& rng, std::size_t n, ModelKind kind)
{
    std::vector<ParameterSet> out;
    for (std::size_t f = 0; f < n; ++f) {
        ParameterSet p;
        p.kind = kind;
        p.mu = {};
        for (std::size_t k = 0; k < kNumCoef; ++k) {
            p.mu[k] = (2 * rng.open_uniform() - 1) * 0.5;
            p.sigma[k] = kind == ModelKind::MXL ? rng.open_uniform() * 0.4 : 0.0;
        }
        p.mean(Coef::IsWalkHome) = 0.5 + rng.open_uniform();
        out.push_back(p);
    }
    return out;
}

} // namespace

TEST(NearestRank, Examples)
{
    std::vector<double> v{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
    EXPECT_EQ(nearest_rank(v, 0.25), 3);
    EXPECT_EQ(nearest_rank(v, 0.0), 1);
    EXPECT_EQ(nearest_rank(v, 1.0), 10);
    EXPECT_EQ(nearest_rank(v, 0.5), 5);
    EXPECT_EQ(nearest_rank({4.0}, 0.25), 4);
    EXPECT_THROW(nearest_rank({}, 0.5), ValidationError);
    EXPECT_THROW(nearest_rank(v, 1.5), ValidationError);
}

TEST(Simulate, DistanceIsNegatedKm)
{
    SplitMix64 rng{1};
    const auto a = random_pairs(rng, 3, 4);
    const auto u = simulate_utilities(a, {}, UtilitySpec::Distance, SimulationConfig{});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(u.at(i, j), -a.at(i, j).dist_km);
        }
    }
}

TEST(Simulate, MnlMeanMatchesHandRolledScenarios)
{
    SplitMix64 rng{2};
    const auto a = random_pairs(rng, 4, 3);
    const auto folds = random_folds(rng, 3, ModelKind::MNL);
    SimulationConfig cfg;
    cfg.mnl_draws_per_fold = 50;
    cfg.seed = 99;
    const auto u = simulate_utilities(a, folds, UtilitySpec::MNL, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const auto z = design_row(a.at(i, j));
            double sum = 0;
            for (std::size_t n = 0; n < folds.size(); ++n) {
                SplitMix64 eps{stream_key(99, 0x657073ULL, i, j, n)};
                const double wh = folds[n].mu[idx(Coef::IsWalkHome)];
                double v = 0;
                for (std::size_t k = 0; k < kNumCoef; ++k) {
                    v += folds[n].mu[k] * z[k];
                }
                for (int r = 0; r < 50; ++r) {
                    sum += (v + eps.gumbel()) / wh;
                }
            }
            EXPECT_NEAR(u.at(i, j), sum / 150, 1e-12);
        }
    }
}

TEST(Simulate, MnlMeanConvergesToSystematicPlusEuler)
{
    SplitMix64 rng{3};
    const auto a = random_pairs(rng, 2, 2);
    const auto folds = random_folds(rng, 2, ModelKind::MNL);
    SimulationConfig cfg;
    cfg.mnl_draws_per_fold = 200000;
    const auto u = simulate_utilities(a, folds, UtilitySpec::MNL, cfg);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const auto z = design_row(a.at(i, j));
            double expected = 0;
            for (auto const& f : folds) {
                double v = 0;
                for (std::size_t k = 0; k < kNumCoef; ++k) {
                    v += f.mu[k] * z[k];
                }
                expected += (v + std::numbers::egamma) / f.mean(Coef::IsWalkHome) / 2;
            }
            EXPECT_NEAR(u.at(i, j), expected, 0.02);
        }
    }
}

TEST(Simulate, Mxl25WithoutSpreadIsGumbelQuantile)
{
    SplitMix64 rng{4};
    const auto a = random_pairs(rng, 2, 2);
    auto folds = random_folds(rng, 1, ModelKind::MXL);
    folds[0].sigma.fill(0.0);
    SimulationConfig cfg;
    cfg.mxl_draws_per_fold = 100000;
    const auto u = simulate_utilities(a, folds, UtilitySpec::MXL25, cfg);
    const double q = -std::log(-std::log(0.25));
    const double wh = folds[0].mean(Coef::IsWalkHome);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const auto z = design_row(a.at(i, j));
            double v = 0;
            for (std::size_t k = 0; k < kNumCoef; ++k) {
                v += folds[0].mu[k] * z[k];
            }
            EXPECT_NEAR(u.at(i, j), (v + q) / wh, 0.02);
        }
    }
}

TEST(Simulate, RatioUtilitiesIgnoreFoldScale)
{
    SplitMix64 rng{5};
    const auto a = random_pairs(rng, 3, 3);
    const auto folds = random_folds(rng, 2, ModelKind::MXL);
    const auto eta = scenario_eta(100, 7);
    for (double c : {0.1, 3.0, 42.0}) {
        double err = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const auto z = design_row(a.at(i, j));
                for (std::size_t n = 0; n < 2; ++n) {
                    const auto base = fold_scenarios(z, folds[n], n, i, j, 100, 7, eta);
                    const auto scaled = fold_scenarios(z, folds[n].scaled(c), n, i, j, 100, 7, eta, c);
                    for (std::size_t r = 0; r < 100; ++r) {
                        err = std::max(err, std::abs(base[r] - scaled[r]));
                    }
                }
            }
        }
        EXPECT_LT(err, 1e-12) << "c = " << c;
    }
}

TEST(Simulate, JobsDoNotChangeValues)
{
    SplitMix64 rng{6};
    const auto a = random_pairs(rng, 9, 4);
    const auto folds = random_folds(rng, 2, ModelKind::MXL);
    SimulationConfig cfg;
    cfg.mxl_draws_per_fold = 30;
    const auto one = simulate_utilities(a, folds, UtilitySpec::MXLMean, cfg);
    cfg.jobs = 4;
    const auto four = simulate_utilities(a, folds, UtilitySpec::MXLMean, cfg);
    EXPECT_EQ(one.values, four.values);
}

TEST(Simulate, ZeroWalkCoefficientNamesFold)
{
    SplitMix64 rng{7};
    const auto a = random_pairs(rng, 1, 1);
    auto folds = random_folds(rng, 3, ModelKind::MNL);
    folds[2].mean(Coef::IsWalkHome) = 0;
    try {
        (void)simulate_utilities(a, folds, UtilitySpec::MNL, SimulationConfig{});
        FAIL();
    } catch (ValidationError const& e) {
        EXPECT_NE(std::string(e.what()).find("fold 2"), std::string::npos);
    }
}

TEST(UtilityCsv, RoundTrip)
{
    SplitMix64 rng{8};
    const auto a = random_pairs(rng, 3, 5);
    const auto u = simulate_utilities(a, random_folds(rng, 1, ModelKind::MNL), UtilitySpec::MNL, SimulationConfig{});
    std::istringstream in(utility_csv(u));
    const auto back = read_utility_csv(csv::Table::parse(in, "u.csv"), UtilitySpec::MNL);
    EXPECT_EQ(back.customer_ids, u.customer_ids);
    EXPECT_EQ(back.station_ids, u.station_ids);
    EXPECT_EQ(back.values, u.values);

    std::istringstream missing("customer_id,station_id,u\nc0,s0,1\nc1,s1,2\n");
    EXPECT_THROW(read_utility_csv(csv::Table::parse(missing, "m.csv")), ValidationError);
    std::istringstream dup("customer_id,station_id,u\nc0,s0,1\nc0,s0,2\n");
    EXPECT_THROW(read_utility_csv(csv::Table::parse(dup, "d.csv")), ValidationError);
}
