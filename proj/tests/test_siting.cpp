#include "evcs/siting.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace evcs;

namespace {

SitingInstance random_instance(SplitMix64& rng, std::size_t max_cand, std::size_t max_cust, std::size_t max_p)
{
    SitingInstance inst;
    const std::size_t cand = 1 + rng() % max_cand;
    const std::size_t existing = rng() % 4;
    const std::size_t cust = 1 + rng() % max_cust;
    const std::size_t m = cand + existing;
    std::vector<std::size_t> order(m);
    for (std::size_t j = 0; j < m; ++j) {
        order[j] = j;
    }
    // shuffle so existing stations sit at random columns
    for (std::size_t j = m; j > 1; --j) {
        std::swap(order[j - 1], order[rng() % j]);
    }
    inst.existing.assign(m, false);
    for (std::size_t j = 0; j < m; ++j) {
        char id[8];
        std::snprintf(id, sizeof id, "s%02zu", order[j]);
        inst.utilities.station_ids.push_back(id);
        inst.existing[j] = order[j] >= cand;
    }
    for (std::size_t i = 0; i < cust; ++i) {
        inst.utilities.customer_ids.push_back("c" + std::to_string(i));
    }
    for (std::size_t x = 0; x < m * cust; ++x) {
        // coarse grid so ties are common
        inst.utilities.values.push_back(rng() % 3 == 0 ? std::round(rng.open_uniform() * 10 - 5)
                                                       : rng.open_uniform() * 10 - 5);
    }
    inst.p = 1 + rng() % std::min(max_p, cand);
    inst.consider_existing = rng() % 2 == 0;
    return inst;
}

struct Enumerated {
    double value = -std::numeric_limits<double>::infinity();
    std::vector<std::string> open;
};

/// Exhaustive search over candidate subsets in lexicographic id order; the
/// first strictly better subset wins, so ties resolve to the earliest set.
Enumerated enumerate(SitingInstance const& inst)
{
    std::vector<std::size_t> cand;
    std::vector<std::size_t> always;
    for (std::size_t j = 0; j < inst.existing.size(); ++j) {
        if (!inst.existing[j]) {
            cand.push_back(j);
        } else if (inst.consider_existing) {
            always.push_back(j);
        }
    }
    auto const& u = inst.utilities;
    std::sort(cand.begin(), cand.end(), [&](auto a, auto b) { return u.station_ids[a] < u.station_ids[b]; });
    Enumerated best;
    oracle::for_each_subset(cand.size(), inst.p, [&](std::vector<std::size_t> const& pick) {
        double sum = 0;
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < u.customers(); ++i) {
            double b = -std::numeric_limits<double>::infinity();
            for (auto j : always) {
                b = std::max(b, u.at(i, j));
            }
            for (auto k : pick) {
                b = std::max(b, u.at(i, cand[k]));
            }
            sum += b;
            worst = std::min(worst, b);
        }
        const double v = inst.model == SitingModel::PMedian ? sum : worst;
        if (v > best.value) {
            best.value = v;
            best.open.clear();
            for (auto k : pick) {
                best.open.push_back(u.station_ids[cand[k]]);
            }
        }
    });
    return best;
}

} // namespace

TEST(Siting, PMedianMatchesEnumeration)
{
    SplitMix64 rng{31};
    for (int trial = 0; trial < 150; ++trial) {
        auto inst = random_instance(rng, 12, 30, 4);
        inst.model = SitingModel::PMedian;
        const auto sol = solve(inst);
        const auto ref = enumerate(inst);
        EXPECT_EQ(sol.objective, ref.value) << "trial " << trial;
        EXPECT_EQ(sol.open, ref.open) << "trial " << trial;
        EXPECT_TRUE(sol.certified);
    }
}

TEST(Siting, MaxMinMatchesEnumeration)
{
    SplitMix64 rng{32};
    for (int trial = 0; trial < 150; ++trial) {
        auto inst = random_instance(rng, 12, 30, 4);
        inst.model = SitingModel::MaxMin;
        const auto sol = solve(inst);
        const auto ref = enumerate(inst);
        EXPECT_EQ(sol.objective, ref.value) << "trial " << trial;
        EXPECT_EQ(sol.open, ref.open) << "trial " << trial;
    }
}

TEST(Siting, SmallExamples)
{
    SitingInstance inst;
    inst.utilities.customer_ids = {"a", "b"};
    inst.utilities.station_ids = {"x", "y", "z"};
    inst.utilities.values = {-1, -5, -2,  //
                             -4, -1, -2.5};
    inst.existing = {false, false, false};
    inst.p = 1;
    inst.model = SitingModel::PMedian;
    auto s = solve(inst);
    EXPECT_EQ(s.open, std::vector<std::string>{"z"});
    EXPECT_EQ(s.objective, -4.5);
    inst.model = SitingModel::MaxMin;
    s = solve(inst);
    EXPECT_EQ(s.open, std::vector<std::string>{"z"});
    EXPECT_EQ(s.objective, -2.5);
    inst.p = 2;
    s = solve(inst);
    EXPECT_EQ(s.open, (std::vector<std::string>{"x", "y"}));
    EXPECT_EQ(s.assignment, (std::vector<std::string>{"x", "y"}));

    // an existing station already serving b makes x alone optimal
    inst.existing = {false, true, false};
    inst.p = 1;
    inst.model = SitingModel::PMedian;
    s = solve(inst);
    EXPECT_EQ(s.open, std::vector<std::string>{"x"});
    EXPECT_EQ(s.objective, -2);
    inst.consider_existing = false;
    EXPECT_EQ(solve(inst).open, std::vector<std::string>{"z"});

    inst.p = 3;
    EXPECT_THROW(solve(inst), ValidationError);
}

TEST(Siting, LocalSearchAboveThresholdIsUncertified)
{
    SplitMix64 rng{33};
    auto inst = random_instance(rng, 12, 20, 3);
    inst.exact_threshold = 0;
    const auto sol = solve_pmedian(inst);
    EXPECT_FALSE(sol.certified);
    EXPECT_EQ(sol.solver, SolverKind::LocalSearch);
    EXPECT_EQ(sol.open.size(), inst.p);
    EXPECT_LE(sol.objective, enumerate(inst).value);
}

TEST(Siting, EvaluateMatchesSolverObjective)
{
    SplitMix64 rng{34};
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = random_instance(rng, 8, 10, 3);
        const auto sol = solve(inst);
        const auto e = evaluate_solution(inst, sol.open);
        EXPECT_EQ(e.pmedian, sol.objective);
    }
}

TEST(Milp, TextStructure)
{
    SitingInstance inst;
    inst.utilities.customer_ids = {"c 1", "c2"};
    inst.utilities.station_ids = {"cand_1", "old", "cand_2"};
    inst.utilities.values = {-1, -2, -3, -4, -5, -6};
    inst.existing = {false, true, false};
    inst.p = 1;
    auto lp = milp_text(inst);
    EXPECT_NE(lp.find("Maximize"), std::string::npos);
    EXPECT_NE(lp.find(" open_count: + z_cand_1 + z_cand_2 = 1"), std::string::npos);
    EXPECT_NE(lp.find("assign_c_1: + y_c_1_cand_1 + y_c_1_old + y_c_1_cand_2 = 1"), std::string::npos);
    EXPECT_NE(lp.find("link_c2_cand_2: y_c2_cand_2 - z_cand_2 <= 0"), std::string::npos);
    EXPECT_EQ(lp.find("z_old"), std::string::npos);
    EXPECT_NE(lp.find("- 1 y_c_1_cand_1"), std::string::npos);
    EXPECT_EQ(lp.substr(lp.size() - 4), "End\n");

    inst.consider_existing = false;
    inst.model = SitingModel::MaxMin;
    lp = milp_text(inst);
    EXPECT_EQ(lp.find("old"), std::string::npos);
    EXPECT_NE(lp.find("alpha free"), std::string::npos);
    EXPECT_NE(lp.find("bound_c2: alpha + 4 y_c2_cand_1 + 6 y_c2_cand_2 <= 0"), std::string::npos);
}

TEST(Candidates, SpacingAndIds)
{
    CandidateGenConfig cfg;
    const LatLon o{45.5, -73.6};
    cfg.region = Polygon{{o, offset_m(o, 0, 3000), offset_m(o, 3000, 3000), offset_m(o, 3000, 0)}};
    cfg.count = 12;
    cfg.min_spacing_m = 300;
    std::vector<SiteStation> existing{{"e1", offset_m(o, 1500, 1500), true}};
    const auto c = generate_candidates(existing, cfg);
    ASSERT_EQ(c.size(), 12u);
    EXPECT_EQ(c[0].id, "cand_01");
    EXPECT_EQ(c[11].id, "cand_12");
    for (std::size_t a = 0; a < c.size(); ++a) {
        EXPECT_TRUE(cfg.region.contains(c[a].where));
        EXPECT_GE(haversine_m(c[a].where, existing[0].where), 300);
        for (std::size_t b = a + 1; b < c.size(); ++b) {
            EXPECT_GE(haversine_m(c[a].where, c[b].where), 300);
        }
    }
    cfg.count = 500;
    cfg.attempts_per_candidate = 5;
    EXPECT_THROW(generate_candidates(existing, cfg), ValidationError);
}

TEST(GeoJson, Statuses)
{
    SitingSolution sol;
    sol.open = {"b"};
    const auto j = nlohmann::json::parse(solution_geojson(
        sol, {{"a", {1, 2}, false}, {"b", {3, 4}, false}, {"e", {5, 6}, true}}));
    ASSERT_EQ(j["features"].size(), 3u);
    EXPECT_EQ(j["features"][0]["properties"]["status"], "closed");
    EXPECT_EQ(j["features"][1]["properties"]["status"], "opened");
    EXPECT_EQ(j["features"][2]["properties"]["status"], "existing");
    EXPECT_EQ(j["features"][1]["geometry"]["coordinates"][0], 4.0);
}
