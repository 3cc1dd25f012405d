#include "evcs/synth.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace evcs;

TEST(Oracle, SharesMatchLogit)
{
    SplitMix64 rng{51};
    for (int f = 0; f < 3; ++f) {
        const auto v = oracle::random_vector(rng, 2 + rng() % 6, 2);
        const auto shares = choice_share_oracle(v, 300000, f);
        const auto p = oracle::logit_closed_form(v);
        double total = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            EXPECT_NEAR(shares[j], p[j], 0.004);
            total += shares[j];
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    EXPECT_THROW(choice_share_oracle(std::vector<double>{}, 10, 1), ValidationError);
    EXPECT_THROW(choice_share_oracle(std::vector<double>{1.0}, 0, 1), ValidationError);
    EXPECT_EQ(choice_share_oracle(std::vector<double>{0.3}, 5, 1)[0], 1.0);
}

TEST(Oracle, Deterministic)
{
    const std::vector<double> v{0.1, -0.4, 1.2};
    EXPECT_EQ(choice_share_oracle(v, 1000, 9), choice_share_oracle(v, 1000, 9));
    EXPECT_NE(choice_share_oracle(v, 1000, 9), choice_share_oracle(v, 1000, 10));
}

TEST(Dataset, ShapeAndPanelCoefficients)
{
    SynthConfig cfg;
    cfg.users = 50;
    cfg.min_observations = 2;
    cfg.max_observations = 5;
    cfg.alternatives = 7;
    cfg.truth.kind = ModelKind::MXL;
    cfg.truth.mean(Coef::IsWalkHome) = 1;
    cfg.truth.sd(Coef::DistFar) = 0.3;
    const auto ds = generate_dataset(cfg);
    ASSERT_EQ(ds.data.num_users(), 50u);
    ASSERT_EQ(ds.user_betas.size(), 50u);
    for (std::size_t i = 0; i < 50; ++i) {
        auto const& u = ds.data.users()[i];
        EXPECT_GE(u.observations.size(), 2u);
        EXPECT_LE(u.observations.size(), 5u);
        for (auto const& o : u.observations) {
            EXPECT_EQ(o.alternatives.size(), 7u);
            EXPECT_LT(o.chosen, 7u);
            for (auto const& a : o.alternatives) {
                EXPECT_LE(a.dist_km, cfg.maxima.dist_km);
                EXPECT_GE(a.outlets, 1);
                if (a.walk_home == 1) {
                    EXPECT_LE(a.dist_km, cfg.truth.near_threshold_km);
                }
            }
        }
        EXPECT_EQ(ds.user_betas[i][idx(Coef::IsWalkHome)], 1.0);
    }
    // distFar varies across users, the rest does not
    EXPECT_NE(ds.user_betas[0][idx(Coef::DistFar)], ds.user_betas[1][idx(Coef::DistFar)]);

    const auto again = generate_dataset(cfg);
    EXPECT_EQ(again.data.users()[7].observations[1].chosen, ds.data.users()[7].observations[1].chosen);

    cfg.max_observations = 1;
    EXPECT_THROW(generate_dataset(cfg), ValidationError);
}

TEST(Dataset, ChoicesFollowTruth)
{
    // a single dominant attribute: chosen alternative is nearly always the walkable one
    SynthConfig cfg;
    cfg.users = 400;
    cfg.alternatives = 5;
    cfg.walk_probability = 1.0;
    cfg.distance_median_km = 0.5;
    cfg.distance_log_sd = 2.0;
    cfg.truth.mean(Coef::IsWalkHome) = 12;
    const auto ds = generate_dataset(cfg);
    std::size_t hits = 0, eligible = 0;
    for (auto const& u : ds.data.users()) {
        auto const& o = u.observations[0];
        const bool any = std::any_of(o.alternatives.begin(), o.alternatives.end(),
                                     [](auto const& a) { return a.walk_home == 1; });
        if (any) {
            ++eligible;
            hits += o.chosen_attributes().walk_home == 1 ? 1 : 0;
        }
    }
    ASSERT_GT(eligible, 100u);
    EXPECT_EQ(hits, eligible);
}

TEST(World, HasEveryInput)
{
    WorldConfig wc;
    wc.truth.mean(Coef::IsWalkHome) = 2;
    const auto w = generate_world(wc);
    EXPECT_FALSE(w.region.empty());
    EXPECT_EQ(w.customers.size(), wc.customers);
    EXPECT_GE(w.stations.size(), wc.l2_stations + wc.l3_stations);
    EXPECT_FALSE(w.accounts.empty());
    EXPECT_FALSE(w.amenities.snapshots().empty());
    for (auto const& c : w.customers) {
        EXPECT_TRUE(w.region.contains(c.where));
    }
}
