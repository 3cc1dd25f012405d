#include "evcs/estimation.hpp"
#include "evcs/synth.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace evcs;

namespace {

std::vector<UserCount> counts(std::vector<std::size_t> const& n)
{
    std::vector<UserCount> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
        out.push_back({"u" + std::to_string(i), n[i]});
    }
    return out;
}

PanelDataset single_alt_users(std::vector<std::vector<double>> const& chosen_dist)
{
    PanelDataset data;
    for (std::size_t i = 0; i < chosen_dist.size(); ++i) {
        for (std::size_t t = 0; t < chosen_dist[i].size(); ++t) {
            ChoiceObservation o;
            o.user_id = "u" + std::to_string(i);
            o.when = make_time(2019, 1, 1) + std::chrono::hours{static_cast<int>(t)};
            AttributeVector a;
            a.dist_km = chosen_dist[i][t];
            AttributeVector b;
            b.dist_km = 1;
            o.alternatives = {a, b};
            o.chosen = 0;
            data.add(o);
        }
    }
    return data;
}

ParameterSet published_mnl_ratios()
{
    ParameterSet p;
    p.mu = {.2184, .0783, 1.0, -.0545, .0286, -.0718, -.0616, .0288, .0401, -.0338, .1378, .1168, -.0350};
    return p;
}

} // namespace

TEST(Folds, GreedyBalancesHeavyUsers)
{
    const auto plan = grouped_kfold(counts({5, 5, 1, 1}), 2, 7);
    EXPECT_EQ(plan.observations[0], 6u);
    EXPECT_EQ(plan.observations[1], 6u);
}

TEST(Folds, TenUsersFiveFolds)
{
    const auto plan = grouped_kfold(counts({1, 1, 1, 1, 1, 1, 1, 1, 1, 1}), 5, 3);
    for (std::size_t g = 0; g < 5; ++g) {
        EXPECT_EQ(plan.users_in(g).size(), 2u);
        EXPECT_EQ(plan.observations[g], 2u);
    }
}

TEST(Folds, PartitionAndDeterminism)
{
    SplitMix64 rng{4};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> n(5 + rng() % 40);
        for (auto& c : n) {
            c = 1 + rng() % 12;
        }
        const std::size_t k = 1 + rng() % 5;
        const auto a = grouped_kfold(counts(n), k, trial);
        const auto b = grouped_kfold(counts(n), k, trial);
        EXPECT_EQ(a.user_ids, b.user_ids);
        EXPECT_EQ(a.fold_of, b.fold_of);
        std::set<std::string> seen;
        std::vector<std::size_t> total(k, 0);
        for (std::size_t i = 0; i < a.user_ids.size(); ++i) {
            EXPECT_TRUE(seen.insert(a.user_ids[i]).second);
            ASSERT_LT(a.fold_of[i], k);
            total[a.fold_of[i]] += n[std::stoul(a.user_ids[i].substr(1))];
        }
        EXPECT_EQ(seen.size(), n.size());
        EXPECT_EQ(total, a.observations);
        // greedy bound: max - min never exceeds the largest single user
        const auto [lo, hi] = std::minmax_element(total.begin(), total.end());
        EXPECT_LE(*hi - *lo, *std::max_element(n.begin(), n.end()));
    }
}

TEST(Folds, RejectsBadK)
{
    EXPECT_THROW(grouped_kfold(counts({1, 2}), 0, 1), ValidationError);
    EXPECT_THROW(grouped_kfold(counts({1, 2}), 3, 1), ValidationError);
}

TEST(Folds, L3StyleSplit)
{
    SplitMix64 rng{5};
    const auto data = oracle::random_panel(rng, 25, 4, 5);
    const auto plan = grouped_kfold(user_counts(data), 5, 11);
    EstimationConfig cfg;
    cfg.mode = CvMode::L3Style;
    for (std::size_t n = 0; n < 5; ++n) {
        const auto fd = make_fold(data, plan, n, cfg);
        auto expected = plan.users_in(n);
        auto got = fd.validation_users;
        std::sort(expected.begin(), expected.end());
        std::sort(got.begin(), got.end());
        EXPECT_EQ(got, expected);
        EXPECT_EQ(fd.estimation.num_users() + fd.validation.num_users(), 25u);
        for (auto const& u : fd.validation.users()) {
            EXPECT_EQ(plan.fold_of_user(u.user_id), n);
            ASSERT_EQ(u.observations.size(), 1u);
            auto const& full = *std::find_if(data.users().begin(), data.users().end(),
                                             [&](UserPanel const& p) { return p.user_id == u.user_id; });
            EXPECT_EQ(u.observations[0].when, full.observations.back().when);
        }
        for (auto const& u : fd.estimation.users()) {
            EXPECT_NE(plan.fold_of_user(u.user_id), n);
        }
    }
    FoldPlan one = plan;
    one.k = 1;
    EXPECT_THROW(make_fold(data, one, 0, cfg), ValidationError);
}

TEST(Folds, L2StyleSplit)
{
    SplitMix64 rng{6};
    const auto data = oracle::random_panel(rng, 40, 6, 4);
    const auto plan = grouped_kfold(user_counts(data), 4, 2);
    EstimationConfig cfg;
    cfg.mode = CvMode::L2Style;
    cfg.sample_size = 10;
    for (std::size_t n = 0; n < 4; ++n) {
        const auto fd = make_fold(data, plan, n, cfg);
        EXPECT_EQ(fd.estimation.num_observations(), 10u);
        std::set<std::string> est(fd.estimation_users.begin(), fd.estimation_users.end());
        for (auto const& id : fd.estimation_users) {
            EXPECT_EQ(plan.fold_of_user(id), n);
        }
        for (auto const& id : fd.validation_users) {
            EXPECT_EQ(est.count(id), 0u);
            EXPECT_NE(plan.fold_of_user(id), n);
        }
        EXPECT_EQ(fd.validation.num_users(), data.num_users() - plan.users_in(n).size());
    }
    cfg.sample_size = 100000;
    EXPECT_THROW(make_fold(data, plan, 0, cfg), ValidationError);
}

TEST(Trim, DropsAboveInterpolatedQuantile)
{
    std::vector<std::vector<double>> d;
    for (int i = 1; i <= 100; ++i) {
        d.push_back({static_cast<double>(i)});
    }
    const auto r = trim_distance_outliers(single_alt_users(d));
    EXPECT_EQ(r.removed, 2u);
    EXPECT_NEAR(r.cutoff_km, 98.02, 1e-9);
    EXPECT_EQ(r.kept.num_observations(), 98u);

    const auto same = trim_distance_outliers(single_alt_users(std::vector<std::vector<double>>(30, {2.5})));
    EXPECT_EQ(same.removed, 0u);
    EXPECT_THROW(trim_distance_outliers(single_alt_users(d), 1.0), ValidationError);
}

TEST(Trim, MatchesSortOracle)
{
    SplitMix64 rng{8};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> d(10 + rng() % 30);
        std::vector<double> all;
        for (auto& u : d) {
            u.resize(1 + rng() % 4);
            for (auto& x : u) {
                x = std::round(rng.open_uniform() * 200) / 10;
                all.push_back(x);
            }
        }
        std::sort(all.begin(), all.end());
        const double h = (static_cast<double>(all.size()) - 1) * 0.9;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const double cut = lo + 1 < all.size() ? all[lo] + (h - lo) * (all[lo + 1] - all[lo]) : all[lo];
        const auto expected = static_cast<std::size_t>(std::count_if(all.begin(), all.end(), [&](double x) { return x > cut; }));
        const auto r = trim_distance_outliers(single_alt_users(d), 0.9);
        EXPECT_NEAR(r.cutoff_km, cut, 1e-12);
        EXPECT_EQ(r.removed, expected);
    }
}

TEST(Fit, ZeroIterationsIsNotConverged)
{
    SplitMix64 rng{9};
    const auto data = oracle::random_panel(rng, 30, 3, 6);
    EstimationConfig cfg;
    cfg.optimizer.max_iterations = 0;
    const auto fit = fit_mnl(data, ParameterSet{}, cfg);
    EXPECT_EQ(fit.status, FitStatus::NotConverged);
}

TEST(Fit, ConstantAttributeIsNotIdentified)
{
    SynthConfig sc;
    sc.users = 400;
    sc.alternatives = 8;
    sc.gas_probability = 0;
    sc.truth = published_mnl_ratios();
    sc.truth.mean(Coef::IsGas) = 0;
    const auto ds = generate_dataset(sc);
    const auto fit = fit_mnl(ds.data, ParameterSet{}, EstimationConfig{});
    EXPECT_EQ(fit.status, FitStatus::Converged);
    ASSERT_EQ(fit.non_identified.size(), 1u);
    EXPECT_EQ(fit.non_identified[0], idx(Coef::IsGas));
    EXPECT_TRUE(std::isnan(fit.std_errors[idx(Coef::IsGas)]));
    EXPECT_TRUE(std::isfinite(fit.std_errors[idx(Coef::DistFar)]));
}

TEST(Fit, TraceIsNondecreasing)
{
    SplitMix64 rng{10};
    const auto data = oracle::random_panel(rng, 60, 3, 8);
    const auto fit = fit_mnl(data, ParameterSet{}, EstimationConfig{});
    ASSERT_FALSE(fit.ll_trace.empty());
    for (std::size_t i = 1; i < fit.ll_trace.size(); ++i) {
        EXPECT_GE(fit.ll_trace[i], fit.ll_trace[i - 1] - 1e-9);
    }
    EXPECT_NEAR(fit.ll_final, fit.ll_trace.back(), 1e-9);
    EXPECT_NEAR(fit.ll_final, mnl_loglik(DesignPanel::compile(data), fit.params.mu).value, 1e-9);
}

TEST(Fit, MnlRecoversTruth)
{
    SynthConfig sc;
    sc.users = 4000;
    sc.alternatives = 20;
    sc.truth = published_mnl_ratios();
    sc.truth.mu = sc.truth.scaled(2.0).mu;
    sc.seed = 17;
    const auto ds = generate_dataset(sc);
    const auto fit = fit_mnl(ds.data, ParameterSet{}, EstimationConfig{});
    ASSERT_EQ(fit.status, FitStatus::Converged);
    std::size_t inside = 0;
    for (std::size_t k = 0; k < kNumCoef; ++k) {
        inside += std::abs(fit.params.mu[k] - sc.truth.mu[k]) < 3 * fit.std_errors[k] ? 1 : 0;
    }
    EXPECT_GE(inside, 12u);
}

TEST(Fit, MxlWithoutHeterogeneityStaysNearMnl)
{
    SynthConfig sc;
    sc.users = 300;
    sc.min_observations = 3;
    sc.max_observations = 3;
    sc.alternatives = 10;
    sc.truth = published_mnl_ratios();
    const auto ds = generate_dataset(sc);
    EstimationConfig cfg;
    cfg.draws = 50;
    const auto mnl = fit_mnl(ds.data, ParameterSet{}, cfg);
    ParameterSet init = mnl.params;
    init.sigma.fill(0.1);
    const auto mxl = fit_mxl(ds.data, init, cfg);
    EXPECT_GE(mxl.ll_final, mnl.ll_final - 1e-6);
    EXPECT_EQ(mxl.std_errors.size(), 2 * kNumCoef);
    for (double s : mxl.params.sigma) {
        EXPECT_GE(s, 0.0);
    }
}

TEST(Cv, RunProducesOneOutcomePerFold)
{
    SynthConfig sc;
    sc.users = 200;
    sc.min_observations = 1;
    sc.max_observations = 4;
    sc.alternatives = 6;
    sc.truth = published_mnl_ratios();
    const auto ds = generate_dataset(sc);
    const auto plan = grouped_kfold(user_counts(ds.data), 3, 1);
    EstimationConfig cfg;
    const auto cv = run_cv(ds.data, plan, ModelKind::MNL, cfg);
    ASSERT_EQ(cv.folds.size(), 3u);
    for (auto const& f : cv.folds) {
        EXPECT_EQ(f.validation.dpsa.count("average"), 1u);
        EXPECT_GT(f.estimation.rho, 0.0);
        EXPECT_EQ(f.estimation.num_params, kNumCoef);
    }
    EXPECT_NEAR(cv.ratios.mean_mu[idx(Coef::IsWalkHome)], 1.0, 1e-12);
}
