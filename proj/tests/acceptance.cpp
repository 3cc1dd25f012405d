// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include "evcs/estimation.hpp"
#include "evcs/experiments.hpp"
#include "evcs/hash.hpp"
#include "evcs/metrics.hpp"
#include "evcs/pipeline.hpp"
#include "evcs/siting.hpp"
#include "evcs/synth.hpp"
#include "evcs/utility_sim.hpp"
#include "oracles.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace evcs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 4)
{
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------------------

Outcome indicator_arithmetic()
{
    struct Fold {
        double ll0, ll, rho, rho_bar, aic, bic;
    };
    const Fold mnl[] = {
        {-31030.6143, -26141.5274, .1576, .1571, 52309.0547, 52393.7783},
        {-30924.5374, -26029.6193, .1583, .1579, 52085.2387, 52169.9622},
        {-30876.1183, -25712.7924, .1672, .1668, 51451.5848, 51536.3083},
        {-30911.5930, -25368.9420, .1793, .1789, 50763.8841, 50848.6076},
        {-30881.7735, -25445.0283, .1761, .1756, 50916.0566, 51000.7801},
    };
    const Fold mxl[] = {
        {-31030.6143, -22557.9877, .2730, .2722, 45167.9754, 45337.4224},
        {-30924.5374, -22763.1175, .2639, .2631, 45578.2350, 45747.6820},
        {-30876.1183, -22747.6526, .2633, .2624, 45547.3051, 45716.7521},
        {-30911.5930, -22622.8858, .2681, .2673, 45297.7715, 45467.2186},
        {-30881.7735, -22534.8722, .2703, .2694, 45121.7444, 45291.1914},
    };
    double rho_err = 0, ic_err = 0;
    auto check = [&](Fold const& f, std::size_t K) {
        const auto r = indicators(f.ll0, f.ll, K, 5000);
        rho_err = std::max({rho_err, std::abs(r.rho - f.rho), std::abs(r.rho_bar_sq - f.rho_bar)});
        ic_err = std::max({ic_err, std::abs(r.aic - f.aic), std::abs(r.bic - f.bic)});
    };
    for (auto const& f : mnl) {
        check(f, 13);
    }
    for (auto const& f : mxl) {
        check(f, 26);
    }
    return {rho_err <= 5e-4 && ic_err <= 0.02,
            "max rho err " + num(rho_err, 3) + ", max AIC/BIC err " + num(ic_err, 3)};
}

// ---------------------------------------------------------------------------

Outcome gradients()
{
    SplitMix64 rng{0x67726164};
    double worst_mnl = 0, worst_mxl = 0;
    for (int f = 0; f < 50; ++f) {
        const auto data = oracle::random_panel(rng, 3 + rng() % 8, 4, 20);
        const auto dp = DesignPanel::compile(data);
        const auto beta = oracle::random_vector(rng, kNumCoef, 1.0);
        const auto g = mnl_loglik(dp, beta).gradient;
        const auto fd = oracle::fd_gradient([&](auto const& b) { return mnl_loglik(dp, b).value; }, beta);
        worst_mnl = std::max(worst_mnl, oracle::relative_error(g, fd));

        auto theta = oracle::random_vector(rng, 2 * kNumCoef, 1.0);
        for (std::size_t k = kNumCoef; k < theta.size(); ++k) {
            theta[k] *= 0.5;
        }
        const auto draws = DrawMatrix::generate(dp.num_users(), 50, rng());
        const auto gx = mxl_simulated_loglik(dp, theta, draws).gradient;
        const auto fx =
            oracle::fd_gradient([&](auto const& t) { return mxl_simulated_loglik(dp, t, draws).value; }, theta);
        worst_mxl = std::max(worst_mxl, oracle::relative_error(gx, fx));
    }
    return {worst_mnl < 1e-5 && worst_mxl < 1e-5,
            "worst relative error MNL " + num(worst_mnl, 3) + ", MXL " + num(worst_mxl, 3)};
}

// ---------------------------------------------------------------------------

ParameterSet mnl_truth()
{
    ParameterSet p;
    p.mu = {.2184, .0783, 1.0, -.0545, .0286, -.0718, -.0616, .0288, .0401, -.0338, .1378, .1168, -.0350};
    return p;
}

ParameterSet mxl_truth()
{
    ParameterSet p;
    p.kind = ModelKind::MXL;
    p.mu = {-.4014, .0727, 1.0, -.1207, .0302, -.4219, -.0716, .0144, .0312, -.0860, 0.0, .2355, -.1448};
    p.sigma = {.8962, .3739, 1.3779, .0591, .0337, .5243, .3942, .3960, .4327, .1849, .6535, .2940, .2510};
    return p;
}

/// Analytic MNL information matrix sum_t sum_j P_j (z_j - zbar)(z_j - zbar)'.
Eigen::MatrixXd mnl_information(PanelDataset const& data, CoefArray const& beta)
{
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(kNumCoef, kNumCoef);
    std::vector<Eigen::VectorXd> z;
    std::vector<double> v;
    for (auto const& u : data.users()) {
        for (auto const& o : u.observations) {
            z.clear();
            v.clear();
            for (auto const& a : o.alternatives) {
                const auto row = design_row(a);
                z.emplace_back(Eigen::Map<const Eigen::VectorXd>(row.data(), kNumCoef));
                v.push_back(z.back().dot(Eigen::Map<const Eigen::VectorXd>(beta.data(), kNumCoef)));
            }
            const double vmax = *std::max_element(v.begin(), v.end());
            double s = 0;
            for (auto& x : v) {
                x = std::exp(x - vmax);
                s += x;
            }
            Eigen::VectorXd zbar = Eigen::VectorXd::Zero(kNumCoef);
            for (std::size_t j = 0; j < z.size(); ++j) {
                zbar += v[j] / s * z[j];
            }
            for (std::size_t j = 0; j < z.size(); ++j) {
                const Eigen::VectorXd d = z[j] - zbar;
                info += v[j] / s * d * d.transpose();
            }
        }
    }
    return info;
}

Outcome recovery()
{
    const auto truth = mnl_truth();
    const auto w = idx(Coef::IsWalkHome);
    std::string detail = "MNL ratios inside 3 SE per seed:";
    bool pass = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig sc;
        sc.users = 20000;
        sc.alternatives = 30;
        sc.truth = truth;
        sc.seed = seed;
        const auto ds = generate_dataset(sc);
        const auto fit = fit_mnl(ds.data, ParameterSet{}, EstimationConfig{});
        const Eigen::MatrixXd cov = mnl_information(ds.data, fit.params.mu).inverse();
        const auto& b = fit.params.mu;
        std::size_t inside = 0;
        for (std::size_t k = 0; k < kNumCoef; ++k) {
            const double r = b[k] / b[w];
            double var = 0;
            if (k != w) {
                // delta method for b_k / b_w
                const double gk = 1 / b[w], gw = -b[k] / (b[w] * b[w]);
                var = gk * gk * cov(k, k) + gw * gw * cov(w, w) + 2 * gk * gw * cov(k, w);
            }
            inside += std::abs(r - truth.mu[k]) <= 3 * std::sqrt(var) ? 1 : 0;
        }
        detail += ' ' + std::to_string(inside) + "/13";
        pass = pass && fit.status == FitStatus::Converged && inside >= 12;
    }

    const auto mt = mxl_truth();
    SynthConfig sc;
    sc.users = 2000;
    sc.min_observations = 5;
    sc.max_observations = 5;
    sc.alternatives = 10;
    sc.truth = mt;
    sc.seed = 11;
    const auto ds = generate_dataset(sc);
    EstimationConfig cfg;
    cfg.draws = 500;
    cfg.seed = 11;
    const auto mnl = fit_mnl(ds.data, ParameterSet{}, cfg);
    ParameterSet init = mnl.params;
    init.sigma.fill(0.1);
    const auto fit = fit_mxl(ds.data, init, cfg);
    const auto est = fit.params.to_vector();
    const auto tv = mt.to_vector();
    std::size_t inside = 0;
    for (std::size_t k = 0; k < tv.size(); ++k) {
        inside += std::abs(est[k] - tv[k]) <= 3 * fit.std_errors[k] ? 1 : 0;
    }
    detail += "; MXL coefficients inside 3 SE " + std::to_string(inside) + "/26 (" +
              std::string(to_string(fit.status)) + ")";
    pass = pass && inside >= 20;
    return {pass, detail};
}

// ---------------------------------------------------------------------------

Outcome degenerate_mixed()
{
    SplitMix64 rng{0x73696730};
    double worst = 0;
    for (std::size_t R : {1, 2, 17, 50, 500}) {
        for (int rep = 0; rep < 6; ++rep) {
            const auto data = oracle::random_panel(rng, 2 + rng() % 10, 5, 12);
            const auto dp = DesignPanel::compile(data);
            auto theta = oracle::random_vector(rng, 2 * kNumCoef, 1.5);
            std::fill(theta.begin() + kNumCoef, theta.end(), 0.0);
            const auto draws = DrawMatrix::generate(dp.num_users(), R, rng());
            const auto mx = mxl_simulated_loglik(dp, theta, draws);
            const auto mn = mnl_loglik(dp, std::span<const double>(theta.data(), kNumCoef));
            worst = std::max(worst, std::abs(mx.value - mn.value));
            for (std::size_t k = 0; k < kNumCoef; ++k) {
                worst = std::max(worst, std::abs(mx.gradient[k] - mn.gradient[k]));
            }
        }
    }
    return {worst <= 1e-10, "max |LL_MXL - LL_MNL| incl. gradients " + num(worst, 3)};
}

// ---------------------------------------------------------------------------

Outcome siting_exactness()
{
    SplitMix64 rng{0x73697465};
    std::size_t mismatches = 0, solved = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t cand = 1 + rng() % 12;
        const std::size_t ex = rng() % 4;
        const std::size_t cust = 1 + rng() % 30;
        SitingInstance inst;
        for (std::size_t j = 0; j < cand + ex; ++j) {
            char id[16];
            std::snprintf(id, sizeof id, j < cand ? "cand_%02zu" : "old_%zu", j);
            inst.utilities.station_ids.push_back(id);
            inst.existing.push_back(j >= cand);
        }
        for (std::size_t i = 0; i < cust; ++i) {
            inst.utilities.customer_ids.push_back("c" + std::to_string(i));
            for (std::size_t j = 0; j < cand + ex; ++j) {
                inst.utilities.values.push_back(-5 + 10 * rng.open_uniform());
            }
        }
        inst.p = 1 + rng() % std::min<std::size_t>(4, cand);
        for (bool consider : {true, false}) {
            inst.consider_existing = consider;
            for (auto model : {SitingModel::PMedian, SitingModel::MaxMin}) {
                inst.model = model;
                double best = -std::numeric_limits<double>::infinity();
                oracle::for_each_subset(cand, inst.p, [&](std::vector<std::size_t> const& pick) {
                    double sum = 0, worst = std::numeric_limits<double>::infinity();
                    for (std::size_t i = 0; i < cust; ++i) {
                        double b = -std::numeric_limits<double>::infinity();
                        for (std::size_t j = cand; consider && j < cand + ex; ++j) {
                            b = std::max(b, inst.utilities.at(i, j));
                        }
                        for (auto j : pick) {
                            b = std::max(b, inst.utilities.at(i, j));
                        }
                        sum += b;
                        worst = std::min(worst, b);
                    }
                    best = std::max(best, model == SitingModel::PMedian ? sum : worst);
                });
                const auto sol = solve(inst);
                mismatches += sol.objective == best && sol.certified ? 0 : 1;
                ++solved;
            }
        }
    }
    return {mismatches == 0, std::to_string(solved - mismatches) + "/" + std::to_string(solved) +
                                 " solves equal enumeration"};
}

// ---------------------------------------------------------------------------

Outcome published_gaps()
{
    const std::array<std::array<double, 4>, 4> obj{{
        {-349.63, 3749.03, 4214.87, 655.30},
        {-365.16, 3806.87, 4229.70, 672.12},
        {-360.66, 3789.83, 4236.95, 789.65},
        {-361.83, 3799.21, 4228.15, 797.29},
    }};
    const std::array<std::array<double, 4>, 4> gap{{
        {0, 1.52, 0.52, 17.81},
        {4.44, 0, 0.17, 15.70},
        {3.15, 0.45, 0, 0.96},
        {3.49, 0.20, 0.21, 0},
    }};
    const auto g = gap_matrix_from_objectives(obj);
    double err = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            err = std::max(err, std::abs(g.gap[i][j] - gap[i][j]));
        }
    }
    return {err <= 0.01, "max gap error " + num(err, 3) + " pp"};
}

// ---------------------------------------------------------------------------

Outcome fold_disjointness()
{
    SplitMix64 rng{0x666f6c64};
    std::size_t bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto data = oracle::random_panel(rng, 10 + rng() % 40, 6, 4);
        const std::size_t k = 2 + rng() % 5;
        const auto plan = grouped_kfold(user_counts(data), k, rng());
        EstimationConfig cfg;
        cfg.mode = rng() % 2 == 0 ? CvMode::L2Style : CvMode::L3Style;
        cfg.seed = rng();
        if (cfg.mode == CvMode::L2Style) {
            const auto smallest = *std::min_element(plan.observations.begin(), plan.observations.end());
            cfg.sample_size = 1 + rng() % smallest;
        }
        std::map<std::string, UserPanel const*> by_id;
        for (auto const& u : data.users()) {
            by_id[u.user_id] = &u;
        }
        for (std::size_t n = 0; n < k; ++n) {
            const auto fd = make_fold(data, plan, n, cfg);
            std::set<std::string> est;
            for (auto const& u : fd.estimation.users()) {
                est.insert(u.user_id);
            }
            for (auto const& u : fd.validation.users()) {
                auto const& full = *by_id.at(u.user_id);
                const bool ok = est.count(u.user_id) == 0 && u.observations.size() == 1 &&
                                u.observations[0].when == full.observations.back().when &&
                                u.observations[0].chosen == full.observations.back().chosen;
                bad += ok ? 0 : 1;
            }
            // every user outside the estimation side of the split is validated
            std::size_t expected = 0;
            for (auto const& u : data.users()) {
                const bool in_fold = plan.fold_of_user(u.user_id) == n;
                expected += (cfg.mode == CvMode::L3Style) == in_fold ? 1 : 0;
            }
            bad += fd.validation.num_users() == expected ? 0 : 1;
        }
    }
    return {bad == 0, std::to_string(bad) + " violations over 100 plans"};
}

// ---------------------------------------------------------------------------

Outcome scale_invariance()
{
    SplitMix64 rng{0x7363616c};
    double worst = 0;
    const std::size_t draws = 200;
    const auto eta = scenario_eta(draws, 3);
    for (int f = 0; f < 10; ++f) {
        ParameterSet fold;
        fold.kind = ModelKind::MXL;
        fold.assign(oracle::random_vector(rng, 2 * kNumCoef, 1.0));
        fold.mean(Coef::IsWalkHome) = 0.3 + rng.open_uniform();
        for (int pair = 0; pair < 5; ++pair) {
            const auto z = design_row(oracle::random_alt(rng));
            const auto base = fold_scenarios(z, fold, f, pair, 0, draws, 3, eta);
            for (double c : {0.1, 3.0, 42.0}) {
                const auto scaled = fold.scaled(c);
                const auto s = fold_scenarios(z, scaled, f, pair, 0, draws, 3, eta, c);
                for (std::size_t r = 0; r < draws; ++r) {
                    worst = std::max(worst, std::abs(s[r] - base[r]));
                }
                // systematic part alone
                const std::span<const double> e(eta.data(), kNumCoef);
                worst = std::max(worst, std::abs(ratio_utility(z, scaled, e, 0.0, c) - ratio_utility(z, fold, e, 0.0)));
            }
        }
    }
    return {worst < 1e-12, "max-norm change " + num(worst, 3)};
}

// ---------------------------------------------------------------------------

Outcome probability_invariants()
{
    SplitMix64 rng{0x70726f62};
    double sum_err = 0, shift_err = 0, mc_err = 0;
    for (int f = 0; f < 20; ++f) {
        const auto v = oracle::random_vector(rng, 2 + rng() % 7, 2.0);
        const auto p = mnl_probabilities(v);
        double s = 0;
        for (double x : p) {
            s += x;
        }
        sum_err = std::max(sum_err, std::abs(s - 1));
        for (double c : {-50.0, 3.7, 700.0}) {
            auto w = v;
            for (auto& x : w) {
                x += c;
            }
            const auto q = mnl_probabilities(w);
            for (std::size_t j = 0; j < p.size(); ++j) {
                shift_err = std::max(shift_err, std::abs(q[j] - p[j]));
            }
        }
        const auto shares = choice_share_oracle(v, 1000000, f);
        for (std::size_t j = 0; j < p.size(); ++j) {
            mc_err = std::max(mc_err, std::abs(shares[j] - p[j]));
        }
    }
    return {sum_err <= 1e-12 && shift_err <= 1e-12 && mc_err <= 0.002,
            "|sum P - 1| " + num(sum_err, 3) + ", shift " + num(shift_err, 3) + ", Monte Carlo " + num(mc_err, 3)};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> tree_hashes(fs::path const& dir)
{
    std::map<std::string, std::string> out;
    for (auto const& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), dir).generic_string()] = hash_file(e.path());
        }
    }
    return out;
}

Outcome determinism()
{
    std::vector<std::map<std::string, std::string>> runs;
    for (int run = 0; run < 2; ++run) {
        const auto root = fs::temp_directory_path() / ("evcs_acceptance_run" + std::to_string(run));
        fs::remove_all(root);
        pipeline::Context ctx;
        ctx.data_dir = root / "data";
        ctx.work_dir = root / "work";
        ctx.seed = 2024;
        ctx.jobs = 1;
        pipeline::run_synth(ctx);
        ctx.config = Config::load(ctx.data_dir / "config.txt");
        pipeline::run_all(ctx);
        runs.push_back(tree_hashes(root));
        fs::remove_all(root);
    }
    std::size_t differ = 0;
    for (auto const& [rel, h] : runs[0]) {
        auto it = runs[1].find(rel);
        differ += it != runs[1].end() && it->second == h ? 0 : 1;
    }
    differ += runs[0].size() == runs[1].size() ? 0 : 1;
    return {differ == 0 && !runs[0].empty(),
            std::to_string(runs[0].size()) + " files, " + std::to_string(differ) + " differ"};
}

} // namespace

int main()
{
    struct Criterion {
        int id;
        std::string name;
        std::function<Outcome()> run;
        double budget_s;
    };
    const std::vector<Criterion> all{
        {1, "indicator arithmetic", indicator_arithmetic, 1},
        {2, "analytic gradients", gradients, 30},
        {3, "parameter recovery", recovery, 600},
        {4, "zero-spread mixed logit equals MNL", degenerate_mixed, 60},
        {5, "exact siting vs enumeration", siting_exactness, 120},
        {6, "gap matrix from published objectives", published_gaps, 1},
        {7, "fold disjointness", fold_disjointness, 60},
        {8, "ratio scale invariance", scale_invariance, 10},
        {9, "probability invariants", probability_invariants, 120},
        {10, "byte-identical artifacts", determinism, 600},
    };
    int failures = 0;
    for (auto const& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (std::exception const& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool ok = o.pass && secs <= c.budget_s;
        failures += ok ? 0 : 1;
        std::printf("criterion %2d %-40s %s  %s; %.2fs (budget %.0fs)\n", c.id, c.name.c_str(), ok ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.budget_s);
        std::fflush(stdout);
    }
    return failures;
}
