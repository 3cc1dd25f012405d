#pragma once

#include "evcs/choice.hpp"
#include "evcs/error.hpp"
#include "evcs/metrics.hpp"
#include "evcs/optim.hpp"
#include "evcs/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace evcs {

// ---------------------------------------------------------------------------
// Grouped k-fold plan

struct UserCount {
    std::string user_id;
    std::size_t observations = 0;
};

/// Assignment of users to k groups with similar observation totals.
struct FoldPlan {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> user_ids;
    std::vector<std::size_t> fold_of;         // parallel to user_ids
    std::vector<std::size_t> observations;    // total observations per fold

    [[nodiscard]] std::vector<std::string> users_in(std::size_t fold) const
    {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < user_ids.size(); ++i) {
            if (fold_of[i] == fold) {
                out.push_back(user_ids[i]);
            }
        }
        return out;
    }

    [[nodiscard]] std::size_t fold_of_user(std::string const& id) const
    {
        for (std::size_t i = 0; i < user_ids.size(); ++i) {
            if (user_ids[i] == id) {
                return fold_of[i];
            }
        }
        throw ValidationError("user '" + id + "' is not in the fold plan");
    }
};

/// Seeded shuffle, then users in decreasing observation count are placed one
/// at a time into the group with the fewest observations so far (lowest index
/// on ties).
inline FoldPlan grouped_kfold(std::vector<UserCount> users, std::size_t k, std::uint64_t seed)
{
    if (k == 0 || k > users.size()) {
        throw ValidationError("fold count must be in [1, number of users]");
    }
    SplitMix64 rng{stream_key(seed, 0x666f6c64ULL)};
    for (std::size_t i = users.size(); i > 1; --i) {
        const std::size_t j = rng() % i;
        std::swap(users[i - 1], users[j]);
    }
    std::stable_sort(users.begin(), users.end(),
                     [](UserCount const& a, UserCount const& b) { return a.observations > b.observations; });
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.observations.assign(k, 0);
    std::vector<std::size_t> members(k, 0);
    for (auto const& u : users) {
        std::size_t best = 0;
        for (std::size_t g = 1; g < k; ++g) {
            if (plan.observations[g] < plan.observations[best] ||
                (plan.observations[g] == plan.observations[best] && members[g] < members[best])) {
                best = g;
            }
        }
        plan.user_ids.push_back(u.user_id);
        plan.fold_of.push_back(best);
        plan.observations[best] += u.observations;
        ++members[best];
    }
    return plan;
}

inline std::vector<UserCount> user_counts(PanelDataset const& data)
{
    std::vector<UserCount> out;
    for (auto const& u : data.users()) {
        out.push_back({u.user_id, u.observations.size()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Outlier trimming

struct TrimResult {
    PanelDataset kept;
    double cutoff_km = 0.0;
    std::size_t removed = 0;
};

/// Drops observations whose chosen-station distance strictly exceeds the
/// empirical `quantile` (linear interpolation between order statistics).
inline TrimResult trim_distance_outliers(PanelDataset const& data, double quantile = 0.98)
{
    if (!(quantile > 0.0 && quantile < 1.0)) {
        throw ValidationError("outlier quantile must be in (0, 1)");
    }
    std::vector<double> dist;
    for (auto const& u : data.users()) {
        for (auto const& o : u.observations) {
            dist.push_back(o.chosen_attributes().dist_km);
        }
    }
    TrimResult r;
    if (dist.empty()) {
        return r;
    }
    std::sort(dist.begin(), dist.end());
    r.cutoff_km = quantile_sorted(dist, quantile);
    for (auto const& u : data.users()) {
        UserPanel p{u.user_id, {}};
        for (auto const& o : u.observations) {
            if (o.chosen_attributes().dist_km > r.cutoff_km) {
                ++r.removed;
            } else {
                p.observations.push_back(o);
            }
        }
        if (!p.observations.empty()) {
            r.kept.add_user(std::move(p));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Maximum likelihood

enum class CvMode { L2Style, L3Style };

struct EstimationConfig {
    CvMode mode = CvMode::L3Style;
    std::size_t sample_size = 5000;
    std::size_t draws = 1000;
    DrawScheme draw_scheme = DrawScheme::Pseudo;
    LbfgsOptions optimizer{};
    std::uint64_t seed = 1;
    double outlier_quantile = 0.98;
    double near_threshold_km = kNearThresholdKm;
    unsigned jobs = 1;
    /// Relative step of the finite-difference Hessian.
    double hessian_step = 1e-5;
    /// Starting standard deviation for MXL fits started from an MNL point.
    double initial_sigma = 0.1;

    EstimationConfig() { optimizer.divergence_bound = 50.0; }
};

enum class FitStatus { Converged, NotConverged, Diverged };

inline std::string_view to_string(FitStatus s)
{
    switch (s) {
    case FitStatus::Converged: return "converged";
    case FitStatus::NotConverged: return "not_converged";
    case FitStatus::Diverged: return "diverged";
    }
    return "?";
}

struct EstimationResult {
    ParameterSet params;
    std::vector<double> std_errors; // 13 (MNL) or 26 (MXL); NaN where undefined
    FitStatus status = FitStatus::NotConverged;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
    double ll_final = 0.0;
    std::vector<double> ll_trace;
    std::vector<std::size_t> non_identified; // parameter indices with zero information
    std::size_t num_observations = 0;
    std::size_t num_users = 0;

    [[nodiscard]] bool identified() const noexcept { return non_identified.empty(); }
};

namespace detail {

/// Observed information (negative Hessian of the log-likelihood) by central
/// differences of the analytic gradient.
template <class Fn>
Eigen::MatrixXd observed_information(Fn&& fg, std::vector<double> const& x, double rel_step)
{
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd H(n, n);
    std::vector<double> xp = x, xm = x;
    for (Eigen::Index l = 0; l < n; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        const double h = rel_step * std::max(1.0, std::abs(x[ul]));
        xp[ul] = x[ul] + h;
        xm[ul] = x[ul] - h;
        const auto gp = fg(std::span<const double>(xp)).gradient;
        const auto gm = fg(std::span<const double>(xm)).gradient;
        for (Eigen::Index k = 0; k < n; ++k) {
            H(k, l) = -(gp[static_cast<std::size_t>(k)] - gm[static_cast<std::size_t>(k)]) / (2.0 * h);
        }
        xp[ul] = xm[ul] = x[ul];
    }
    return 0.5 * (H + H.transpose());
}

/// Standard errors from the inverse information restricted to identified
/// coordinates. Coordinates with (numerically) zero information are reported
/// in `non_identified` and get NaN.
inline std::vector<double> standard_errors(Eigen::MatrixXd const& info, std::vector<std::size_t>& non_identified)
{
    const auto n = info.rows();
    const double scale = std::max(1.0, info.cwiseAbs().maxCoeff());
    std::vector<Eigen::Index> keep;
    non_identified.clear();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (info.row(k).cwiseAbs().maxCoeff() <= 1e-10 * scale) {
            non_identified.push_back(static_cast<std::size_t>(k));
        } else {
            keep.push_back(k);
        }
    }
    std::vector<double> se(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
    if (keep.empty()) {
        return se;
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
            sub(a, b) = info(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]);
        }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sub);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        return se;
    }
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(m, m));
    for (Eigen::Index a = 0; a < m; ++a) {
        const double v = cov(a, a);
        se[static_cast<std::size_t>(keep[static_cast<std::size_t>(a)])] =
            v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
    }
    return se;
}

template <class Fn>
EstimationResult run_fit(Fn&& fg, ParameterSet init, EstimationConfig const& cfg)
{
    auto opt = maximize(fg, init.to_vector(), cfg.optimizer);
    EstimationResult r;
    r.params = init;
    r.params.assign(opt.x);
    r.iterations = opt.iterations;
    r.gradient_norm = inf_norm(opt.gradient);
    r.ll_final = opt.value;
    r.ll_trace = std::move(opt.trace);
    switch (opt.status) {
    case OptimStatus::Converged: r.status = FitStatus::Converged; break;
    case OptimStatus::Diverged: r.status = FitStatus::Diverged; break;
    default: r.status = FitStatus::NotConverged; break;
    }
    const auto info = observed_information(fg, opt.x, cfg.hessian_step);
    r.std_errors = standard_errors(info, r.non_identified);
    return r;
}

} // namespace detail

/// MNL maximum likelihood from `init` (MNL kind; sigma ignored).
inline EstimationResult fit_mnl(DesignPanel const& dp, ParameterSet init, EstimationConfig const& cfg)
{
    init.kind = ModelKind::MNL;
    init.sigma.fill(0.0);
    init.near_threshold_km = cfg.near_threshold_km;
    auto fg = [&](std::span<const double> b) { return mnl_loglik(dp, b, cfg.jobs); };
    auto r = detail::run_fit(fg, init, cfg);
    r.num_observations = dp.num_observations();
    r.num_users = dp.num_users();
    return r;
}

inline EstimationResult fit_mnl(PanelDataset const& data, ParameterSet init, EstimationConfig const& cfg)
{
    return fit_mnl(DesignPanel::compile(data, cfg.near_threshold_km), std::move(init), cfg);
}

/// Panel MXL by simulated maximum likelihood with draws frozen for the whole
/// run. Fitted standard deviations are reported as absolute values.
inline EstimationResult fit_mxl(DesignPanel const& dp, ParameterSet init, EstimationConfig const& cfg)
{
    init.kind = ModelKind::MXL;
    init.near_threshold_km = cfg.near_threshold_km;
    init.seed = cfg.seed;
    init.draws = cfg.draws;
    const auto draws = DrawMatrix::generate(dp.num_users(), cfg.draws, cfg.seed, cfg.draw_scheme);
    auto fg = [&](std::span<const double> t) { return mxl_simulated_loglik(dp, t, draws, cfg.jobs); };
    auto r = detail::run_fit(fg, init, cfg);
    for (auto& s : r.params.sigma) {
        s = std::abs(s);
    }
    r.num_observations = dp.num_observations();
    r.num_users = dp.num_users();
    return r;
}

inline EstimationResult fit_mxl(PanelDataset const& data, ParameterSet init, EstimationConfig const& cfg)
{
    return fit_mxl(DesignPanel::compile(data, cfg.near_threshold_km), std::move(init), cfg);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldData {
    PanelDataset estimation;
    PanelDataset validation; // last observation of each validation user
    std::vector<std::string> estimation_users;
    std::vector<std::string> validation_users;
};

/// Estimation and validation sets of one fold.
///  - L3-style: estimate on every group except `fold`, validate on `fold`.
///  - L2-style: estimate on a uniform sample of `sample_size` observations
///    of group `fold`, validate on every other group.
inline FoldData make_fold(PanelDataset const& data, FoldPlan const& plan, std::size_t fold,
                          EstimationConfig const& cfg)
{
    if (plan.k < 2) {
        throw ValidationError("cross-validation needs at least two folds");
    }
    if (fold >= plan.k) {
        throw ValidationError("fold index out of range");
    }
    std::unordered_map<std::string, std::size_t> fold_of;
    for (std::size_t i = 0; i < plan.user_ids.size(); ++i) {
        fold_of.emplace(plan.user_ids[i], plan.fold_of[i]);
    }
    std::vector<std::size_t> group(data.num_users());
    for (std::size_t i = 0; i < data.num_users(); ++i) {
        auto it = fold_of.find(data.users()[i].user_id);
        if (it == fold_of.end()) {
            throw ValidationError("user '" + data.users()[i].user_id + "' is not in the fold plan");
        }
        group[i] = it->second;
    }

    FoldData fd;
    auto take_last = [&](UserPanel const& u) {
        fd.validation_users.push_back(u.user_id);
        fd.validation.add_user({u.user_id, {u.observations.back()}});
    };

    if (cfg.mode == CvMode::L3Style) {
        for (std::size_t i = 0; i < data.num_users(); ++i) {
            auto const& u = data.users()[i];
            if (group[i] == fold) {
                take_last(u);
            } else {
                fd.estimation_users.push_back(u.user_id);
                fd.estimation.add_user(u);
            }
        }
    } else {
        struct Ref {
            std::size_t user, obs;
        };
        std::vector<Ref> pool;
        for (std::size_t i = 0; i < data.num_users(); ++i) {
            auto const& u = data.users()[i];
            if (group[i] == fold) {
                for (std::size_t t = 0; t < u.observations.size(); ++t) {
                    pool.push_back({i, t});
                }
            } else {
                take_last(u);
            }
        }
        if (cfg.sample_size > pool.size()) {
            throw ValidationError("sample size " + std::to_string(cfg.sample_size) + " exceeds the " +
                                  std::to_string(pool.size()) + " observations of group " + std::to_string(fold));
        }
        // partial Fisher-Yates: the first sample_size entries are the sample
        SplitMix64 rng{stream_key(cfg.seed, 0x73616d70ULL, fold)};
        for (std::size_t i = 0; i < cfg.sample_size; ++i) {
            const std::size_t j = i + rng() % (pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(cfg.sample_size);
        std::sort(pool.begin(), pool.end(),
                  [](Ref const& a, Ref const& b) { return a.user != b.user ? a.user < b.user : a.obs < b.obs; });
        for (std::size_t a = 0; a < pool.size();) {
            auto const& u = data.users()[pool[a].user];
            UserPanel p{u.user_id, {}};
            std::size_t b = a;
            for (; b < pool.size() && pool[b].user == pool[a].user; ++b) {
                p.observations.push_back(u.observations[pool[b].obs]);
            }
            fd.estimation_users.push_back(u.user_id);
            fd.estimation.add_user(std::move(p));
            a = b;
        }
    }
    if (fd.validation.num_users() == 0) {
        throw ValidationError("fold " + std::to_string(fold) + " has an empty validation set");
    }
    if (fd.estimation.num_users() == 0) {
        throw ValidationError("fold " + std::to_string(fold) + " has an empty estimation set");
    }
    return fd;
}

struct FoldOutcome {
    EstimationResult fit;
    IndicatorReport estimation;
    IndicatorReport validation;
    std::vector<std::string> estimation_users;
    std::vector<std::string> validation_users;
};

struct CvResult {
    ModelKind kind = ModelKind::MNL;
    std::vector<FoldOutcome> folds;
    RatioTable ratios;
};

/// Fits fold n on its estimation set. MXL fits start from the fold's MNL
/// estimate with every sigma at `initial_sigma`.
inline EstimationResult fit_fold(FoldData const& fd, std::size_t n, ModelKind kind, EstimationConfig const& cfg)
{
    const auto est = DesignPanel::compile(fd.estimation, cfg.near_threshold_km);
    EstimationConfig fold_cfg = cfg;
    fold_cfg.seed = stream_key(cfg.seed, 0x65737469ULL, n);
    EstimationResult fit = fit_mnl(est, ParameterSet{}, fold_cfg);
    if (kind == ModelKind::MXL) {
        ParameterSet init = fit.params;
        init.sigma.fill(cfg.initial_sigma);
        fit = fit_mxl(est, init, fold_cfg);
    }
    return fit;
}

inline IndicatorReport estimation_report(FoldData const& fd, EstimationResult const& fit,
                                         EstimationConfig const& cfg)
{
    const auto est = DesignPanel::compile(fd.estimation, cfg.near_threshold_km);
    return indicators(null_loglik(est), fit.ll_final, fit.params.num_free(), est.num_observations());
}

/// Out-of-sample indicators of fold n. MXL validation draws come from a
/// stream distinct from the estimation draws. `average` (MNL form), when
/// given, adds the "average" DPSA entry.
inline IndicatorReport validation_report(FoldData const& fd, std::size_t n, ParameterSet const& params,
                                         EstimationConfig const& cfg, ParameterSet const* average = nullptr)
{
    const auto val = DesignPanel::compile(fd.validation, cfg.near_threshold_km);
    const bool mixed = params.kind == ModelKind::MXL;
    DrawMatrix vdraws;
    double ll = 0.0;
    if (mixed) {
        vdraws = DrawMatrix::generate(val.num_users(), cfg.draws, stream_key(cfg.seed, 0x76616cULL, n),
                                      cfg.draw_scheme);
        ll = mxl_simulated_loglik(val, params.to_vector(), vdraws, cfg.jobs).value;
    } else {
        ll = mnl_loglik(val, params.mu, cfg.jobs).value;
    }
    auto r = indicators(null_loglik(val), ll, params.num_free(), val.num_observations());
    r.dpsa["null"] = dpsa(null_chosen_probabilities(val));
    r.dpsa["final"] = dpsa(chosen_probabilities(val, params, mixed ? &vdraws : nullptr));
    r.dpsa["closest"] = dpsa(closest_chosen_probabilities(val));
    if (average != nullptr) {
        r.dpsa["average"] = dpsa(chosen_probabilities(val, *average));
    }
    return r;
}

/// Cross-fold average ratio coefficients in MNL form (experimental
/// "average" predictor).
inline ParameterSet average_ratio_parameters(RatioTable const& t)
{
    ParameterSet avg = t.average();
    avg.kind = ModelKind::MNL;
    avg.sigma.fill(0.0);
    return avg;
}

/// Full cross-validation run over every fold of `plan`.
inline CvResult run_cv(PanelDataset const& data, FoldPlan const& plan, ModelKind kind, EstimationConfig const& cfg)
{
    if (plan.k < 2) {
        throw ValidationError("cross-validation needs at least two folds");
    }
    CvResult out;
    out.kind = kind;
    std::vector<FoldData> folds;
    for (std::size_t n = 0; n < plan.k; ++n) {
        folds.push_back(make_fold(data, plan, n, cfg));
        FoldOutcome fo;
        fo.fit = fit_fold(folds.back(), n, kind, cfg);
        fo.estimation = estimation_report(folds.back(), fo.fit, cfg);
        fo.estimation_users = folds.back().estimation_users;
        fo.validation_users = folds.back().validation_users;
        out.folds.push_back(std::move(fo));
    }
    std::vector<ParameterSet> params;
    for (auto const& f : out.folds) {
        params.push_back(f.fit.params);
    }
    out.ratios = ratio_table(params);
    const auto avg = average_ratio_parameters(out.ratios);
    for (std::size_t n = 0; n < plan.k; ++n) {
        out.folds[n].validation = validation_report(folds[n], n, out.folds[n].fit.params, cfg, &avg);
    }
    return out;
}

} // namespace evcs
