#pragma once

#include "evcs/choice.hpp"
#include "evcs/csv.hpp"
#include "evcs/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace evcs {

struct DistributionStats {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

/// Likelihood-ratio indices and information criteria of one model fit, plus
/// optional distributions of the probability of the chosen alternative.
struct IndicatorReport {
    double ll_null = 0.0;
    double ll_final = 0.0;
    double rho = 0.0;
    double rho_bar_sq = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    std::size_t num_params = 0;
    std::size_t num_obs = 0;
    std::map<std::string, DistributionStats> dpsa; // "final", "null", "closest", "average"
};

/// rho = 1 - ll/ll0, rho_bar^2 = 1 - (ll - K)/ll0, AIC = 2K - 2 ll,
/// BIC = K ln N - 2 ll.
inline IndicatorReport indicators(double ll_null, double ll_final, std::size_t num_params, std::size_t num_obs)
{
    if (ll_null == 0.0) {
        throw ValidationError("null log-likelihood is zero; likelihood-ratio indices are undefined");
    }
    if (num_obs == 0) {
        throw ValidationError("indicators need at least one observation");
    }
    IndicatorReport r;
    const double K = static_cast<double>(num_params);
    r.ll_null = ll_null;
    r.ll_final = ll_final;
    r.num_params = num_params;
    r.num_obs = num_obs;
    r.rho = 1.0 - ll_final / ll_null;
    r.rho_bar_sq = 1.0 - (ll_final - K) / ll_null;
    r.aic = 2.0 * K - 2.0 * ll_final;
    r.bic = K * std::log(static_cast<double>(num_obs)) - 2.0 * ll_final;
    return r;
}

inline DistributionStats dpsa(std::span<const double> chosen_probabilities)
{
    if (chosen_probabilities.empty()) {
        throw ValidationError("DPSA needs a non-empty validation set");
    }
    DistributionStats s;
    s.count = chosen_probabilities.size();
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double p : chosen_probabilities) {
        s.min = std::min(s.min, p);
        s.max = std::max(s.max, p);
        sum += p;
    }
    s.mean = sum / static_cast<double>(s.count);
    return s;
}

/// Uniform predictor: 1/m for every observation.
inline std::vector<double> null_chosen_probabilities(DesignPanel const& dp)
{
    std::vector<double> out(dp.num_observations());
    for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] = 1.0 / static_cast<double>(dp.obs_begin[t + 1] - dp.obs_begin[t]);
    }
    return out;
}

/// Nearest-station predictor: probability 1 on the shortest-distance
/// alternative (first one on ties), 0 elsewhere.
inline std::vector<double> closest_chosen_probabilities(DesignPanel const& dp)
{
    std::vector<double> out(dp.num_observations());
    for (std::size_t t = 0; t < out.size(); ++t) {
        std::size_t best = dp.obs_begin[t];
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = dp.obs_begin[t]; j < dp.obs_begin[t + 1]; ++j) {
            const auto z = dp.row(j);
            const double d = z[idx(Coef::DistNear)] + z[idx(Coef::DistFar)];
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        out[t] = best == dp.chosen_row[t] ? 1.0 : 0.0;
    }
    return out;
}

/// Log-likelihood with every coefficient at zero: sum of -ln m.
inline double null_loglik(DesignPanel const& dp)
{
    double ll = 0.0;
    for (std::size_t t = 0; t < dp.num_observations(); ++t) {
        ll -= std::log(static_cast<double>(dp.obs_begin[t + 1] - dp.obs_begin[t]));
    }
    return ll;
}

/// Coefficients divided by each fold's isWalkHome mean, and their average.
struct RatioTable {
    std::vector<CoefArray> mu_ratio;
    std::vector<CoefArray> sigma_ratio;
    CoefArray mean_mu{};
    CoefArray mean_sigma{};
    ModelKind kind = ModelKind::MNL;

    /// Average ratios as a parameter set (isWalkHome mean = 1).
    [[nodiscard]] ParameterSet average() const
    {
        ParameterSet p;
        p.kind = kind;
        p.mu = mean_mu;
        p.sigma = kind == ModelKind::MXL ? mean_sigma : CoefArray{};
        return p;
    }
};

inline RatioTable ratio_table(std::vector<ParameterSet> const& folds)
{
    if (folds.empty()) {
        throw ValidationError("ratio table needs at least one fold");
    }
    RatioTable t;
    t.kind = folds.front().kind;
    for (std::size_t n = 0; n < folds.size(); ++n) {
        const double w = folds[n].mean(Coef::IsWalkHome);
        if (w == 0.0 || !std::isfinite(w)) {
            throw ValidationError("fold " + std::to_string(n) + ": isWalkHome mean is zero, ratios undefined");
        }
        CoefArray mr{}, sr{};
        for (std::size_t k = 0; k < kNumCoef; ++k) {
            mr[k] = folds[n].mu[k] / w;
            sr[k] = folds[n].sigma[k] / w;
        }
        t.mu_ratio.push_back(mr);
        t.sigma_ratio.push_back(sr);
    }
    const double nf = static_cast<double>(folds.size());
    for (std::size_t k = 0; k < kNumCoef; ++k) {
        double a = 0.0, b = 0.0;
        for (std::size_t n = 0; n < folds.size(); ++n) {
            a += t.mu_ratio[n][k];
            b += t.sigma_ratio[n][k];
        }
        t.mean_mu[k] = a / nf;
        t.mean_sigma[k] = b / nf;
    }
    return t;
}

/// One row per indicator, one column per fold.
inline std::string indicator_csv(std::vector<IndicatorReport> const& folds)
{
    std::string out = "indicator";
    for (std::size_t n = 0; n < folds.size(); ++n) {
        out += ",fold" + std::to_string(n);
    }
    out += '\n';
    auto row = [&](std::string const& name, auto get) {
        out += name;
        for (auto const& f : folds) {
            out += ',' + csv::fixed(get(f), 4);
        }
        out += '\n';
    };
    row("null_log_likelihood", [](auto const& f) { return f.ll_null; });
    row("final_log_likelihood", [](auto const& f) { return f.ll_final; });
    row("rho", [](auto const& f) { return f.rho; });
    row("rho_bar_sq", [](auto const& f) { return f.rho_bar_sq; });
    row("aic", [](auto const& f) { return f.aic; });
    row("bic", [](auto const& f) { return f.bic; });
    for (std::string const name : {"null", "final", "average", "closest"}) {
        if (folds.empty() || folds.front().dpsa.count(name) == 0) {
            continue;
        }
        row("dpsa_" + name + "_min", [&](auto const& f) { return f.dpsa.at(name).min; });
        row("dpsa_" + name + "_mean", [&](auto const& f) { return f.dpsa.at(name).mean; });
        row("dpsa_" + name + "_max", [&](auto const& f) { return f.dpsa.at(name).max; });
    }
    return out;
}

/// One row per mu / sigma coefficient, one column per fold, plus the average.
inline std::string ratio_csv(RatioTable const& t)
{
    std::string out = "parameter";
    for (std::size_t n = 0; n < t.mu_ratio.size(); ++n) {
        out += ",fold" + std::to_string(n);
    }
    out += ",average\n";
    for (std::size_t k = 0; k < kNumCoef; ++k) {
        out += "beta." + std::string(kCoefNames[k]) + ".mu";
        for (auto const& f : t.mu_ratio) {
            out += ',' + csv::fixed(f[k], 4);
        }
        out += ',' + csv::fixed(t.mean_mu[k], 4) + '\n';
        if (t.kind == ModelKind::MXL) {
            out += "beta." + std::string(kCoefNames[k]) + ".sigma";
            for (auto const& f : t.sigma_ratio) {
                out += ',' + csv::fixed(f[k], 4);
            }
            out += ',' + csv::fixed(t.mean_sigma[k], 4) + '\n';
        }
    }
    return out;
}

} // namespace evcs
