#pragma once

#include "evcs/choice.hpp"
#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/hash.hpp"
#include "evcs/parallel.hpp"
#include "evcs/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace evcs {

enum class UtilitySpec { Distance, MNL, MXLMean, MXL25 };

inline constexpr std::array<UtilitySpec, 4> kAllSpecs{UtilitySpec::Distance, UtilitySpec::MNL, UtilitySpec::MXLMean,
                                                      UtilitySpec::MXL25};

inline std::string_view to_string(UtilitySpec s)
{
    switch (s) {
    case UtilitySpec::Distance: return "distance";
    case UtilitySpec::MNL: return "mnl";
    case UtilitySpec::MXLMean: return "mxl-mean";
    case UtilitySpec::MXL25: return "mxl-25";
    }
    return "?";
}

inline UtilitySpec parse_utility_spec(std::string_view s)
{
    for (auto spec : kAllSpecs) {
        if (to_string(spec) == s) {
            return spec;
        }
    }
    throw ValidationError("unknown utility specification '" + std::string(s) + "'");
}

/// Dense customers x stations utilities with provenance.
struct UtilityMatrix {
    std::vector<std::string> customer_ids;
    std::vector<std::string> station_ids;
    std::vector<double> values; // row-major, customers x stations
    UtilitySpec spec = UtilitySpec::Distance;
    std::uint64_t seed = 0;
    std::string config_hash;

    [[nodiscard]] std::size_t customers() const noexcept { return customer_ids.size(); }
    [[nodiscard]] std::size_t stations() const noexcept { return station_ids.size(); }
    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values[i * stations() + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * stations() + j]; }

    void validate() const
    {
        if (values.size() != customers() * stations()) {
            throw ValidationError("utility matrix dimensions do not match its id lists");
        }
        for (std::size_t x = 0; x < values.size(); ++x) {
            if (!std::isfinite(values[x])) {
                throw ValidationError("utility for customer " + customer_ids[x / stations()] + ", station " +
                                      station_ids[x % stations()] + " is not finite");
            }
        }
    }
};

inline UtilityMatrix distance_utilities(std::vector<std::string> customer_ids, std::vector<std::string> station_ids,
                                        std::vector<double> const& distances_km)
{
    UtilityMatrix u;
    u.customer_ids = std::move(customer_ids);
    u.station_ids = std::move(station_ids);
    if (distances_km.size() != u.customers() * u.stations()) {
        throw ValidationError("distance matrix dimensions do not match its id lists");
    }
    u.values.resize(distances_km.size());
    std::transform(distances_km.begin(), distances_km.end(), u.values.begin(), [](double d) { return -d; });
    u.spec = UtilitySpec::Distance;
    return u;
}

struct SimulationConfig {
    std::size_t mnl_draws_per_fold = 1000;
    std::size_t mxl_draws_per_fold = 2000;
    std::uint64_t seed = 1;
    /// Quantile used by the MXL-25 statistic (nearest rank).
    double percentile = 0.25;
    double near_threshold_km = kNearThresholdKm;
    unsigned jobs = 1;

    [[nodiscard]] std::string canonical() const
    {
        return "mnl_draws=" + std::to_string(mnl_draws_per_fold) + ";mxl_draws=" + std::to_string(mxl_draws_per_fold) +
               ";seed=" + std::to_string(seed) + ";percentile=" + csv::fmt(percentile) +
               ";near=" + csv::fmt(near_threshold_km);
    }
};

/// Nearest-rank quantile: the ceil(q n)-th smallest value (the smallest for q = 0).
inline double nearest_rank(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw ValidationError("quantile of an empty set");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw ValidationError("quantile must be in [0, 1]");
    }
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

/// One scenario's utility for a fold, in isWalkHome units:
///   sum_k (mu_k + sigma_k eta_k) / mu_wh * z_k + error_scale * eps / mu_wh.
/// `eta` may be empty (no random part). `error_scale` is the scale of the
/// fold's error term relative to a unit Gumbel.
inline double ratio_utility(std::span<const double> z, ParameterSet const& fold, std::span<const double> eta,
                            double eps, double error_scale = 1.0)
{
    const double wh = fold.mean(Coef::IsWalkHome);
    double v = 0.0;
    for (std::size_t k = 0; k < kNumCoef; ++k) {
        const double b = eta.empty() ? fold.mu[k] : fold.mu[k] + fold.sigma[k] * eta[k];
        v += b / wh * z[k];
    }
    return v + error_scale * eps / wh;
}

namespace detail {

inline void check_folds(std::vector<ParameterSet> const& folds)
{
    if (folds.empty()) {
        throw ValidationError("utility simulation needs at least one fold");
    }
    for (std::size_t n = 0; n < folds.size(); ++n) {
        const double w = folds[n].mean(Coef::IsWalkHome);
        if (w == 0.0 || !std::isfinite(w)) {
            throw ValidationError("fold " + std::to_string(n) + ": isWalkHome mean is zero, ratios undefined");
        }
    }
}

inline constexpr std::uint64_t kEpsTag = 0x657073ULL;
inline constexpr std::uint64_t kEtaTag = 0x657461ULL;

} // namespace detail

/// Normal draws eta[r][k] shared by every customer, station and fold.
inline std::vector<double> scenario_eta(std::size_t draws, std::uint64_t seed)
{
    std::vector<double> eta(draws * kNumCoef);
    SplitMix64 rng{stream_key(seed, detail::kEtaTag)};
    for (auto& e : eta) {
        e = rng.normal();
    }
    return eta;
}

/// Scenario utilities contributed by fold n for pair (i, j): `draws` values,
/// one per scenario r. Gumbel draws come from the stream (seed, i, j, n).
/// Pass `eta` (draws x 13) for the mixed specification, empty otherwise.
inline std::vector<double> fold_scenarios(std::span<const double> z, ParameterSet const& fold, std::size_t n,
                                          std::size_t i, std::size_t j, std::size_t draws, std::uint64_t seed,
                                          std::span<const double> eta, double error_scale = 1.0)
{
    std::vector<double> out(draws);
    SplitMix64 rng{stream_key(seed, detail::kEpsTag, i, j, n)};
    for (std::size_t r = 0; r < draws; ++r) {
        const double eps = rng.gumbel();
        const auto e = eta.empty() ? std::span<const double>{} : eta.subspan(r * kNumCoef, kNumCoef);
        out[r] = ratio_utility(z, fold, e, eps, error_scale);
    }
    return out;
}

/// Attributes of every customer-station pair, row-major customers x stations.
struct PairAttributes {
    std::vector<std::string> customer_ids;
    std::vector<std::string> station_ids;
    std::vector<AttributeVector> x;

    [[nodiscard]] AttributeVector const& at(std::size_t i, std::size_t j) const
    {
        return x[i * station_ids.size() + j];
    }
};

inline UtilityMatrix simulate_utilities(PairAttributes const& attrs, std::vector<ParameterSet> const& folds,
                                        UtilitySpec spec, SimulationConfig const& cfg)
{
    if (spec == UtilitySpec::Distance) {
        std::vector<double> d(attrs.x.size());
        std::transform(attrs.x.begin(), attrs.x.end(), d.begin(), [](auto const& a) { return a.dist_km; });
        auto u = distance_utilities(attrs.customer_ids, attrs.station_ids, d);
        u.seed = cfg.seed;
        u.config_hash = hash_string(cfg.canonical());
        return u;
    }
    detail::check_folds(folds);
    if (attrs.x.size() != attrs.customer_ids.size() * attrs.station_ids.size()) {
        throw ValidationError("pair attributes do not match the id lists");
    }
    const bool mixed = spec != UtilitySpec::MNL;
    const std::size_t draws = mixed ? cfg.mxl_draws_per_fold : cfg.mnl_draws_per_fold;
    if (draws == 0) {
        throw ValidationError("draws per fold must be at least 1");
    }
    const auto eta = mixed ? scenario_eta(draws, cfg.seed) : std::vector<double>{};

    UtilityMatrix u;
    u.customer_ids = attrs.customer_ids;
    u.station_ids = attrs.station_ids;
    u.values.assign(attrs.x.size(), 0.0);
    u.spec = spec;
    u.seed = cfg.seed;
    u.config_hash = hash_string(cfg.canonical() + ";spec=" + std::string(to_string(spec)));
    const std::size_t M = u.stations();

    parallel_for(u.customers(), cfg.jobs, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> all;
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j < M; ++j) {
                const auto z = design_row(attrs.at(i, j), cfg.near_threshold_km);
                all.clear();
                for (std::size_t n = 0; n < folds.size(); ++n) {
                    const auto s = fold_scenarios(z, folds[n], n, i, j, draws, cfg.seed, eta);
                    all.insert(all.end(), s.begin(), s.end());
                }
                double v = 0.0;
                if (spec == UtilitySpec::MXL25) {
                    v = nearest_rank(all, cfg.percentile);
                } else {
                    v = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
                }
                u.values[i * M + j] = v;
            }
        }
    });
    return u;
}

// ---------------------------------------------------------------------------
// Persistence: `customer_id,station_id,u` plus a key-value manifest.

inline std::string utility_csv(UtilityMatrix const& u)
{
    std::string out = "customer_id,station_id,u\n";
    for (std::size_t i = 0; i < u.customers(); ++i) {
        for (std::size_t j = 0; j < u.stations(); ++j) {
            out += u.customer_ids[i] + ',' + u.station_ids[j] + ',' + csv::fmt(u.at(i, j)) + '\n';
        }
    }
    return out;
}

inline std::string utility_manifest(UtilityMatrix const& u, std::string const& csv_text)
{
    return "spec = " + std::string(to_string(u.spec)) + "\nseed = " + std::to_string(u.seed) +
           "\nconfig_hash = " + u.config_hash + "\ncontent_hash = " + hash_string(csv_text) + '\n';
}

/// Reads the long format back; customers and stations keep first-seen order.
/// Every pair must be present exactly once.
inline UtilityMatrix read_utility_csv(csv::Table const& t, UtilitySpec spec = UtilitySpec::Distance)
{
    t.require({"customer_id", "station_id", "u"});
    const auto ci = t.column("customer_id"), cs = t.column("station_id"), cu = t.column("u");
    UtilityMatrix u;
    u.spec = spec;
    std::map<std::string, std::size_t> cidx, sidx;
    for (std::size_t r = 0; r < t.size(); ++r) {
        if (cidx.emplace(t.at(r, ci), cidx.size()).second) {
            u.customer_ids.push_back(t.at(r, ci));
        }
        if (sidx.emplace(t.at(r, cs), sidx.size()).second) {
            u.station_ids.push_back(t.at(r, cs));
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    u.values.assign(u.customers() * u.stations(), nan);
    for (std::size_t r = 0; r < t.size(); ++r) {
        double& cell = u.at(cidx.at(t.at(r, ci)), sidx.at(t.at(r, cs)));
        if (!std::isnan(cell)) {
            throw ValidationError(t.source() + ": duplicate utility for customer " + t.at(r, ci) + ", station " +
                                  t.at(r, cs));
        }
        cell = t.number(r, cu);
    }
    for (std::size_t x = 0; x < u.values.size(); ++x) {
        if (std::isnan(u.values[x])) {
            throw ValidationError(t.source() + ": missing utility for customer " + u.customer_ids[x / u.stations()] +
                                  ", station " + u.station_ids[x % u.stations()]);
        }
    }
    u.validate();
    return u;
}

} // namespace evcs
