#pragma once

#include "evcs/accounts.hpp"
#include "evcs/choice.hpp"
#include "evcs/error.hpp"
#include "evcs/geo.hpp"
#include "evcs/rng.hpp"
#include "evcs/siting.hpp"
#include "evcs/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace evcs {

/// Empirical argmax frequencies of V_j + Gumbel noise.
inline std::vector<double> choice_share_oracle(std::span<const double> v, std::size_t n_draws, std::uint64_t seed)
{
    if (v.empty()) {
        throw ValidationError("choice set must contain at least one alternative");
    }
    if (n_draws == 0) {
        throw ValidationError("oracle needs at least one draw");
    }
    SplitMix64 rng{stream_key(seed, 0x6f7261ULL)};
    std::vector<std::size_t> wins(v.size(), 0);
    for (std::size_t r = 0; r < n_draws; ++r) {
        std::size_t best = 0;
        double best_u = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double u = v[j] + rng.gumbel();
            if (u > best_u) {
                best_u = u;
                best = j;
            }
        }
        ++wins[best];
    }
    std::vector<double> out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        out[j] = static_cast<double>(wins[j]) / static_cast<double>(n_draws);
    }
    return out;
}

/// Index of the alternative maximizing V + Gumbel for one observation.
inline std::size_t simulate_choice(std::span<const AttributeVector> alts, std::span<const double> beta,
                                   double near_threshold_km, SplitMix64& rng)
{
    std::size_t best = 0;
    double best_u = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < alts.size(); ++j) {
        const double u = observable_utility(alts[j], beta, near_threshold_km) + rng.gumbel();
        if (u > best_u) {
            best_u = u;
            best = j;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Choice data from known parameters

struct SynthConfig {
    std::size_t users = 1000;
    std::size_t min_observations = 1;
    std::size_t max_observations = 1;
    std::size_t alternatives = 30;
    AttributeMaxima maxima = kReferenceMaximaL2;
    /// Distances are log-normal with this median and log-sd, clipped to the maximum.
    double distance_median_km = 3.0;
    double distance_log_sd = 1.0;
    double walk_probability = 0.3; // among near alternatives
    double gas_probability = 0.15;
    ParameterSet truth;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (users == 0 || alternatives == 0 || min_observations == 0 || max_observations < min_observations) {
            throw ValidationError("synthetic config needs users, alternatives and 1 <= min <= max observations");
        }
        truth.validate();
    }
};

struct SynthDataset {
    PanelDataset data;
    ParameterSet truth;
    std::vector<CoefArray> user_betas; // per user, the coefficients actually used
};

inline AttributeVector random_attributes(SynthConfig const& cfg, SplitMix64& rng)
{
    auto const& mx = cfg.maxima;
    auto uniform = [&](double hi) { return rng.open_uniform() * hi; };
    AttributeVector x;
    x.dist_km = std::min(mx.dist_km, cfg.distance_median_km * std::exp(cfg.distance_log_sd * rng.normal()));
    x.walk_home = x.dist_km <= cfg.truth.near_threshold_km && rng.open_uniform() < cfg.walk_probability ? 1.0 : 0.0;
    x.outlets = 1.0 + std::floor(rng.open_uniform() * mx.outlets);
    x.is_gas = rng.open_uniform() < cfg.gas_probability ? 1.0 : 0.0;
    x.rest = uniform(mx.rest);
    x.ff = uniform(mx.ff);
    x.shop = uniform(mx.shop);
    x.sm = uniform(mx.sm);
    x.mall = uniform(mx.mall);
    x.leis = uniform(mx.leis);
    x.sport = uniform(mx.sport);
    return x;
}

/// Each user gets one coefficient draw (mu + sigma eta) shared by all of
/// their observations; every observation has its own random choice set.
inline SynthDataset generate_dataset(SynthConfig const& cfg)
{
    cfg.validate();
    SynthDataset out;
    out.truth = cfg.truth;
    const auto t0 = make_time(2019, 1, 1);
    for (std::size_t i = 0; i < cfg.users; ++i) {
        SplitMix64 rng{stream_key(cfg.seed, 0x73796e74ULL, i)};
        CoefArray beta = cfg.truth.mu;
        if (cfg.truth.kind == ModelKind::MXL) {
            for (std::size_t k = 0; k < kNumCoef; ++k) {
                beta[k] += cfg.truth.sigma[k] * rng.normal();
            }
        }
        const std::size_t span = cfg.max_observations - cfg.min_observations + 1;
        const std::size_t n_obs = cfg.min_observations + rng() % span;
        UserPanel u{"u" + std::to_string(i), {}};
        for (std::size_t t = 0; t < n_obs; ++t) {
            ChoiceObservation o;
            o.user_id = u.user_id;
            o.when = t0 + std::chrono::days(static_cast<int>(t));
            for (std::size_t j = 0; j < cfg.alternatives; ++j) {
                o.alternatives.push_back(random_attributes(cfg, rng));
            }
            o.chosen = simulate_choice(o.alternatives, beta, cfg.truth.near_threshold_km, rng);
            u.observations.push_back(std::move(o));
        }
        out.data.add_user(std::move(u));
        out.user_betas.push_back(beta);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw-input world: accounts, sessions, stations, network, amenities,
// customers. Choices of private users follow the true parameters through the
// same choice-set construction the encoder uses.

struct WorldConfig {
    LatLon center{45.50, -73.60};
    double half_width_m = 3000.0;
    double grid_spacing_m = 500.0;
    std::size_t l2_stations = 12;
    std::size_t l3_stations = 4;
    std::size_t private_users = 60;
    std::size_t sessions_per_user = 6;
    std::size_t shared_accounts = 3;
    std::size_t rental_accounts = 2;
    std::size_t unplugged_accounts = 2;
    std::size_t outside_users = 3; // postal centroid outside the region
    std::size_t customers = 16;
    std::size_t amenities_per_category = 20;
    ParameterSet truth;
    std::uint64_t seed = 1;
};

struct World {
    Polygon region;
    RoadNetwork network;
    std::vector<std::pair<std::string, LatLon>> nodes;
    std::vector<std::tuple<std::string, std::string, double>> edges;
    std::vector<StationSnapshot> stations;
    AmenityHistory amenities;
    std::vector<Account> accounts;
    std::vector<Customer> customers;
    ParameterSet truth;
};

namespace detail {

inline Timestamp random_time(SplitMix64& rng, Timestamp lo, Timestamp hi)
{
    const auto span = std::chrono::duration_cast<std::chrono::minutes>(hi - lo).count();
    return lo + std::chrono::minutes(static_cast<long>(rng() % static_cast<std::uint64_t>(span)));
}

inline RawSession make_session(std::string id, std::string account, StationSnapshot const& st, Timestamp start,
                               SplitMix64& rng)
{
    RawSession s;
    s.session_id = std::move(id);
    s.account_id = std::move(account);
    s.station_id = st.station_id;
    s.outlet_id = st.station_id + "-1";
    s.level = st.level;
    s.start = start;
    s.end = start + std::chrono::minutes(30 + static_cast<int>(rng() % 180));
    s.energy_kwh = std::round((3.0 + 15.0 * rng.open_uniform()) * 1000.0) / 1000.0;
    if (st.level == Level::L3) {
        s.soc_start = std::round(10.0 + 40.0 * rng.open_uniform());
        s.soc_end = std::round(60.0 + 35.0 * rng.open_uniform());
    }
    return s;
}

} // namespace detail

inline World generate_world(WorldConfig const& cfg)
{
    World w;
    w.truth = cfg.truth;
    SplitMix64 rng{stream_key(cfg.seed, 0x776f726cULL)};
    const double h = cfg.half_width_m;
    w.region.vertices = {offset_m(cfg.center, -h, -h), offset_m(cfg.center, -h, h), offset_m(cfg.center, h, h),
                         offset_m(cfg.center, h, -h)};
    auto random_point = [&](double margin) {
        return offset_m(cfg.center, (2.0 * rng.open_uniform() - 1.0) * (h - margin),
                        (2.0 * rng.open_uniform() - 1.0) * (h - margin));
    };

    // road grid, slightly longer than straight-line
    const int n = static_cast<int>(std::floor(2.0 * h / cfg.grid_spacing_m)) + 1;
    auto node_id = [](int r, int c) { return "n" + std::to_string(r) + "_" + std::to_string(c); };
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const auto p = offset_m(cfg.center, -h + r * cfg.grid_spacing_m, -h + c * cfg.grid_spacing_m);
            w.nodes.emplace_back(node_id(r, c), p);
            w.network.add_node(node_id(r, c), p);
        }
    }
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            for (auto [dr, dc] : {std::pair{0, 1}, std::pair{1, 0}}) {
                if (r + dr >= n || c + dc >= n) {
                    continue;
                }
                const auto a = node_id(r, c), b = node_id(r + dr, c + dc);
                const double len = std::round(cfg.grid_spacing_m * (1.0 + 0.3 * rng.open_uniform()) * 10.0) / 10.0;
                w.edges.emplace_back(a, b, len);
                w.network.add_edge(a, b, len);
            }
        }
    }

    // stations: most outlets installed in 2018, a few added later
    auto add_stations = [&](std::size_t count, Level level, std::string const& prefix) {
        for (std::size_t s = 0; s < count; ++s) {
            StationSnapshot st;
            st.station_id = prefix + std::to_string(s + 1);
            st.where = random_point(200.0);
            st.level = level;
            st.operator_name = s % 7 == 6 ? "OtherNet" : "MainNet";
            const int outlets = 1 + static_cast<int>(rng() % 4);
            for (int o = 0; o < outlets; ++o) {
                st.outlet_events.push_back({make_time(2018, 1 + static_cast<unsigned>(rng() % 6), 1),
                                            OutletEventKind::Install});
            }
            if (rng() % 3 == 0) {
                st.outlet_events.push_back({make_time(2019, 6, 1), OutletEventKind::Install});
            }
            w.stations.push_back(std::move(st));
        }
    };
    add_stations(cfg.l2_stations, Level::L2, "S");
    add_stations(cfg.l3_stations, Level::L3, "F");

    // amenity snapshots at two dates
    for (auto month : {make_time(2018, 1, 1), make_time(2020, 1, 1)}) {
        AmenitySnapshot snap;
        snap.month = month_index(month);
        for (std::size_t c = 0; c < kAmenityNames.size(); ++c) {
            for (std::size_t a = 0; a < cfg.amenities_per_category; ++a) {
                snap.amenities.push_back({static_cast<AmenityCategory>(c), random_point(0.0)});
            }
            // a few amenities right next to stations so densities are non-trivial
            for (std::size_t s = 0; s < w.stations.size(); s += 2 + c % 3) {
                snap.amenities.push_back(
                    {static_cast<AmenityCategory>(c), offset_m(w.stations[s].where, 30.0 * (1.0 + c % 3), 20.0)});
            }
        }
        w.amenities.add(std::move(snap));
    }

    const auto before_lo = make_time(2018, 9, 1), before_hi = make_time(2020, 1, 31);
    const auto after_lo = make_time(2021, 7, 2), after_hi = make_time(2022, 8, 1);
    std::size_t session_counter = 0;
    auto next_sid = [&] { return "sess" + std::to_string(++session_counter); };

    // private users: choices follow the true utilities
    for (std::size_t u = 0; u < cfg.private_users + cfg.outside_users; ++u) {
        const bool outside = u >= cfg.private_users;
        Account a;
        a.account_id = (outside ? "out" : "acct") + std::to_string(u + 1);
        a.created = make_time(2018, 6, 1);
        a.postal_centroid = outside ? offset_m(cfg.center, 2.0 * h, 0.0) : random_point(300.0);
        const DistanceField field(w.network, *a.postal_centroid);
        SplitMix64 urng{stream_key(cfg.seed, 0x75736572ULL, u)};
        for (std::size_t k = 0; k < cfg.sessions_per_user; ++k) {
            const auto start = detail::random_time(urng, k % 3 == 2 ? after_lo : before_lo,
                                                   k % 3 == 2 ? after_hi : before_hi);
            const auto level = k % 4 == 3 ? Level::L3 : Level::L2;
            const auto alts = build_choice_set(w.stations, field, *a.postal_centroid, start, level, w.amenities);
            if (alts.empty()) {
                continue;
            }
            std::vector<AttributeVector> xs;
            for (auto const& alt : alts) {
                xs.push_back(alt.x);
            }
            const auto pick = simulate_choice(xs, cfg.truth.mu, cfg.truth.near_threshold_km, urng);
            auto const& st = *std::find_if(w.stations.begin(), w.stations.end(),
                                           [&](auto const& s) { return s.station_id == alts[pick].station_id; });
            a.sessions.push_back(detail::make_session(next_sid(), a.account_id, st, start, urng));
        }
        w.accounts.push_back(std::move(a));
    }
    // shared accounts: four sessions on one day
    for (std::size_t u = 0; u < cfg.shared_accounts; ++u) {
        Account a;
        a.account_id = "fleet" + std::to_string(u + 1);
        a.created = make_time(2018, 6, 1);
        a.postal_centroid = random_point(300.0);
        const auto day = detail::random_time(rng, before_lo, before_hi);
        for (int k = 0; k < 4; ++k) {
            a.sessions.push_back(detail::make_session(next_sid(), a.account_id, w.stations[(u + k) % cfg.l2_stations],
                                                      day + std::chrono::hours(3 * k), rng));
        }
        w.accounts.push_back(std::move(a));
    }
    // rental accounts: three sessions within a week of creation
    for (std::size_t u = 0; u < cfg.rental_accounts; ++u) {
        Account a;
        a.account_id = "rent" + std::to_string(u + 1);
        a.created = detail::random_time(rng, before_lo, make_time(2019, 12, 1));
        a.postal_centroid = random_point(300.0);
        for (int k = 0; k < 3; ++k) {
            a.sessions.push_back(detail::make_session(next_sid(), a.account_id, w.stations[(u + k) % cfg.l2_stations],
                                                      a.created + std::chrono::days(2 * k + 1), rng));
        }
        w.accounts.push_back(std::move(a));
    }
    for (std::size_t u = 0; u < cfg.unplugged_accounts; ++u) {
        Account a;
        a.account_id = "idle" + std::to_string(u + 1);
        a.created = make_time(2019, 3, 1);
        a.postal_centroid = random_point(300.0);
        w.accounts.push_back(std::move(a));
    }

    for (std::size_t c = 0; c < cfg.customers; ++c) {
        w.customers.push_back({"da" + std::to_string(c + 1), random_point(300.0), 1.0});
    }
    return w;
}

} // namespace evcs
