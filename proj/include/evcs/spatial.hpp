#pragma once

#include "evcs/accounts.hpp"
#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/geo.hpp"
#include "evcs/time.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evcs {

// ---------------------------------------------------------------------------
// Road network

/// Undirected (by default) weighted graph over geolocated nodes.
class RoadNetwork {
  public:
    struct Edge {
        std::size_t to;
        double length_m;
    };

    std::size_t add_node(std::string id, LatLon where)
    {
        auto [it, inserted] = index_.emplace(id, nodes_.size());
        if (!inserted) {
            throw ValidationError("duplicate network node '" + id + "'");
        }
        ids_.push_back(std::move(id));
        nodes_.push_back(where);
        adj_.emplace_back();
        return it->second;
    }

    void add_edge(std::string const& a, std::string const& b, double length_m, bool directed = false)
    {
        if (!(length_m > 0.0) || !std::isfinite(length_m)) {
            throw ValidationError("edge " + a + "-" + b + ": length must be positive");
        }
        const auto ia = node_index(a);
        const auto ib = node_index(b);
        adj_[ia].push_back({ib, length_m});
        if (!directed) {
            adj_[ib].push_back({ia, length_m});
        }
    }

    [[nodiscard]] std::size_t node_index(std::string const& id) const
    {
        auto it = index_.find(id);
        if (it == index_.end()) {
            throw ValidationError("unknown network node '" + id + "'");
        }
        return it->second;
    }

    [[nodiscard]] bool empty() const noexcept { return nodes_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] LatLon location(std::size_t i) const { return nodes_[i]; }
    [[nodiscard]] std::vector<Edge> const& edges(std::size_t i) const { return adj_[i]; }

    /// Nearest node and its great-circle distance (linear scan).
    [[nodiscard]] std::pair<std::size_t, double> nearest(LatLon p) const
    {
        if (empty()) {
            throw ValidationError("road network is empty");
        }
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const double d = haversine_m(p, nodes_[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return {best, best_d};
    }

    /// Single-source shortest path lengths in metres (infinity if unreachable).
    [[nodiscard]] std::vector<double> shortest_from(std::size_t source) const
    {
        std::vector<double> dist(nodes_.size(), std::numeric_limits<double>::infinity());
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        dist[source] = 0.0;
        heap.emplace(0.0, source);
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            heap.pop();
            if (d > dist[u]) {
                continue;
            }
            for (auto const& e : adj_[u]) {
                const double nd = d + e.length_m;
                if (nd < dist[e.to]) {
                    dist[e.to] = nd;
                    heap.emplace(nd, e.to);
                }
            }
        }
        return dist;
    }

  private:
    std::vector<std::string> ids_;
    std::vector<LatLon> nodes_;
    std::vector<std::vector<Edge>> adj_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr double kDefaultSnapRadiusM = 1000.0;

/// Snapped node of a coordinate, or nullopt when the nearest node is farther
/// than the snap radius.
inline std::optional<std::size_t> snap(RoadNetwork const& net, LatLon p, double snap_radius_m = kDefaultSnapRadiusM)
{
    auto [node, d] = net.nearest(p);
    if (d > snap_radius_m) {
        return std::nullopt;
    }
    return node;
}

/// Shortest network distance in km between the snap nodes of two points;
/// nullopt means unreachable (no path, or a point too far from the network).
inline std::optional<double> network_distance(RoadNetwork const& net, LatLon from, LatLon to,
                                              double snap_radius_m = kDefaultSnapRadiusM)
{
    if (net.empty()) {
        throw ValidationError("road network is empty");
    }
    const auto a = snap(net, from, snap_radius_m);
    const auto b = snap(net, to, snap_radius_m);
    if (!a || !b) {
        return std::nullopt;
    }
    const auto dist = net.shortest_from(*a);
    if (!std::isfinite(dist[*b])) {
        return std::nullopt;
    }
    return dist[*b] / 1000.0;
}

/// Precomputed distances from one origin; reused across stations.
class DistanceField {
  public:
    DistanceField(RoadNetwork const& net, LatLon origin, double snap_radius_m = kDefaultSnapRadiusM)
        : net_{&net}, snap_radius_m_{snap_radius_m}
    {
        if (net.empty()) {
            throw ValidationError("road network is empty");
        }
        if (auto s = snap(net, origin, snap_radius_m)) {
            dist_ = net.shortest_from(*s);
        }
    }

    [[nodiscard]] std::optional<double> km_to(LatLon p) const
    {
        if (dist_.empty()) {
            return std::nullopt;
        }
        const auto s = snap(*net_, p, snap_radius_m_);
        if (!s || !std::isfinite(dist_[*s])) {
            return std::nullopt;
        }
        return dist_[*s] / 1000.0;
    }

  private:
    RoadNetwork const* net_;
    double snap_radius_m_;
    std::vector<double> dist_;
};

// ---------------------------------------------------------------------------
// Point-radius flags and amenity densities

/// 1 iff the great-circle distance is strictly below the threshold.
inline int walk_home_flag(LatLon home, LatLon station, double threshold_m = 400.0)
{
    return haversine_m(home, station) < threshold_m ? 1 : 0;
}

enum class AmenityCategory { Restaurant, FastFood, Shop, Supermarket, Mall, Leisure, Sport, Gas };

inline constexpr std::array<std::string_view, 8> kAmenityNames{
    "restaurant", "fast_food", "shop", "supermarket", "mall", "leisure", "sport", "gas"};

inline AmenityCategory parse_amenity(std::string_view s)
{
    for (std::size_t i = 0; i < kAmenityNames.size(); ++i) {
        if (kAmenityNames[i] == s) {
            return static_cast<AmenityCategory>(i);
        }
    }
    throw ValidationError("unknown amenity category '" + std::string(s) + "'");
}

inline std::string_view to_string(AmenityCategory c) { return kAmenityNames[static_cast<std::size_t>(c)]; }

struct Amenity {
    AmenityCategory category;
    LatLon where;
};

struct AmenitySnapshot {
    int month = 0; // month_index()
    std::vector<Amenity> amenities;

    [[nodiscard]] std::size_t count_within(LatLon p, AmenityCategory c, double radius_m) const
    {
        std::size_t n = 0;
        for (auto const& a : amenities) {
            if (a.category == c && haversine_m(p, a.where) <= radius_m) {
                ++n;
            }
        }
        return n;
    }
};

enum class DensityMode { Log1p, LogOrZero };

inline double density_from_count(std::size_t n, DensityMode mode = DensityMode::Log1p)
{
    if (mode == DensityMode::Log1p) {
        return std::log1p(static_cast<double>(n));
    }
    return n == 0 ? 0.0 : std::log(static_cast<double>(n));
}

/// Log-density of one amenity category within `radius_m` of a point.
inline double amenity_density(AmenitySnapshot const& snapshot, LatLon station, AmenityCategory category,
                              double radius_m, DensityMode mode = DensityMode::Log1p)
{
    return density_from_count(snapshot.count_within(station, category, radius_m), mode);
}

/// String-keyed overload; unknown categories are an error.
inline double amenity_density(AmenitySnapshot const& snapshot, LatLon station, std::string_view category,
                              double radius_m, DensityMode mode = DensityMode::Log1p)
{
    return amenity_density(snapshot, station, parse_amenity(category), radius_m, mode);
}

inline int gas_flag(AmenitySnapshot const& snapshot, LatLon station, double radius_m = 50.0)
{
    return snapshot.count_within(station, AmenityCategory::Gas, radius_m) > 0 ? 1 : 0;
}

/// Monthly snapshots; a query uses the latest snapshot at or before the month.
class AmenityHistory {
  public:
    void add(AmenitySnapshot s) { by_month_[s.month] = std::move(s); }

    [[nodiscard]] bool empty() const noexcept { return by_month_.empty(); }

    [[nodiscard]] AmenitySnapshot const& at(Timestamp t) const { return at_month(month_index(t)); }

    [[nodiscard]] AmenitySnapshot const& at_month(int month) const
    {
        auto it = by_month_.upper_bound(month);
        if (it == by_month_.begin()) {
            throw ValidationError("no amenity snapshot at or before " + month_label(month));
        }
        return std::prev(it)->second;
    }

    [[nodiscard]] std::map<int, AmenitySnapshot> const& snapshots() const noexcept { return by_month_; }

  private:
    std::map<int, AmenitySnapshot> by_month_;
};

// ---------------------------------------------------------------------------
// Stations and choice sets

enum class OutletEventKind { Install, Close };

struct OutletEvent {
    Timestamp when;
    OutletEventKind kind;
};

struct StationSnapshot {
    std::string station_id;
    LatLon where;
    Level level = Level::L2;
    std::string operator_name;
    bool excluded_operator = false;
    std::vector<OutletEvent> outlet_events;
    std::optional<Timestamp> closed; // whole station closure

    /// Installed outlets at `t` (events at exactly `t` count), never negative.
    [[nodiscard]] int outlets_at(Timestamp t) const
    {
        if (closed && *closed <= t) {
            return 0;
        }
        int n = 0;
        for (auto const& e : outlet_events) {
            if (e.when <= t) {
                n += e.kind == OutletEventKind::Install ? 1 : -1;
            }
        }
        return std::max(n, 0);
    }
};

/// Station attributes as encoded for the utility function.
struct AttributeVector {
    double dist_km = 0.0;
    double walk_home = 0.0;
    double outlets = 0.0;
    double is_gas = 0.0;
    double rest = 0.0;
    double ff = 0.0;
    double shop = 0.0;
    double sm = 0.0;
    double mall = 0.0;
    double leis = 0.0;
    double sport = 0.0;

    friend bool operator==(AttributeVector const&, AttributeVector const&) = default;
};

/// Largest attribute values of the reference encoding, per level.
struct AttributeMaxima {
    double dist_km, outlets, rest, ff, shop, sm, mall, leis, sport;
};

inline constexpr AttributeMaxima kReferenceMaximaL2{98.658, 13, 4.635, 4.060, 5.257, 2.303, 1.099, 3.526, 2.833};
inline constexpr AttributeMaxima kReferenceMaximaL3{49.668, 5, 3.638, 2.079, 4.007, 0.693, 0.693, 3.091, 2.565};

struct EncodingConfig {
    double walk_threshold_m = 400.0;
    double gas_radius_m = 50.0;
    double amenity_radius_l2_m = 300.0;
    double amenity_radius_l3_m = 200.0;
    DensityMode density = DensityMode::Log1p;
    double snap_radius_m = kDefaultSnapRadiusM;

    [[nodiscard]] double amenity_radius(Level l) const
    {
        return l == Level::L2 ? amenity_radius_l2_m : amenity_radius_l3_m;
    }
};

/// Fills the station-side fields (outlets, gas flag, densities); distance and
/// walk flag are left for the caller.
inline AttributeVector station_attributes(LatLon where, int outlets, AmenitySnapshot const& snapshot, Level level,
                                          EncodingConfig const& cfg = {})
{
    const double r = cfg.amenity_radius(level);
    auto dens = [&](AmenityCategory c) { return amenity_density(snapshot, where, c, r, cfg.density); };
    AttributeVector x;
    x.outlets = outlets;
    x.is_gas = gas_flag(snapshot, where, cfg.gas_radius_m);
    x.rest = dens(AmenityCategory::Restaurant);
    x.ff = dens(AmenityCategory::FastFood);
    x.shop = dens(AmenityCategory::Shop);
    x.sm = dens(AmenityCategory::Supermarket);
    x.mall = dens(AmenityCategory::Mall);
    x.leis = dens(AmenityCategory::Leisure);
    x.sport = dens(AmenityCategory::Sport);
    return x;
}

struct Alternative {
    std::string station_id;
    AttributeVector x;
};

/// Stations of `level` with at least one installed outlet at `at`, reachable
/// from `home`, excluding flagged operators. Output follows input order.
inline std::vector<Alternative> build_choice_set(std::vector<StationSnapshot> const& stations,
                                                 DistanceField const& from_home, LatLon home, Timestamp at,
                                                 Level level, AmenityHistory const& amenities,
                                                 EncodingConfig const& cfg = {})
{
    std::vector<Alternative> out;
    AmenitySnapshot const* snapshot = nullptr;
    for (auto const& st : stations) {
        if (st.level != level || st.excluded_operator) {
            continue;
        }
        const int outlets = st.outlets_at(at);
        if (outlets < 1) {
            continue;
        }
        const auto d = from_home.km_to(st.where);
        if (!d) {
            continue;
        }
        if (snapshot == nullptr) {
            snapshot = &amenities.at(at);
        }
        Alternative alt{st.station_id, station_attributes(st.where, outlets, *snapshot, level, cfg)};
        alt.x.dist_km = *d;
        alt.x.walk_home = walk_home_flag(home, st.where, cfg.walk_threshold_m);
        out.push_back(std::move(alt));
    }
    return out;
}

inline std::vector<Alternative> build_choice_set(std::vector<StationSnapshot> const& stations,
                                                 RoadNetwork const& net, LatLon home, Timestamp at, Level level,
                                                 AmenityHistory const& amenities, EncodingConfig const& cfg = {})
{
    return build_choice_set(stations, DistanceField(net, home, cfg.snap_radius_m), home, at, level, amenities, cfg);
}

// ---------------------------------------------------------------------------
// File ingestion

/// nodes.csv (`node,lat,lon`) plus network.csv (`node_a,node_b,length_m`).
inline RoadNetwork read_network(csv::Table const& nodes, csv::Table const& edges)
{
    nodes.require({"node", "lat", "lon"});
    edges.require({"node_a", "node_b", "length_m"});
    RoadNetwork net;
    const auto c_node = nodes.column("node"), c_lat = nodes.column("lat"), c_lon = nodes.column("lon");
    for (std::size_t r = 0; r < nodes.size(); ++r) {
        net.add_node(nodes.at(r, c_node), {nodes.number(r, c_lat), nodes.number(r, c_lon)});
    }
    const auto c_a = edges.column("node_a"), c_b = edges.column("node_b"), c_len = edges.column("length_m");
    for (std::size_t r = 0; r < edges.size(); ++r) {
        net.add_edge(edges.at(r, c_a), edges.at(r, c_b), edges.number(r, c_len));
    }
    return net;
}

/// amenities/<YYYY-MM>.csv rows (`category,lat,lon`).
inline AmenitySnapshot read_amenities(csv::Table const& t, int month)
{
    t.require({"category", "lat", "lon"});
    const auto c_cat = t.column("category"), c_lat = t.column("lat"), c_lon = t.column("lon");
    AmenitySnapshot s;
    s.month = month;
    s.amenities.reserve(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        s.amenities.push_back({parse_amenity(t.at(r, c_cat)), {t.number(r, c_lat), t.number(r, c_lon)}});
    }
    return s;
}

} // namespace evcs
