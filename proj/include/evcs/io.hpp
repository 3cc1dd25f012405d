#pragma once

#include "evcs/accounts.hpp"
#include "evcs/choice.hpp"
#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/estimation.hpp"
#include "evcs/geo.hpp"
#include "evcs/siting.hpp"
#include "evcs/spatial.hpp"
#include "evcs/time.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace evcs::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Region polygon as a flat "lat lon lat lon ..." list

inline std::string polygon_text(Polygon const& p)
{
    std::string out;
    for (auto const& v : p.vertices) {
        out += (out.empty() ? "" : " ") + csv::fmt(v.lat) + ' ' + csv::fmt(v.lon);
    }
    return out;
}

inline Polygon polygon_from_list(std::vector<double> const& xs)
{
    if (xs.size() % 2 != 0) {
        throw IoError("region: odd number of coordinates");
    }
    Polygon p;
    for (std::size_t i = 0; i < xs.size(); i += 2) {
        p.vertices.push_back({xs[i], xs[i + 1]});
    }
    return p;
}

// ---------------------------------------------------------------------------
// Sessions and accounts

inline std::string sessions_csv(std::vector<Account> const& accounts)
{
    std::vector<RawSession const*> all;
    for (auto const& a : accounts) {
        for (auto const& s : a.sessions) {
            all.push_back(&s);
        }
    }
    std::string out = "session_id,account_id,outlet_id,station_id,start_iso8601,end_iso8601,energy_kwh,level,"
                      "soc_start,soc_end\n";
    auto opt = [](std::optional<double> v) { return v ? csv::fmt(*v) : std::string{}; };
    for (auto const* s : all) {
        out += s->session_id + ',' + s->account_id + ',' + s->outlet_id + ',' + s->station_id + ',' +
               format_iso8601(s->start) + ',' + format_iso8601(s->end) + ',' + csv::fmt(s->energy_kwh) + ',' +
               std::string(to_string(s->level)) + ',' + opt(s->soc_start) + ',' + opt(s->soc_end) + '\n';
    }
    return out;
}

inline std::string accounts_csv(std::vector<Account> const& accounts)
{
    std::string out = "account_id,created_iso8601,postal_lat,postal_lon\n";
    for (auto const& a : accounts) {
        out += a.account_id + ',' + format_iso8601(a.created) + ',' +
               (a.postal_centroid ? csv::fmt(a.postal_centroid->lat) + ',' + csv::fmt(a.postal_centroid->lon)
                                  : std::string(",")) +
               '\n';
    }
    return out;
}

inline std::vector<Account> load_accounts(fs::path const& dir)
{
    return read_accounts(csv::Table::read(dir / "accounts.csv"), read_sessions(csv::Table::read(dir / "sessions.csv")));
}

// ---------------------------------------------------------------------------
// Stations (GeoJSON)

inline std::string stations_geojson(std::vector<StationSnapshot> const& stations)
{
    nlohmann::ordered_json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::ordered_json::array();
    for (auto const& s : stations) {
        nlohmann::ordered_json events = nlohmann::ordered_json::array();
        for (auto const& e : s.outlet_events) {
            events.push_back({{"date", format_iso8601(e.when)},
                              {"kind", e.kind == OutletEventKind::Install ? "install" : "close"}});
        }
        nlohmann::ordered_json props;
        props["station_id"] = s.station_id;
        props["level"] = to_string(s.level);
        props["operator"] = s.operator_name;
        props["outlet_events"] = std::move(events);
        if (s.closed) {
            props["closed"] = format_iso8601(*s.closed);
        }
        nlohmann::ordered_json f;
        f["type"] = "Feature";
        f["geometry"] = {{"type", "Point"}, {"coordinates", {s.where.lon, s.where.lat}}};
        f["properties"] = std::move(props);
        fc["features"].push_back(std::move(f));
    }
    return fc.dump(2) + '\n';
}

/// Stations whose operator is listed in `excluded_operators` are flagged,
/// not dropped.
inline std::vector<StationSnapshot> read_stations(fs::path const& path,
                                                  std::set<std::string> const& excluded_operators = {})
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(csv::read_file(path));
    } catch (nlohmann::json::parse_error const& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    std::vector<StationSnapshot> out;
    try {
        for (auto const& f : doc.at("features")) {
            auto const& props = f.at("properties");
            auto const& coords = f.at("geometry").at("coordinates");
            StationSnapshot s;
            s.station_id = props.at("station_id").get<std::string>();
            s.level = parse_level(props.at("level").get<std::string>());
            s.operator_name = props.value("operator", std::string{});
            s.excluded_operator = excluded_operators.count(s.operator_name) != 0;
            s.where = {coords.at(1).get<double>(), coords.at(0).get<double>()};
            for (auto const& e : props.at("outlet_events")) {
                const auto kind = e.at("kind").get<std::string>();
                if (kind != "install" && kind != "close") {
                    throw ValidationError(path.string() + ": station " + s.station_id + ": unknown event kind '" +
                                          kind + "'");
                }
                s.outlet_events.push_back({parse_iso8601(e.at("date").get<std::string>()),
                                           kind == "install" ? OutletEventKind::Install : OutletEventKind::Close});
            }
            if (props.contains("closed")) {
                s.closed = parse_iso8601(props.at("closed").get<std::string>());
            }
            out.push_back(std::move(s));
        }
    } catch (nlohmann::json::exception const& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network and amenities

inline std::string nodes_csv(std::vector<std::pair<std::string, LatLon>> const& nodes)
{
    std::string out = "node,lat,lon\n";
    for (auto const& [id, p] : nodes) {
        out += id + ',' + csv::fmt(p.lat) + ',' + csv::fmt(p.lon) + '\n';
    }
    return out;
}

inline std::string edges_csv(std::vector<std::tuple<std::string, std::string, double>> const& edges)
{
    std::string out = "node_a,node_b,length_m\n";
    for (auto const& [a, b, len] : edges) {
        out += a + ',' + b + ',' + csv::fmt(len) + '\n';
    }
    return out;
}

inline RoadNetwork load_network(fs::path const& dir)
{
    return read_network(csv::Table::read(dir / "nodes.csv"), csv::Table::read(dir / "network.csv"));
}

inline std::string amenities_csv(AmenitySnapshot const& s)
{
    std::string out = "category,lat,lon\n";
    for (auto const& a : s.amenities) {
        out += std::string(to_string(a.category)) + ',' + csv::fmt(a.where.lat) + ',' + csv::fmt(a.where.lon) + '\n';
    }
    return out;
}

/// Every `amenities/<YYYY-MM>.csv` in `dir`.
inline AmenityHistory load_amenities(fs::path const& dir)
{
    const auto sub = dir / "amenities";
    if (!fs::is_directory(sub)) {
        throw IoError("missing amenity directory '" + sub.string() + "'");
    }
    std::vector<fs::path> files;
    for (auto const& e : fs::directory_iterator(sub)) {
        if (e.path().extension() == ".csv") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    AmenityHistory h;
    for (auto const& f : files) {
        const auto stem = f.stem().string();
        Timestamp t;
        try {
            t = parse_iso8601(stem + "-01");
        } catch (ValidationError const&) {
            throw IoError("amenity file '" + f.string() + "' is not named YYYY-MM.csv");
        }
        h.add(read_amenities(csv::Table::read(f), month_index(t)));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Customers

inline std::string customers_csv(std::vector<Customer> const& cs)
{
    std::string out = "customer_id,lat,lon,weight\n";
    for (auto const& c : cs) {
        out += c.id + ',' + csv::fmt(c.where.lat) + ',' + csv::fmt(c.where.lon) + ',' + csv::fmt(c.weight) + '\n';
    }
    return out;
}

inline std::vector<Customer> read_customers(csv::Table const& t)
{
    t.require({"customer_id", "lat", "lon"});
    const auto ci = t.column("customer_id"), clat = t.column("lat"), clon = t.column("lon");
    const bool weighted = t.has("weight");
    std::vector<Customer> out;
    for (std::size_t r = 0; r < t.size(); ++r) {
        Customer c{t.at(r, ci), {t.number(r, clat), t.number(r, clon)}, 1.0};
        if (weighted && !t.at(r, t.column("weight")).empty()) {
            c.weight = t.number(r, t.column("weight"));
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline std::string sites_csv(std::vector<SiteStation> const& st)
{
    std::string out = "station_id,lat,lon,existing\n";
    for (auto const& s : st) {
        out += s.id + ',' + csv::fmt(s.where.lat) + ',' + csv::fmt(s.where.lon) + ',' + (s.existing ? "1" : "0") + '\n';
    }
    return out;
}

inline std::vector<SiteStation> read_sites(csv::Table const& t)
{
    t.require({"station_id", "lat", "lon", "existing"});
    const auto ci = t.column("station_id"), clat = t.column("lat"), clon = t.column("lon"),
               ce = t.column("existing");
    std::vector<SiteStation> out;
    for (std::size_t r = 0; r < t.size(); ++r) {
        out.push_back({t.at(r, ci), {t.number(r, clat), t.number(r, clon)}, t.at(r, ce) == "1"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoded observations: one row per alternative

inline std::string observations_csv(PanelDataset const& data)
{
    std::string out = "obs_id,user_id,when_iso8601,station_id,chosen,dist_km,walk_home,outlets,is_gas,rest,ff,shop,"
                      "sm,mall,leis,sport\n";
    std::size_t obs = 0;
    for (auto const& u : data.users()) {
        for (auto const& o : u.observations) {
            ++obs;
            for (std::size_t j = 0; j < o.alternatives.size(); ++j) {
                auto const& x = o.alternatives[j];
                out += std::to_string(obs) + ',' + u.user_id + ',' + format_iso8601(o.when) + ',' +
                       (o.station_ids.empty() ? std::to_string(j) : o.station_ids[j]) + ',' +
                       (j == o.chosen ? "1" : "0");
                for (double v : {x.dist_km, x.walk_home, x.outlets, x.is_gas, x.rest, x.ff, x.shop, x.sm, x.mall,
                                 x.leis, x.sport}) {
                    out += ',' + csv::fmt(v);
                }
                out += '\n';
            }
        }
    }
    return out;
}

inline PanelDataset read_observations(csv::Table const& t)
{
    t.require({"obs_id", "user_id", "when_iso8601", "station_id", "chosen", "dist_km", "walk_home", "outlets",
               "is_gas", "rest", "ff", "shop", "sm", "mall", "leis", "sport"});
    const auto c_obs = t.column("obs_id"), c_user = t.column("user_id"), c_when = t.column("when_iso8601"),
               c_st = t.column("station_id"), c_ch = t.column("chosen");
    const std::array<std::size_t, 11> cx{t.column("dist_km"), t.column("walk_home"), t.column("outlets"),
                                         t.column("is_gas"),  t.column("rest"),      t.column("ff"),
                                         t.column("shop"),    t.column("sm"),        t.column("mall"),
                                         t.column("leis"),    t.column("sport")};
    PanelDataset data;
    ChoiceObservation cur;
    std::string cur_id;
    int chosen_count = 0;
    auto flush = [&] {
        if (cur_id.empty()) {
            return;
        }
        if (chosen_count != 1) {
            throw ValidationError(t.source() + ": observation " + cur_id + " must have exactly one chosen row");
        }
        data.add(std::move(cur));
        cur = {};
        chosen_count = 0;
    };
    for (std::size_t r = 0; r < t.size(); ++r) {
        if (t.at(r, c_obs) != cur_id) {
            flush();
            cur_id = t.at(r, c_obs);
            cur.user_id = t.at(r, c_user);
            cur.when = parse_iso8601(t.at(r, c_when));
        }
        AttributeVector x;
        double* fields[] = {&x.dist_km, &x.walk_home, &x.outlets, &x.is_gas, &x.rest, &x.ff,
                            &x.shop,    &x.sm,        &x.mall,    &x.leis,   &x.sport};
        for (std::size_t k = 0; k < cx.size(); ++k) {
            *fields[k] = t.number(r, cx[k]);
        }
        if (t.at(r, c_ch) == "1") {
            cur.chosen = cur.alternatives.size();
            ++chosen_count;
        }
        cur.alternatives.push_back(x);
        cur.station_ids.push_back(t.at(r, c_st));
    }
    flush();
    data.sort_by_time();
    return data;
}

// ---------------------------------------------------------------------------
// Fold plan

inline std::string fold_plan_json(FoldPlan const& plan)
{
    nlohmann::ordered_json j;
    j["k"] = plan.k;
    j["seed"] = plan.seed;
    j["observations_per_fold"] = plan.observations;
    nlohmann::ordered_json users = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < plan.user_ids.size(); ++i) {
        users[plan.user_ids[i]] = plan.fold_of[i];
    }
    j["fold_of_user"] = std::move(users);
    return j.dump(2) + '\n';
}

inline FoldPlan read_fold_plan(fs::path const& path)
{
    try {
        const auto j = nlohmann::ordered_json::parse(csv::read_file(path));
        FoldPlan p;
        p.k = j.at("k").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.observations = j.at("observations_per_fold").get<std::vector<std::size_t>>();
        for (auto const& [id, fold] : j.at("fold_of_user").items()) {
            p.user_ids.push_back(id);
            p.fold_of.push_back(fold.get<std::size_t>());
        }
        return p;
    } catch (nlohmann::json::exception const& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

} // namespace evcs::io
