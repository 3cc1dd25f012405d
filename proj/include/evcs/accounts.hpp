#pragma once

#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/geo.hpp"
#include "evcs/time.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evcs {

enum class Level { L2, L3 };

inline std::string_view to_string(Level l) { return l == Level::L2 ? "L2" : "L3"; }

inline Level parse_level(std::string_view s)
{
    if (s == "L2" || s == "2") {
        return Level::L2;
    }
    if (s == "L3" || s == "3") {
        return Level::L3;
    }
    throw ValidationError("unknown charging level '" + std::string(s) + "'");
}

struct RawSession {
    std::string session_id;
    std::string account_id;
    std::string outlet_id;
    std::string station_id;
    Timestamp start;
    Timestamp end;
    double energy_kwh = 0.0;
    Level level = Level::L2;
    std::optional<double> soc_start;
    std::optional<double> soc_end;

    [[nodiscard]] std::chrono::minutes duration() const
    {
        return std::chrono::duration_cast<std::chrono::minutes>(end - start);
    }
};

/// Checks the per-session invariants; throws ValidationError naming the session.
inline void validate(RawSession const& s)
{
    if (s.end < s.start) {
        throw ValidationError("session " + s.session_id + ": end before start");
    }
    if (!(s.energy_kwh >= 0.0)) {
        throw ValidationError("session " + s.session_id + ": negative energy");
    }
    for (auto const& soc : {s.soc_start, s.soc_end}) {
        if (soc && (*soc < 0.0 || *soc > 100.0)) {
            throw ValidationError("session " + s.session_id + ": state of charge outside [0,100]");
        }
        if (soc && s.level != Level::L3) {
            throw ValidationError("session " + s.session_id + ": state of charge on a level 2 session");
        }
    }
}

struct Account {
    std::string account_id;
    Timestamp created;
    std::optional<LatLon> postal_centroid;
    std::vector<RawSession> sessions; // sorted by start

    void sort_sessions()
    {
        std::stable_sort(sessions.begin(), sessions.end(),
                         [](RawSession const& a, RawSession const& b) { return a.start < b.start; });
    }
};

enum class AccountClass { Unplugged, Shared, Rental, Private };

enum class ClassReason {
    NoSessions,
    OverlappingSessions,
    DailySessionCount,
    MonthlyEnergy,
    AnnualEnergy,
    ShortLivedAccount,
    NoFilter,
};

inline std::string_view to_string(AccountClass c)
{
    switch (c) {
    case AccountClass::Unplugged: return "unplugged";
    case AccountClass::Shared: return "shared";
    case AccountClass::Rental: return "rental";
    case AccountClass::Private: return "private";
    }
    return "?";
}

inline std::string_view to_string(ClassReason r)
{
    switch (r) {
    case ClassReason::NoSessions: return "no_sessions";
    case ClassReason::OverlappingSessions: return "overlapping_sessions";
    case ClassReason::DailySessionCount: return "daily_session_count";
    case ClassReason::MonthlyEnergy: return "monthly_energy";
    case ClassReason::AnnualEnergy: return "annual_energy";
    case ClassReason::ShortLivedAccount: return "short_lived_account";
    case ClassReason::NoFilter: return "none";
    }
    return "?";
}

struct Classification {
    AccountClass cls = AccountClass::Private;
    ClassReason reason = ClassReason::NoFilter;

    friend bool operator==(Classification const&, Classification const&) = default;
};

/// Half-open interval [start, end) of session start times ignored by the
/// classifier. The default covers 2020-02-01 through 2021-06-30 inclusive.
struct ExclusionWindow {
    Timestamp start = make_time(2020, 2, 1);
    Timestamp end = make_time(2021, 7, 1);

    [[nodiscard]] bool contains(Timestamp t) const noexcept { return start <= t && t < end; }

    void validate() const
    {
        if (!(start < end)) {
            throw ValidationError("exclusion window must satisfy start < end");
        }
    }
};

struct ClassifierConfig {
    int shared_daily_sessions = 4;
    double monthly_energy_cap_kwh = 500.0;
    double annual_energy_cap_kwh = 6000.0;
    bool check_annual_energy = true;
    int rental_max_days = 14;
    int rental_min_sessions = 3;
    /// When false, the rental filter is evaluated before the shared filters.
    bool shared_before_rental = true;
};

namespace detail {

inline std::optional<ClassReason> shared_reason(std::vector<RawSession const*> const& kept,
                                                ClassifierConfig const& cfg)
{
    // kept is sorted by start
    Timestamp latest_end = Timestamp::min();
    for (auto const* s : kept) {
        if (s->start < latest_end) {
            return ClassReason::OverlappingSessions;
        }
        latest_end = std::max(latest_end, s->end);
    }

    std::map<std::chrono::sys_days, int> per_day;
    for (auto const* s : kept) {
        if (++per_day[day_of(s->start)] >= cfg.shared_daily_sessions) {
            return ClassReason::DailySessionCount;
        }
    }

    double total = 0.0;
    for (auto const* s : kept) {
        total += s->energy_kwh;
    }
    const int months = month_index(kept.back()->start) - month_index(kept.front()->start) + 1;
    if (total / months > cfg.monthly_energy_cap_kwh) {
        return ClassReason::MonthlyEnergy;
    }
    if (cfg.check_annual_energy) {
        const double years = std::max(1.0, months / 12.0);
        if (total / years > cfg.annual_energy_cap_kwh) {
            return ClassReason::AnnualEnergy;
        }
    }
    return std::nullopt;
}

inline bool is_rental(Account const& acct, std::vector<RawSession const*> const& kept, ClassifierConfig const& cfg)
{
    const auto span = kept.back()->start - acct.created;
    return span < std::chrono::days{cfg.rental_max_days} &&
           static_cast<int>(kept.size()) >= cfg.rental_min_sessions;
}

} // namespace detail

/// Assigns exactly one class to an account. Sessions starting inside the
/// exclusion window are ignored by every rule.
inline Classification classify_account(Account const& acct, ExclusionWindow const& window = {},
                                       ClassifierConfig const& cfg = {})
{
    window.validate();
    std::vector<RawSession const*> kept;
    kept.reserve(acct.sessions.size());
    for (auto const& s : acct.sessions) {
        if (!window.contains(s.start)) {
            kept.push_back(&s);
        }
    }
    if (kept.empty()) {
        return {AccountClass::Unplugged, ClassReason::NoSessions};
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](RawSession const* a, RawSession const* b) { return a->start < b->start; });

    if (cfg.shared_before_rental) {
        if (auto r = detail::shared_reason(kept, cfg)) {
            return {AccountClass::Shared, *r};
        }
        if (detail::is_rental(acct, kept, cfg)) {
            return {AccountClass::Rental, ClassReason::ShortLivedAccount};
        }
    } else {
        if (detail::is_rental(acct, kept, cfg)) {
            return {AccountClass::Rental, ClassReason::ShortLivedAccount};
        }
        if (auto r = detail::shared_reason(kept, cfg)) {
            return {AccountClass::Shared, *r};
        }
    }
    return {AccountClass::Private, ClassReason::NoFilter};
}

/// Keeps the accounts whose postal centroid lies inside `region` and that
/// never exceed `max_daily` sessions per day at stations inside `region`.
/// Accounts without a centroid are dropped; sessions at stations with no
/// known location do not count toward the daily limit.
inline std::vector<Account> filter_private_region(std::vector<Account> const& accts, Polygon const& region,
                                                  std::unordered_map<std::string, LatLon> const& station_locations,
                                                  int max_daily = 2)
{
    std::vector<Account> out;
    for (auto const& a : accts) {
        if (!a.postal_centroid || !region.contains(*a.postal_centroid)) {
            continue;
        }
        std::map<std::chrono::sys_days, int> per_day;
        bool ok = true;
        for (auto const& s : a.sessions) {
            auto it = station_locations.find(s.station_id);
            if (it == station_locations.end() || !region.contains(it->second)) {
                continue;
            }
            if (++per_day[day_of(s.start)] > max_daily) {
                ok = false;
                break;
            }
        }
        if (ok) {
            out.push_back(a);
        }
    }
    return out;
}

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

/// Linear-interpolation quantile (the common "type 7" rule) of sorted data.
inline double quantile_sorted(std::vector<double> const& sorted, double q)
{
    if (sorted.empty()) {
        return 0.0;
    }
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(h);
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Quartiles quartiles(std::vector<double> values)
{
    std::sort(values.begin(), values.end());
    return {quantile_sorted(values, 0.25), quantile_sorted(values, 0.5), quantile_sorted(values, 0.75)};
}

struct SummaryStats {
    std::size_t count = 0;
    Quartiles duration_min; // capped
    Quartiles energy_kwh;
    std::size_t capped = 0; // sessions whose duration hit the cap
    double sessions_per_month = 0.0;
    double stations_per_month = 0.0;
};

/// Descriptive statistics. Durations above the cap are clamped to it.
/// Monthly rates are per calendar month spanned by the sessions (inclusive);
/// distinct stations are averaged over months with at least one session.
inline SummaryStats session_summary(std::vector<RawSession> const& sessions, int duration_cap_minutes = 720)
{
    SummaryStats st;
    if (sessions.empty()) {
        return st;
    }
    st.count = sessions.size();
    std::vector<double> dur, energy;
    dur.reserve(sessions.size());
    energy.reserve(sessions.size());
    int first_month = month_index(sessions.front().start);
    int last_month = first_month;
    std::map<int, std::set<std::string>> stations_by_month;
    for (auto const& s : sessions) {
        double d = static_cast<double>(s.duration().count());
        if (d > duration_cap_minutes) {
            d = duration_cap_minutes;
            ++st.capped;
        }
        dur.push_back(d);
        energy.push_back(s.energy_kwh);
        const int m = month_index(s.start);
        first_month = std::min(first_month, m);
        last_month = std::max(last_month, m);
        stations_by_month[m].insert(s.station_id);
    }
    st.duration_min = quartiles(std::move(dur));
    st.energy_kwh = quartiles(std::move(energy));
    st.sessions_per_month = static_cast<double>(st.count) / (last_month - first_month + 1);
    double distinct = 0.0;
    for (auto const& [m, ids] : stations_by_month) {
        distinct += static_cast<double>(ids.size());
    }
    st.stations_per_month = distinct / static_cast<double>(stations_by_month.size());
    return st;
}

// ---------------------------------------------------------------------------
// CSV ingestion

inline std::vector<RawSession> read_sessions(csv::Table const& t)
{
    t.require({"session_id", "account_id", "outlet_id", "station_id", "start_iso8601", "end_iso8601", "energy_kwh",
               "level", "soc_start", "soc_end"});
    const auto c_sid = t.column("session_id"), c_aid = t.column("account_id"), c_oid = t.column("outlet_id"),
               c_st = t.column("station_id"), c_start = t.column("start_iso8601"), c_end = t.column("end_iso8601"),
               c_e = t.column("energy_kwh"), c_lvl = t.column("level"), c_s0 = t.column("soc_start"),
               c_s1 = t.column("soc_end");
    std::vector<RawSession> out;
    out.reserve(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        RawSession s;
        s.session_id = t.at(r, c_sid);
        s.account_id = t.at(r, c_aid);
        s.outlet_id = t.at(r, c_oid);
        s.station_id = t.at(r, c_st);
        s.start = parse_iso8601(t.at(r, c_start));
        s.end = parse_iso8601(t.at(r, c_end));
        s.energy_kwh = t.number(r, c_e);
        s.level = parse_level(t.at(r, c_lvl));
        if (!t.at(r, c_s0).empty()) {
            s.soc_start = t.number(r, c_s0);
        }
        if (!t.at(r, c_s1).empty()) {
            s.soc_end = t.number(r, c_s1);
        }
        validate(s);
        out.push_back(std::move(s));
    }
    return out;
}

/// Joins accounts.csv rows with their sessions. Sessions for unknown
/// accounts are a validation error.
inline std::vector<Account> read_accounts(csv::Table const& t, std::vector<RawSession> sessions)
{
    t.require({"account_id", "created_iso8601", "postal_lat", "postal_lon"});
    const auto c_id = t.column("account_id"), c_created = t.column("created_iso8601"),
               c_lat = t.column("postal_lat"), c_lon = t.column("postal_lon");
    std::vector<Account> out;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < t.size(); ++r) {
        Account a;
        a.account_id = t.at(r, c_id);
        a.created = parse_iso8601(t.at(r, c_created));
        if (!t.at(r, c_lat).empty() && !t.at(r, c_lon).empty()) {
            a.postal_centroid = LatLon{t.number(r, c_lat), t.number(r, c_lon)};
        }
        if (!index.emplace(a.account_id, out.size()).second) {
            throw ValidationError(t.source() + ": duplicate account_id '" + a.account_id + "'");
        }
        out.push_back(std::move(a));
    }
    for (auto& s : sessions) {
        auto it = index.find(s.account_id);
        if (it == index.end()) {
            throw ValidationError("session " + s.session_id + " references unknown account '" + s.account_id + "'");
        }
        out[it->second].sessions.push_back(std::move(s));
    }
    for (auto& a : out) {
        a.sort_sessions();
    }
    return out;
}

} // namespace evcs
