#pragma once

#include "evcs/error.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

namespace evcs {

using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline int parse_digits(std::string_view s, std::size_t pos, std::size_t len, std::string_view whole)
{
    int v = 0;
    if (pos + len > s.size()) {
        throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
    }
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc{} || ptr != s.data() + pos + len) {
        throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
    }
    return v;
}

} // namespace detail

/// Parses `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS]` with optional `Z` or
/// `+HH:MM`/`-HH:MM` offset. A space is accepted in place of `T`.
inline Timestamp parse_iso8601(std::string_view s)
{
    using namespace std::chrono;
    const auto whole = s;
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') {
        throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
    }
    const year_month_day ymd{year{detail::parse_digits(s, 0, 4, whole)},
                             month{static_cast<unsigned>(detail::parse_digits(s, 5, 2, whole))},
                             day{static_cast<unsigned>(detail::parse_digits(s, 8, 2, whole))}};
    if (!ymd.ok()) {
        throw ValidationError("invalid date '" + std::string(whole) + "'");
    }
    int hh = 0, mm = 0, ss = 0;
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        hh = detail::parse_digits(s, pos + 1, 2, whole);
        if (pos + 3 >= s.size() || s[pos + 3] != ':') {
            throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
        }
        mm = detail::parse_digits(s, pos + 4, 2, whole);
        pos += 6;
        if (pos < s.size() && s[pos] == ':') {
            ss = detail::parse_digits(s, pos + 1, 2, whole);
            pos += 3;
            // fractional seconds are truncated
            if (pos < s.size() && s[pos] == '.') {
                ++pos;
                while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                    ++pos;
                }
            }
        }
        if (hh > 23 || mm > 59 || ss > 60) {
            throw ValidationError("invalid time of day '" + std::string(whole) + "'");
        }
    }
    int offset_min = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z') {
            ++pos;
        } else if (s[pos] == '+' || s[pos] == '-') {
            const int sign = s[pos] == '+' ? 1 : -1;
            const int oh = detail::parse_digits(s, pos + 1, 2, whole);
            int om = 0;
            if (pos + 3 < s.size() && s[pos + 3] == ':') {
                om = detail::parse_digits(s, pos + 4, 2, whole);
                pos += 6;
            } else {
                pos += 3;
            }
            offset_min = sign * (oh * 60 + om);
        }
    }
    if (pos != s.size()) {
        throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
    }
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} - minutes{offset_min};
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
inline std::string format_iso8601(Timestamp t)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

inline std::chrono::sys_days day_of(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

/// Months since year 0 (year*12 + month-1); a calendar-month index.
inline int month_index(Timestamp t)
{
    const std::chrono::year_month_day ymd{day_of(t)};
    return static_cast<int>(ymd.year()) * 12 + static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

/// `YYYY-MM` label of a month index.
inline std::string month_label(int index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", index / 12, index % 12 + 1);
    return buf;
}

inline Timestamp make_time(int y, unsigned m, unsigned d, int hh = 0, int mm = 0, int ss = 0)
{
    using namespace std::chrono;
    return sys_days{year{y} / month{m} / day{d}} + hours{hh} + minutes{mm} + seconds{ss};
}

} // namespace evcs
