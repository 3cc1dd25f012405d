#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace evcs {

/// WGS84 coordinate in decimal degrees.
struct LatLon {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(LatLon const&, LatLon const&) = default;
};

inline constexpr double kEarthRadiusM = 6371008.8;

/// Great-circle distance in metres.
inline double haversine_m(LatLon a, LatLon b) noexcept
{
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * rad;
    const double dlon = (b.lon - a.lon) * rad;
    const double s1 = std::sin(dlat / 2.0);
    const double s2 = std::sin(dlon / 2.0);
    const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::min(1.0, h)));
}

/// Point displaced `north_m` / `east_m` metres from `origin` (small-offset
/// spherical approximation, exact enough below a few kilometres).
inline LatLon offset_m(LatLon origin, double north_m, double east_m) noexcept
{
    constexpr double deg = 180.0 / std::numbers::pi;
    const double dlat = north_m / kEarthRadiusM * deg;
    const double dlon = east_m / (kEarthRadiusM * std::cos(origin.lat / deg)) * deg;
    return {origin.lat + dlat, origin.lon + dlon};
}

/// Simple polygon, vertices in order; the closing edge is implicit.
struct Polygon {
    std::vector<LatLon> vertices;

    [[nodiscard]] bool empty() const noexcept { return vertices.size() < 3; }

    /// Even-odd ray casting in the lat/lon plane.
    [[nodiscard]] bool contains(LatLon p) const noexcept
    {
        if (empty()) {
            return false;
        }
        bool inside = false;
        const auto n = vertices.size();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const auto& a = vertices[i];
            const auto& b = vertices[j];
            if ((a.lat > p.lat) != (b.lat > p.lat)) {
                const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
                if (p.lon < x) {
                    inside = !inside;
                }
            }
        }
        return inside;
    }

    struct Box {
        LatLon lo, hi;
    };

    [[nodiscard]] Box bounds() const noexcept
    {
        Box b{{90.0, 180.0}, {-90.0, -180.0}};
        for (auto const& v : vertices) {
            b.lo.lat = std::min(b.lo.lat, v.lat);
            b.lo.lon = std::min(b.lo.lon, v.lon);
            b.hi.lat = std::max(b.hi.lat, v.lat);
            b.hi.lon = std::max(b.hi.lon, v.lon);
        }
        return b;
    }
};

} // namespace evcs
