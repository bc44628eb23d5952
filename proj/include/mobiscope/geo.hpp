#pragma once

// Geodesy primitives: spherical great-circle distance, the contiguous-US
// Albers equal-area conic, and point-in-polygon tract lookup behind a
// uniform grid index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobiscope/error.hpp"

namespace mobiscope {

inline constexpr double kEarthRadiusM = 6371008.8;

struct GeoPoint {
    double lon = 0;
    double lat = 0;

    bool valid() const noexcept {
        return std::isfinite(lon) && std::isfinite(lat) && lon >= -180 && lon <= 180 && lat >= -90 && lat <= 90;
    }
    bool operator==(const GeoPoint&) const = default;
};

/// Albers plane coordinates in meters.
struct ProjectedPoint {
    double x = 0;
    double y = 0;

    bool operator==(const ProjectedPoint&) const = default;
};

inline double squared_distance(const ProjectedPoint& a, const ProjectedPoint& b) noexcept {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

inline double distance(const ProjectedPoint& a, const ProjectedPoint& b) noexcept {
    return std::sqrt(squared_distance(a, b));
}

/// Closed lon/lat rectangle.
struct BBox {
    double min_lon = -125;
    double min_lat = 24;
    double max_lon = -66;
    double max_lat = 50;

    void validate() const {
        if (!(min_lon < max_lon) || !(min_lat < max_lat))
            throw std::invalid_argument("degenerate bounding box: min must be < max on both axes");
    }
    bool contains(const GeoPoint& p) const noexcept {
        return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
    }
    bool operator==(const BBox&) const = default;
};

inline double deg2rad(double d) noexcept { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) noexcept { return r * 180.0 / std::numbers::pi; }

/// Great-circle distance on the mean-radius sphere, meters.
inline double haversine_distance(const GeoPoint& a, const GeoPoint& b) noexcept {
    const double phi1 = deg2rad(a.lat);
    const double phi2 = deg2rad(b.lat);
    const double dphi = phi2 - phi1;
    const double dlambda = deg2rad(b.lon - a.lon);
    const double s1 = std::sin(dphi / 2);
    const double s2 = std::sin(dlambda / 2);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

namespace detail {

struct AlbersConstants {
    double n;
    double c;
    double rho0;
    double lon0;
};

inline const AlbersConstants& albers() {
    static const AlbersConstants k = [] {
        const double phi1 = deg2rad(29.5);
        const double phi2 = deg2rad(45.5);
        const double phi0 = deg2rad(23.0);
        AlbersConstants a{};
        a.n = (std::sin(phi1) + std::sin(phi2)) / 2.0;
        a.c = std::cos(phi1) * std::cos(phi1) + 2.0 * a.n * std::sin(phi1);
        a.rho0 = kEarthRadiusM * std::sqrt(a.c - 2.0 * a.n * std::sin(phi0)) / a.n;
        a.lon0 = deg2rad(-96.0);
        return a;
    }();
    return k;
}

} // namespace detail

/// Spherical Albers equal-area conic: standard parallels 29.5/45.5 N,
/// origin 23 N 96 W, no false easting/northing.
inline ProjectedPoint project_albers(const GeoPoint& p) noexcept {
    const auto& k = detail::albers();
    const double rho = kEarthRadiusM * std::sqrt(k.c - 2.0 * k.n * std::sin(deg2rad(p.lat))) / k.n;
    const double theta = k.n * (deg2rad(p.lon) - k.lon0);
    return {rho * std::sin(theta), k.rho0 - rho * std::cos(theta)};
}

inline GeoPoint unproject_albers(const ProjectedPoint& q) noexcept {
    const auto& k = detail::albers();
    const double dy = k.rho0 - q.y;
    const double rho = std::hypot(q.x, dy);
    const double theta = std::atan2(q.x, dy);
    const double t = rho * k.n / kEarthRadiusM;
    const double s = std::clamp((k.c - t * t) / (2.0 * k.n), -1.0, 1.0);
    return {rad2deg(k.lon0 + theta / k.n), rad2deg(std::asin(s))};
}

inline std::vector<ProjectedPoint> project_all(std::span<const GeoPoint> pts) {
    std::vector<ProjectedPoint> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(project_albers(p));
    return out;
}

using Ring = std::vector<GeoPoint>;

/// One census tract: outer ring first, then holes. Rings are closed.
struct TractPolygon {
    std::string geoid;
    std::vector<Ring> rings;

    bool operator==(const TractPolygon&) const = default;
};

namespace detail {

inline double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) noexcept {
    return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

inline bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) noexcept {
    if (cross(a, b, p) != 0.0) return false;
    return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
           p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

inline int orientation(const GeoPoint& a, const GeoPoint& b, const GeoPoint& c) noexcept {
    const double v = cross(a, b, c);
    return (v > 0) - (v < 0);
}

inline bool segments_intersect(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1, const GeoPoint& q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(q1, p1, p2)) return true;
    if (o2 == 0 && on_segment(q2, p1, p2)) return true;
    if (o3 == 0 && on_segment(p1, q1, q2)) return true;
    if (o4 == 0 && on_segment(p2, q1, q2)) return true;
    return false;
}

} // namespace detail

/// Load-time checks: every ring closed with >= 4 vertices, finite in-range
/// coordinates, outer ring free of self-intersections.
inline void validate_polygon(const TractPolygon& poly) {
    if (poly.rings.empty()) throw InvalidPolygon(poly.geoid, "no rings");
    for (std::size_t r = 0; r < poly.rings.size(); ++r) {
        const Ring& ring = poly.rings[r];
        if (ring.size() < 4) throw InvalidPolygon(poly.geoid, "ring " + std::to_string(r) + " has fewer than 4 vertices");
        if (!(ring.front() == ring.back())) throw InvalidPolygon(poly.geoid, "ring " + std::to_string(r) + " is not closed");
        for (const auto& p : ring)
            if (!p.valid()) throw InvalidPolygon(poly.geoid, "vertex out of range");
    }
    Ring outer;
    for (const auto& p : poly.rings.front())
        if (outer.empty() || !(outer.back() == p)) outer.push_back(p);
    const std::size_t m = outer.size() - 1;  // edge count
    if (m < 3) throw InvalidPolygon(poly.geoid, "outer ring is degenerate");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 2; j < m; ++j) {
            if (i == 0 && j == m - 1) continue;  // share the closing vertex
            if (detail::segments_intersect(outer[i], outer[i + 1], outer[j], outer[j + 1]))
                throw InvalidPolygon(poly.geoid, "outer ring self-intersects");
        }
    }
}

/// Even-odd ray cast over all rings (outer minus holes). Points on any
/// edge, including hole edges, count as inside.
inline bool point_in_polygon(const GeoPoint& p, const TractPolygon& poly) noexcept {
    bool inside = false;
    for (const Ring& ring : poly.rings) {
        for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
            const GeoPoint& a = ring[i];
            const GeoPoint& b = ring[i + 1];
            if (detail::on_segment(p, a, b)) return true;
            if ((a.lat > p.lat) != (b.lat > p.lat)) {
                const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if (p.lon < x) inside = !inside;
            }
        }
    }
    return inside;
}

inline BBox polygon_bounds(const TractPolygon& poly) noexcept {
    BBox b{180, 90, -180, -90};
    for (const auto& p : poly.rings.front()) {
        b.min_lon = std::min(b.min_lon, p.lon);
        b.max_lon = std::max(b.max_lon, p.lon);
        b.min_lat = std::min(b.min_lat, p.lat);
        b.max_lat = std::max(b.max_lat, p.lat);
    }
    return b;
}

/// Reference lookup: the lowest geoid among all containing polygons.
inline std::optional<std::string> tract_lookup_linear(const GeoPoint& p, std::span<const TractPolygon> polys) {
    std::optional<std::string> best;
    for (const auto& poly : polys)
        if (point_in_polygon(p, poly) && (!best || poly.geoid < *best)) best = poly.geoid;
    return best;
}

/// Immutable uniform-grid index over tract polygons. Each polygon is listed
/// in every cell its bounding box touches; candidates are kept in geoid
/// order so the first hit is the lowest containing geoid.
class TractIndex {
public:
    TractIndex() = default;

    explicit TractIndex(std::vector<TractPolygon> polys) : polys_(std::move(polys)) {
        std::stable_sort(polys_.begin(), polys_.end(),
                         [](const TractPolygon& a, const TractPolygon& b) { return a.geoid < b.geoid; });
        if (polys_.empty()) return;
        bounds_ = {180, 90, -180, -90};
        boxes_.reserve(polys_.size());
        for (const auto& poly : polys_) {
            const BBox b = polygon_bounds(poly);
            boxes_.push_back(b);
            bounds_.min_lon = std::min(bounds_.min_lon, b.min_lon);
            bounds_.max_lon = std::max(bounds_.max_lon, b.max_lon);
            bounds_.min_lat = std::min(bounds_.min_lat, b.min_lat);
            bounds_.max_lat = std::max(bounds_.max_lat, b.max_lat);
        }
        const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(polys_.size()))));
        cols_ = rows_ = std::max<std::size_t>(1, side);
        cell_w_ = std::max((bounds_.max_lon - bounds_.min_lon) / static_cast<double>(cols_), 1e-12);
        cell_h_ = std::max((bounds_.max_lat - bounds_.min_lat) / static_cast<double>(rows_), 1e-12);
        cells_.assign(cols_ * rows_, {});
        for (std::size_t i = 0; i < polys_.size(); ++i) {
            const BBox& b = boxes_[i];
            const std::size_t c0 = col_of(b.min_lon), c1 = col_of(b.max_lon);
            const std::size_t r0 = row_of(b.min_lat), r1 = row_of(b.max_lat);
            for (std::size_t r = r0; r <= r1; ++r)
                for (std::size_t c = c0; c <= c1; ++c) cells_[r * cols_ + c].push_back(i);
        }
    }

    std::optional<std::string> lookup(const GeoPoint& p) const {
        if (polys_.empty() || !bounds_.contains(p)) return std::nullopt;
        for (std::size_t i : cells_[row_of(p.lat) * cols_ + col_of(p.lon)]) {
            if (boxes_[i].contains(p) && point_in_polygon(p, polys_[i])) return polys_[i].geoid;
        }
        return std::nullopt;
    }

    std::span<const TractPolygon> polygons() const noexcept { return polys_; }
    std::size_t size() const noexcept { return polys_.size(); }
    bool empty() const noexcept { return polys_.empty(); }

private:
    std::size_t col_of(double lon) const noexcept {
        const double f = std::floor((lon - bounds_.min_lon) / cell_w_);
        return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(cols_ - 1)));
    }
    std::size_t row_of(double lat) const noexcept {
        const double f = std::floor((lat - bounds_.min_lat) / cell_h_);
        return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(rows_ - 1)));
    }

    std::vector<TractPolygon> polys_;
    std::vector<BBox> boxes_;
    BBox bounds_{};
    std::size_t cols_ = 0, rows_ = 0;
    double cell_w_ = 1, cell_h_ = 1;
    std::vector<std::vector<std::size_t>> cells_;
};

inline std::optional<std::string> tract_lookup(const GeoPoint& p, const TractIndex& idx) { return idx.lookup(p); }

namespace detail {

inline Ring parse_ring(const nlohmann::json& coords, const std::string& geoid) {
    if (!coords.is_array()) throw InvalidPolygon(geoid, "ring is not an array");
    Ring ring;
    ring.reserve(coords.size());
    for (const auto& c : coords) {
        if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
            throw InvalidPolygon(geoid, "vertex is not a [lon, lat] pair");
        ring.push_back({c[0].get<double>(), c[1].get<double>()});
    }
    return ring;
}

inline TractPolygon parse_polygon(const nlohmann::json& rings, const std::string& geoid) {
    if (!rings.is_array()) throw InvalidPolygon(geoid, "polygon coordinates are not an array");
    TractPolygon poly{geoid, {}};
    for (const auto& r : rings) poly.rings.push_back(parse_ring(r, geoid));
    validate_polygon(poly);
    return poly;
}

} // namespace detail

/// Reads a GeoJSON FeatureCollection of Polygon / MultiPolygon features with
/// a string GEOID property. MultiPolygon parts become separate polygons
/// sharing the geoid.
inline std::vector<TractPolygon> read_tracts_geojson(std::istream& in) {
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("tract GeoJSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array())
        throw FormatError("tract GeoJSON: expected a FeatureCollection");
    std::vector<TractPolygon> out;
    for (const auto& f : doc["features"]) {
        const auto props = f.value("properties", nlohmann::json::object());
        if (!props.is_object() || !props.contains("GEOID") || !props["GEOID"].is_string())
            throw FormatError("tract GeoJSON: feature without string GEOID property");
        const std::string geoid = props["GEOID"].get<std::string>();
        const auto& geom = f.at("geometry");
        const std::string type = geom.value("type", "");
        if (type == "Polygon") {
            out.push_back(detail::parse_polygon(geom.at("coordinates"), geoid));
        } else if (type == "MultiPolygon") {
            for (const auto& part : geom.at("coordinates")) out.push_back(detail::parse_polygon(part, geoid));
        } else {
            throw InvalidPolygon(geoid, "unsupported geometry type '" + type + "'");
        }
    }
    return out;
}

inline void write_tracts_geojson(std::ostream& out, std::span<const TractPolygon> polys) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& poly : polys) {
        nlohmann::json rings = nlohmann::json::array();
        for (const auto& ring : poly.rings) {
            nlohmann::json r = nlohmann::json::array();
            for (const auto& p : ring) r.push_back({p.lon, p.lat});
            rings.push_back(std::move(r));
        }
        features.push_back({{"type", "Feature"},
                            {"properties", {{"GEOID", poly.geoid}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", std::move(rings)}}}});
    }
    nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", std::move(features)}};
    out << doc.dump() << '\n';
}

} // namespace mobiscope
