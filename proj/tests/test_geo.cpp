// Distances, projection, polygons and the tract index.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "support.hpp"

using namespace mobiscope;

namespace {

TractPolygon square(const std::string& id, double x0, double y0, double side) {
    return {id, {{{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}, {x0, y0}}}};
}

// Convex polygon with vertices on a circle, counter-clockwise.
TractPolygon random_convex(SplitMix64& rng, const std::string& id, double cx, double cy, double r) {
    std::vector<double> angles(3 + rng.below(6));
    for (auto& a : angles) a = rng.uniform(0, 2 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());
    Ring ring;
    for (double a : angles) ring.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    ring.push_back(ring.front());
    return {id, {ring}};
}

// Inside a CCW convex polygon iff on the left of (or on) every edge.
bool halfplane_oracle(const GeoPoint& p, const Ring& ring) {
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const auto& a = ring[i];
        const auto& b = ring[i + 1];
        if ((b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon) < 0) return false;
    }
    return true;
}

double shoelace(const std::vector<ProjectedPoint>& pts) {
    double s = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& a = pts[i];
        const auto& b = pts[(i + 1) % pts.size()];
        s += a.x * b.y - b.x * a.y;
    }
    return std::abs(s) / 2;
}

} // namespace

TEST(Haversine, IdentityAndAntipodes) {
    const GeoPoint a{-87.6298, 41.8781};
    EXPECT_EQ(haversine_distance(a, a), 0.0);
    EXPECT_NEAR(haversine_distance({0, 0}, {180, 0}), std::numbers::pi * kEarthRadiusM, 1e-6);
    EXPECT_NEAR(haversine_distance({10, 20}, {-170, -20}), std::numbers::pi * kEarthRadiusM, 1e-3);
}

TEST(Haversine, ChicagoToMeridian96WithinHalfPercentOfGeodesic) {
    // WGS84 geodesic distance from an independent implementation.
    const double geodesic = 694523.7913068945;
    const double d = haversine_distance({-87.6298, 41.8781}, {-96.0, 41.8781});
    EXPECT_LT(std::abs(d - geodesic) / geodesic, 0.005);
}

TEST(Haversine, SymmetricNonNegativeAndTriangleInequality) {
    SplitMix64 rng(21);
    for (int i = 0; i < 2000; ++i) {
        const GeoPoint a{rng.uniform(-180, 180), rng.uniform(-90, 90)};
        const GeoPoint b{rng.uniform(-180, 180), rng.uniform(-90, 90)};
        const GeoPoint c{rng.uniform(-180, 180), rng.uniform(-90, 90)};
        const double ab = haversine_distance(a, b), bc = haversine_distance(b, c), ac = haversine_distance(a, c);
        ASSERT_GE(ab, 0);
        ASSERT_EQ(ab, haversine_distance(b, a));
        ASSERT_LE(ac, ab + bc + 1e-6);
    }
}

TEST(Albers, OriginAndCentralMeridian) {
    const auto o = project_albers({-96, 23});
    EXPECT_NEAR(o.x, 0, 1e-9);
    EXPECT_NEAR(o.y, 0, 1e-6);
    const auto p = project_albers({-96, 45});
    EXPECT_NEAR(p.x, 0, 1e-9);
    EXPECT_GT(p.y, 0);
}

TEST(Albers, MatchesIndependentProjectionWithinOneMeter) {
    // Spherical Albers (R = 6371008.8, 29.5/45.5, lat_0 23, lon_0 -96) from an
    // independent projection library.
    struct Case {
        GeoPoint in;
        double x, y;
    };
    const Case cases[] = {{{-87.6298, 41.8781}, 687077.4613008905, 2133151.5112872696},
                          {{-96, 45}, 0.0, 2451623.447620062},
                          {{-120.5, 30.25}, -2323642.390983956, 1101107.9291859793}};
    for (const auto& c : cases) {
        const auto p = project_albers(c.in);
        EXPECT_NEAR(p.x, c.x, 1.0);
        EXPECT_NEAR(p.y, c.y, 1.0);
    }
}

TEST(Albers, InverseRoundTrips) {
    SplitMix64 rng(8);
    for (int i = 0; i < 5000; ++i) {
        const GeoPoint g{rng.uniform(-125, -66), rng.uniform(24, 50)};
        const GeoPoint back = unproject_albers(project_albers(g));
        ASSERT_NEAR(back.lon, g.lon, 1e-9);
        ASSERT_NEAR(back.lat, g.lat, 1e-9);
    }
}

TEST(Albers, EqualAreaAtFiveLatitudes) {
    const double d = 0.05;  // degrees
    for (double lat : {25.0, 32.0, 38.0, 44.0, 49.0}) {
        const double lon = -100;
        std::vector<ProjectedPoint> outline;
        const int k = 50;  // densify the parallels, which project to arcs
        for (int i = 0; i <= k; ++i) outline.push_back(project_albers({lon + d * i / k, lat}));
        for (int i = k; i >= 0; --i) outline.push_back(project_albers({lon + d * i / k, lat + d}));
        const double r = kEarthRadiusM;
        const double sphere = r * r * (d * std::numbers::pi / 180) *
                              (std::sin((lat + d) * std::numbers::pi / 180) - std::sin(lat * std::numbers::pi / 180));
        EXPECT_LT(std::abs(shoelace(outline) - sphere) / sphere, 1e-3) << "lat " << lat;
    }
}

TEST(BBox, DefaultIsContiguousUsAndClosed) {
    const BBox b;
    EXPECT_TRUE(b.contains({-87.6, 41.9}));
    EXPECT_TRUE(b.contains({-125, 24}));
    EXPECT_FALSE(b.contains({-157.8, 21.3}));
    EXPECT_THROW((BBox{10, 0, 0, 1}.validate()), std::invalid_argument);
}

TEST(PointInPolygon, UnitSquare) {
    const auto sq = square("1", 0, 0, 1);
    EXPECT_TRUE(point_in_polygon({0.5, 0.5}, sq));
    EXPECT_FALSE(point_in_polygon({2, 2}, sq));
    EXPECT_TRUE(point_in_polygon({0, 0.5}, sq));  // on an edge
    EXPECT_TRUE(point_in_polygon({1, 1}, sq));    // on a vertex
    EXPECT_FALSE(point_in_polygon({1.0000001, 0.5}, sq));
}

TEST(PointInPolygon, HolesAreExcludedButTheirEdgesCount) {
    TractPolygon p = square("1", 0, 0, 4);
    p.rings.push_back({{1, 1}, {3, 1}, {3, 3}, {1, 3}, {1, 1}});
    EXPECT_TRUE(point_in_polygon({0.5, 0.5}, p));
    EXPECT_FALSE(point_in_polygon({2, 2}, p));
    EXPECT_TRUE(point_in_polygon({1, 2}, p));
}

TEST(PointInPolygon, AgreesWithHalfPlaneOracleOnConvexPolygons) {
    SplitMix64 rng(13);
    for (int k = 0; k < 100; ++k) {
        const auto poly = random_convex(rng, "p", 0, 0, 1);
        for (int i = 0; i < 100; ++i) {
            const GeoPoint q{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
            ASSERT_EQ(point_in_polygon(q, poly), halfplane_oracle(q, poly.rings[0]));
        }
    }
}

TEST(ValidatePolygon, RejectsBadRings) {
    EXPECT_NO_THROW(validate_polygon(square("ok", 0, 0, 1)));
    TractPolygon open{"open", {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}};
    EXPECT_THROW(validate_polygon(open), InvalidPolygon);
    TractPolygon tiny{"tiny", {{{0, 0}, {1, 0}, {0, 0}}}};
    EXPECT_THROW(validate_polygon(tiny), InvalidPolygon);
    TractPolygon bowtie{"bow", {{{0, 0}, {1, 1}, {1, 0}, {0, 1}, {0, 0}}}};
    try {
        validate_polygon(bowtie);
        FAIL() << "bowtie accepted";
    } catch (const InvalidPolygon& e) {
        EXPECT_EQ(e.geoid(), "bow");
    }
}

TEST(TractIndex, SingleHitAndMiss) {
    const TractIndex idx({square("17031000100", 0, 0, 1), square("17031000200", 1, 0, 1)});
    EXPECT_EQ(idx.lookup({0.5, 0.5}), "17031000100");
    EXPECT_EQ(idx.lookup({1.5, 0.5}), "17031000200");
    EXPECT_EQ(idx.lookup({5, 5}), std::nullopt);
    EXPECT_EQ(idx.lookup({1.0, 0.5}), "17031000100");  // shared edge: lowest geoid
    EXPECT_EQ(TractIndex().lookup({0, 0}), std::nullopt);
}

TEST(TractIndex, MatchesLinearScanOn200Tracts) {
    SplitMix64 rng(200);
    std::vector<TractPolygon> polys;
    for (int i = 0; i < 200; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "%011ld", 17031000000L + (i * 7919) % 1000);
        polys.push_back(random_convex(rng, id, rng.uniform(-88, -87.5), rng.uniform(41.6, 42.1), rng.uniform(0.005, 0.05)));
    }
    const TractIndex idx(polys);
    std::size_t hits = 0;
    for (int i = 0; i < 10000; ++i) {
        const GeoPoint q{rng.uniform(-88.1, -87.4), rng.uniform(41.5, 42.2)};
        const auto got = idx.lookup(q);
        ASSERT_EQ(got, tract_lookup_linear(q, polys));
        hits += got.has_value();
    }
    EXPECT_GT(hits, 500u);
}

TEST(TractGeoJson, RoundTripsAndSplitsMultiPolygons) {
    const std::string doc = R"({"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"GEOID":"A"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type":"Feature","properties":{"GEOID":"B"},"geometry":{"type":"MultiPolygon","coordinates":[
        [[[2,0],[3,0],[3,1],[2,1],[2,0]]],[[[4,0],[5,0],[5,1],[4,1],[4,0]]]]}}]})";
    std::istringstream in(doc);
    const auto polys = read_tracts_geojson(in);
    ASSERT_EQ(polys.size(), 3u);
    EXPECT_EQ(polys[2].geoid, "B");
    std::stringstream buf;
    write_tracts_geojson(buf, polys);
    const auto again = read_tracts_geojson(buf);
    EXPECT_EQ(again, polys);
}

TEST(TractGeoJson, NamedErrors) {
    std::istringstream no_geoid(
        R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[]}}]})");
    EXPECT_THROW(read_tracts_geojson(no_geoid), FormatError);
    std::istringstream bowtie(
        R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"GEOID":"X9"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}}]})");
    try {
        read_tracts_geojson(bowtie);
        FAIL();
    } catch (const InvalidPolygon& e) {
        EXPECT_EQ(e.geoid(), "X9");
    }
    std::istringstream junk("not json");
    EXPECT_THROW(read_tracts_geojson(junk), FormatError);
}
