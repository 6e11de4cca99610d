#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "mqttg/geometry.hpp"
#include "mqttg/sim.hpp"

using namespace mqttg;

namespace {

const std::vector<GeoPoint> kSquare = {{0, 0}, {0, 10}, {10, 10}, {10, 0}};

Geofence square_fence() {
    Geofence f;
    f.vertices = kSquare;
    return f;
}

double edge_distance(const GeoPoint& p, const std::vector<GeoPoint>& poly) {
    double best = 1e300;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const GeoPoint& a = poly[i];
        const GeoPoint& b = poly[(i + 1) % poly.size()];
        double dx = b.latitude - a.latitude, dy = b.longitude - a.longitude;
        double px = p.latitude - a.latitude, py = p.longitude - a.longitude;
        double len2 = dx * dx + dy * dy;
        double t = len2 > 0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, std::hypot(px - t * dx, py - t * dy));
    }
    return best;
}

// all-half-planes test for convex polygons, the second independent oracle
bool convex_contains(const GeoPoint& p, const std::vector<GeoPoint>& poly) {
    int sign = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const GeoPoint& a = poly[i];
        const GeoPoint& b = poly[(i + 1) % poly.size()];
        double cross = (b.latitude - a.latitude) * (p.longitude - a.longitude) -
                       (b.longitude - a.longitude) * (p.latitude - a.latitude);
        if (cross == 0.0) continue;
        int s = cross > 0 ? 1 : -1;
        if (sign == 0) {
            sign = s;
        } else if (s != sign) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("fence validation reports the first violated invariant") {
    Geofence two;
    two.vertices = {{0, 0}, {1, 1}};
    CHECK(fence_issue(two) == FenceIssue::TooFewVertices);

    CHECK(fence_issue(square_fence()) == std::nullopt);

    Geofence nan_fence = square_fence();
    nan_fence.vertices[2].latitude = std::nan("");
    CHECK(fence_issue(nan_fence) == FenceIssue::NonFiniteVertex);

    Geofence dup = square_fence();
    dup.vertices.push_back(dup.vertices.back());
    CHECK(fence_issue(dup) == FenceIssue::DegenerateEdge);

    // closing edge counts: first == last is degenerate too
    Geofence wrap = square_fence();
    wrap.vertices.push_back(wrap.vertices.front());
    CHECK(fence_issue(wrap) == FenceIssue::DegenerateEdge);
}

TEST_CASE("resolve_fence is identity for static and offset for dynamic") {
    Geofence f = square_fence();
    auto r = resolve_fence(f, GeoPoint{50, -100});
    CHECK(r == kSquare);
    CHECK(resolve_fence(f, std::nullopt) == kSquare);

    Geofence d;
    d.mode = FenceMode::Dynamic;
    d.vertices = {{-1, -1}, {-1, 1}, {1, 1}, {1, -1}};
    auto rd = resolve_fence(d, GeoPoint{50, -100});
    CHECK(rd == std::vector<GeoPoint>{{49, -101}, {49, -99}, {51, -99}, {51, -101}});

    CHECK_THROWS_AS(resolve_fence(d, std::nullopt), NoAnchor);
}

TEST_CASE("point_in_polygon basics") {
    CHECK(point_in_polygon({5, 5}, kSquare));
    CHECK_FALSE(point_in_polygon({15, 5}, kSquare));
    CHECK_FALSE(point_in_polygon({-1, 5}, kSquare));

    // on-edge and on-vertex points count as inside
    CHECK(point_in_polygon({0, 5}, kSquare));
    CHECK(point_in_polygon({10, 10}, kSquare));
    CHECK(point_in_polygon({0, 0}, kSquare));
    // within the epsilon band
    CHECK(point_in_polygon({5, 10.0 + 1e-13}, kSquare));
    CHECK_FALSE(point_in_polygon({5, 10.1}, kSquare));
}

TEST_CASE("containment is invariant under vertex rotation and reversal") {
    gen::PacketGen g(11);
    for (int i = 0; i < 300; ++i) {
        auto poly = g.simple_polygon();
        GeoPoint p{g.real(-70, 70), g.real(-130, 130)};
        bool base = point_in_polygon(p, poly);

        auto rotated = poly;
        std::rotate(rotated.begin(), rotated.begin() + static_cast<long>(g.pick(poly.size())),
                    rotated.end());
        CHECK(point_in_polygon(p, rotated) == base);

        auto reversed = poly;
        std::reverse(reversed.begin(), reversed.end());
        CHECK(point_in_polygon(p, reversed) == base);
    }
}

TEST_CASE("ray cast equals the winding-number oracle away from edges") {
    gen::PacketGen g(23);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        auto poly = g.simple_polygon();
        GeoPoint center{0, 0};
        for (const auto& v : poly) {
            center.latitude += v.latitude;
            center.longitude += v.longitude;
        }
        center.latitude /= static_cast<double>(poly.size());
        center.longitude /= static_cast<double>(poly.size());

        GeoPoint p;
        if (g.coin()) {
            p = {center.latitude + g.real(-10, 10), center.longitude + g.real(-10, 10)};
        } else {
            p = {g.real(-70, 70), g.real(-130, 130)};
        }
        if (edge_distance(p, poly) < 1e-9) continue;  // exclusion zone
        ++checked;
        CHECK(point_in_polygon(p, poly) == sim::oracle_point_in_polygon(p, poly));
    }
    CHECK(checked > 9000);
}

TEST_CASE("convex polygons agree with the half-plane oracle") {
    // regular polygons are convex
    gen::PacketGen g(37);
    for (int i = 0; i < 2000; ++i) {
        std::size_t n = 3 + g.pick(8);
        double cx = g.real(-50, 50), cy = g.real(-100, 100), r = g.real(1, 10);
        std::vector<GeoPoint> poly;
        for (std::size_t k = 0; k < n; ++k) {
            double a = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
            poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
        }
        GeoPoint p{cx + g.real(-2 * r, 2 * r), cy + g.real(-2 * r, 2 * r)};
        if (edge_distance(p, poly) < 1e-9) continue;
        CHECK(point_in_polygon(p, poly) == convex_contains(p, poly));
    }
}

TEST_CASE("self-intersecting polygons follow the even-odd rule") {
    // bowtie: (0,0) (2,2) (2,0) (0,2) — the crossing occurs at (1,1)
    std::vector<GeoPoint> bowtie = {{0, 0}, {2, 2}, {2, 0}, {0, 2}};
    CHECK(point_in_polygon({0.5, 1.0}, bowtie));        // left lobe
    CHECK(point_in_polygon({1.5, 1.0}, bowtie));        // right lobe
    CHECK_FALSE(point_in_polygon({1.0, 1.8}, bowtie));  // between the lobes
    CHECK_FALSE(point_in_polygon({1.0, 0.2}, bowtie));
}
