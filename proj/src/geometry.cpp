#include "mqttg/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mqttg {

namespace {

bool finite(const GeoPoint& p) { return std::isfinite(p.latitude) && std::isfinite(p.longitude); }

double point_segment_distance(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    double ax = a.latitude, ay = a.longitude;
    double dx = b.latitude - ax, dy = b.longitude - ay;
    double px = p.latitude - ax, py = p.longitude - ay;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double ex = px - t * dx, ey = py - t * dy;
    return std::hypot(ex, ey);
}

}  // namespace

const char* to_string(FenceIssue issue) {
    switch (issue) {
        case FenceIssue::TooFewVertices: return "TooFewVertices";
        case FenceIssue::NonFiniteVertex: return "NonFiniteVertex";
        case FenceIssue::DegenerateEdge: return "DegenerateEdge";
    }
    return "?";
}

std::optional<FenceIssue> fence_issue(const Geofence& f) {
    if (f.vertices.size() < 3) return FenceIssue::TooFewVertices;
    for (const auto& v : f.vertices) {
        if (!finite(v)) return FenceIssue::NonFiniteVertex;
    }
    for (std::size_t i = 0; i < f.vertices.size(); ++i) {
        const auto& a = f.vertices[i];
        const auto& b = f.vertices[(i + 1) % f.vertices.size()];
        if (a == b) return FenceIssue::DegenerateEdge;
    }
    return std::nullopt;
}

std::vector<GeoPoint> resolve_fence(const Geofence& f, const std::optional<GeoPoint>& anchor) {
    if (f.mode == FenceMode::Static) return f.vertices;
    if (!anchor) throw NoAnchor();
    std::vector<GeoPoint> out;
    out.reserve(f.vertices.size());
    for (const auto& v : f.vertices) {
        out.push_back({anchor->latitude + v.latitude, anchor->longitude + v.longitude});
    }
    return out;
}

bool point_in_polygon(const GeoPoint& p, std::span<const GeoPoint> polygon) {
    const std::size_t n = polygon.size();

    // on-edge points are inside by contract
    for (std::size_t i = 0; i < n; ++i) {
        if (point_segment_distance(p, polygon[i], polygon[(i + 1) % n]) <= kEdgeEpsilonDegrees) {
            return true;
        }
    }

    // even-odd ray cast along the +longitude axis
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const GeoPoint& a = polygon[i];
        const GeoPoint& b = polygon[j];
        if ((a.latitude > p.latitude) != (b.latitude > p.latitude)) {
            double cross = (b.longitude - a.longitude) * (p.latitude - a.latitude) /
                               (b.latitude - a.latitude) +
                           a.longitude;
            if (p.longitude < cross) inside = !inside;
        }
    }
    return inside;
}

}  // namespace mqttg
