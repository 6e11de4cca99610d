#ifndef MQTTG_GEOMETRY_HPP
#define MQTTG_GEOMETRY_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mqttg {

struct GeoPoint {
    double latitude = 0.0;
    double longitude = 0.0;
    bool operator==(const GeoPoint&) const = default;
};

enum class FenceMode : uint8_t {
    Static = 0,   // vertices are absolute coordinates
    Dynamic = 1,  // vertices are offsets from the owner's last known location
};

struct Geofence {
    FenceMode mode = FenceMode::Static;
    std::vector<GeoPoint> vertices;
    bool operator==(const Geofence&) const = default;
};

enum class FenceIssue {
    TooFewVertices,
    NonFiniteVertex,
    DegenerateEdge,
};

const char* to_string(FenceIssue issue);

// First invariant violation, or nullopt for a usable fence. The polygon is
// closed implicitly, so the last/first vertex pair counts as an edge too.
std::optional<FenceIssue> fence_issue(const Geofence& f);

struct NoAnchor : std::invalid_argument {
    NoAnchor() : std::invalid_argument("dynamic fence needs an anchor location") {}
};

// Absolute polygon for containment testing. Static fences ignore the anchor;
// dynamic fences add it to every offset vertex. Throws NoAnchor when a dynamic
// fence has none.
std::vector<GeoPoint> resolve_fence(const Geofence& f, const std::optional<GeoPoint>& anchor);

// Points closer than this to an edge count as inside.
inline constexpr double kEdgeEpsilonDegrees = 1e-12;

// Even-odd (ray casting) containment on the planar lat/lon plane. Fences
// spanning the antimeridian or poles are not supported.
bool point_in_polygon(const GeoPoint& p, std::span<const GeoPoint> polygon);

}  // namespace mqttg

#endif
