#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace hiwm {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) noexcept { return {s * a.x, s * a.y}; }
    friend Vec2 operator*(Vec2 a, double s) noexcept { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }

inline Vec2 rotate(Vec2 v, double theta) noexcept {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) noexcept {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a <= 0.0) a += two_pi;
    return a - std::numbers::pi;
}

/// Planar rigid pose: translation in mm, heading in rad.
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Vec2 position() const noexcept { return {x, y}; }
    Vec2 to_world(Vec2 local) const noexcept { return rotate(local, theta) + position(); }
    Vec2 to_local(Vec2 world) const noexcept { return rotate(world - position(), -theta); }

    friend bool operator==(const Pose2&, const Pose2&) = default;
};

using Polygon = std::vector<Vec2>;

/// Signed shoelace area; positive for counter-clockwise winding.
inline double signed_area(const Polygon& poly) noexcept {
    double a = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
    return 0.5 * a;
}

/// Sutherland-Hodgman clipping of `subject` by a convex, counter-clockwise
/// `clip` polygon. Returns the (possibly empty) convex intersection.
inline Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
    Polygon out = subject;
    const std::size_t m = clip.size();
    for (std::size_t e = 0; e < m && !out.empty(); ++e) {
        const Vec2 a = clip[e];
        const Vec2 b = clip[(e + 1) % m];
        const Vec2 edge = b - a;
        Polygon in = std::move(out);
        out.clear();
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 p = in[i];
            const Vec2 q = in[(i + 1) % n];
            const double sp = cross(edge, p - a);
            const double sq = cross(edge, q - a);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) {
                const double t = sp / (sp - sq);
                out.push_back(p + t * (q - p));
            }
        }
    }
    return out;
}

inline double convex_intersection_area(const Polygon& a, const Polygon& b) {
    const Polygon c = clip_convex(a, b);
    return c.size() < 3 ? 0.0 : std::abs(signed_area(c));
}

/// Axis-aligned rectangle in a body frame.
struct Rect {
    double x0, y0, x1, y1;

    bool contains(Vec2 p) const noexcept { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
    double area() const noexcept { return (x1 - x0) * (y1 - y0); }
    Polygon corners(const Pose2& pose) const {
        return {pose.to_world({x0, y0}), pose.to_world({x1, y0}), pose.to_world({x1, y1}),
                pose.to_world({x0, y1})};
    }
};

/// The T block: a 120x30 mm bar over a 30x90 mm stem. The body frame origin
/// is the centre of mass, so a pose places the COM.
namespace tshape {

inline constexpr double kBarLength = 120.0;
inline constexpr double kBarWidth = 30.0;
inline constexpr double kStemWidth = 30.0;
inline constexpr double kStemLength = 90.0;
inline constexpr double kBarArea = kBarLength * kBarWidth;
inline constexpr double kStemArea = kStemWidth * kStemLength;
inline constexpr double kArea = kBarArea + kStemArea;

// Junction line (bar bottom) measured from the COM.
inline constexpr double kJunctionY =
    (kStemArea * (kStemLength / 2.0) - kBarArea * (kBarWidth / 2.0)) / kArea;

inline constexpr Rect kBar{-kBarLength / 2.0, kJunctionY, kBarLength / 2.0, kJunctionY + kBarWidth};
inline constexpr Rect kStem{-kStemWidth / 2.0, kJunctionY - kStemLength, kStemWidth / 2.0, kJunctionY};

/// Mass-normalised moment of inertia about the COM (I / m).
inline constexpr double kInertiaPerMass = [] {
    auto rect_term = [](const Rect& r) {
        const double w = r.x1 - r.x0, h = r.y1 - r.y0;
        const double cx = 0.5 * (r.x0 + r.x1), cy = 0.5 * (r.y0 + r.y1);
        return w * h * ((w * w + h * h) / 12.0 + cx * cx + cy * cy);
    };
    return (rect_term(kBar) + rect_term(kStem)) / kArea;
}();

/// Outline vertices in the body frame, counter-clockwise.
inline const std::array<Vec2, 8>& outline() {
    static const std::array<Vec2, 8> pts{{
        {kStem.x0, kStem.y0},
        {kStem.x1, kStem.y0},
        {kStem.x1, kStem.y1},
        {kBar.x1, kBar.y0},
        {kBar.x1, kBar.y1},
        {kBar.x0, kBar.y1},
        {kBar.x0, kBar.y0},
        {kStem.x0, kStem.y1},
    }};
    return pts;
}

inline bool contains_local(Vec2 p) noexcept { return kBar.contains(p) || kStem.contains(p); }

inline bool contains(const Pose2& pose, Vec2 world) noexcept {
    return contains_local(pose.to_local(world));
}

/// Closest point on the T outline to `p` (body frame), with distance.
struct OutlineHit {
    Vec2 point;
    double distance;
    Vec2 outward_normal;  // normal of the outline edge the point lies on
};

inline OutlineHit closest_on_outline_local(Vec2 p) noexcept {
    const auto& o = outline();
    OutlineHit best{{}, std::numeric_limits<double>::infinity(), {}};
    for (std::size_t i = 0; i < o.size(); ++i) {
        const Vec2 a = o[i], b = o[(i + 1) % o.size()];
        const Vec2 ab = b - a;
        const double len2 = dot(ab, ab);
        const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
        const Vec2 c = a + t * ab;
        const double d = norm(p - c);
        if (d < best.distance) {
            const double len = std::sqrt(len2);
            best = {c, d, {ab.y / len, -ab.x / len}};
        }
    }
    return best;
}

inline double distance_to_outline(const Pose2& pose, Vec2 world) noexcept {
    return closest_on_outline_local(pose.to_local(world)).distance;
}

/// Signed distance from the T: negative inside.
inline double signed_distance(const Pose2& pose, Vec2 world) noexcept {
    const Vec2 local = pose.to_local(world);
    const double d = closest_on_outline_local(local).distance;
    return contains_local(local) ? -d : d;
}

inline std::array<Polygon, 2> polygons(const Pose2& pose) {
    return {kBar.corners(pose), kStem.corners(pose)};
}

/// Area of T(a) intersected with T(b), by inclusion-exclusion over the 2x2
/// rectangle pairs. Rectangles inside one T share only an edge, so the
/// higher-order terms vanish and the pairwise sum is exact.
inline double intersection_area(const Pose2& a, const Pose2& b) {
    const auto pa = polygons(a);
    const auto pb = polygons(b);
    double area = 0.0;
    for (const auto& ra : pa)
        for (const auto& rb : pb) area += convex_intersection_area(ra, rb);
    return area;
}

/// Fraction of the T area covered when placed at `a` versus `b`, in [0, 1].
inline double overlap(const Pose2& a, const Pose2& b) {
    return std::clamp(intersection_area(a, b) / kArea, 0.0, 1.0);
}

/// Largest distance from the COM to any outline vertex.
inline double bounding_radius() noexcept {
    double r = 0.0;
    for (Vec2 v : outline()) r = std::max(r, norm(v));
    return r;
}

}  // namespace tshape
}  // namespace hiwm
