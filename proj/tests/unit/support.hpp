#pragma once

#include <filesystem>
#include <string>

#include "urbansolar/mask.hpp"
#include "urbansolar/scene.hpp"

namespace urbansolar::testing {

inline Building box(double x0, double y0, double x1, double y1, double height) {
    return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, height};
}

inline LOD1Scene scene_of(std::vector<Building> buildings) {
    LOD1Scene s;
    s.buildings = std::move(buildings);
    s.validate();
    return s;
}

inline SensorPoint facade_point(Vec3 position, Vec3 normal) {
    SensorPoint p;
    p.id = "t";
    p.position = position;
    p.normal = normalized(normal);
    return p;
}

/// Convex polygon clipping (Sutherland-Hodgman); `clip` must be counter-clockwise.
inline Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
    Polygon out = subject;
    for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
        const Vec2 a = clip[i];
        const Vec2 b = clip[(i + 1) % clip.size()];
        const auto inside = [&](Vec2 p) { return cross(b - a, p - a) >= 0.0; };
        Polygon in = std::move(out);
        out.clear();
        for (std::size_t j = 0; j < in.size(); ++j) {
            const Vec2 p = in[j];
            const Vec2 q = in[(j + 1) % in.size()];
            const bool pin = inside(p);
            const bool qin = inside(q);
            if (pin) out.push_back(p);
            if (pin != qin) {
                const double t = cross(b - a, p - a) / (cross(b - a, p - a) - cross(b - a, q - a));
                out.push_back(p + t * (q - p));
            }
        }
    }
    return out;
}

inline double polygon_area(const Polygon& p) {
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) a += cross(p[i], p[(i + 1) % p.size()]);
    return 0.5 * a;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("urbansolar_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Horizon at `horizon`, an opaque block spanning columns [c0, c1) up to
/// `top`, and a glazed band inside it.
inline CubeMask toy_mask(int horizon, int c0, int c1, int top) {
    CubeMask m;
    for (int r = 0; r < CubeMask::kSize; ++r) {
        for (int c = 0; c < CubeMask::kSize; ++c) {
            Category k = r < horizon ? Category::Sky : Category::Ground;
            if (c >= c0 && c < c1 && r >= top && r < horizon) {
                k = (r - top) % 8 < 4 && (c - c0) % 8 < 5 ? Category::Glazing : Category::Opaque;
            }
            m.at(r, c) = k;
        }
    }
    return m;
}

}  // namespace urbansolar::testing
