#include "urbansolar/raycast.hpp"

#include <algorithm>
#include <cmath>

namespace urbansolar {

namespace {
constexpr double kEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

const char* category_name(Category c) {
    switch (c) {
        case Category::Sky: return "sky";
        case Category::Ground: return "ground";
        case Category::Opaque: return "opaque";
        case Category::Glazing: return "glazing";
        case Category::Invalid: return "invalid";
    }
    return "?";
}

RayCaster::RayCaster(LOD1Scene scene, double cell_size)
    : scene_(std::move(scene)), walls_(extract_walls(scene_)), top_(scene_.max_height()), cell_(cell_size) {
    int acc = 0;
    for (const auto& b : scene_.buildings) {
        first_wall_.push_back(acc);
        acc += static_cast<int>(b.footprint.size());
    }
    if (scene_.buildings.empty()) return;

    Vec2 lo{kInf, kInf};
    Vec2 hi{-kInf, -kInf};
    for (const auto& b : scene_.buildings) {
        for (const Vec2& v : b.footprint) {
            lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
            hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
        }
    }
    min_ = lo - Vec2{1e-6, 1e-6};
    nx_ = std::max(1, static_cast<int>(std::ceil((hi.x - min_.x) / cell_ + 1e-9)));
    ny_ = std::max(1, static_cast<int>(std::ceil((hi.y - min_.y) / cell_ + 1e-9)));
    cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
    for (std::size_t bi = 0; bi < scene_.buildings.size(); ++bi) {
        Vec2 blo{kInf, kInf};
        Vec2 bhi{-kInf, -kInf};
        for (const Vec2& v : scene_.buildings[bi].footprint) {
            blo = {std::min(blo.x, v.x), std::min(blo.y, v.y)};
            bhi = {std::max(bhi.x, v.x), std::max(bhi.y, v.y)};
        }
        const int x0 = std::clamp(static_cast<int>(std::floor((blo.x - min_.x) / cell_)), 0, nx_ - 1);
        const int x1 = std::clamp(static_cast<int>(std::floor((bhi.x - min_.x) / cell_)), 0, nx_ - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor((blo.y - min_.y) / cell_)), 0, ny_ - 1);
        const int y1 = std::clamp(static_cast<int>(std::floor((bhi.y - min_.y) / cell_)), 0, ny_ - 1);
        for (int ix = x0; ix <= x1; ++ix) {
            for (int iy = y0; iy <= y1; ++iy) {
                cells_[static_cast<std::size_t>(iy) * nx_ + ix].push_back(static_cast<int>(bi));
            }
        }
    }
}

void RayCaster::test_ground(Vec3 o, Vec3 d, Hit& best) const {
    if (d.z >= -1e-15) return;
    const double t = (scene_.ground_elevation - o.z) / d.z;
    if (t > kEps && t < best.distance) {
        best = Hit{Surface::Ground, t, -1, 0.0, 0.0};
    }
}

void RayCaster::test_building(int bi, Vec3 o, Vec3 d, Hit& best) const {
    const auto& b = scene_.buildings[static_cast<std::size_t>(bi)];
    const int first = first_wall_[static_cast<std::size_t>(bi)];
    for (int k = 0; k < static_cast<int>(b.footprint.size()); ++k) {
        const Wall& w = walls_[static_cast<std::size_t>(first + k)];
        const double denom = d.x * w.normal.x + d.y * w.normal.y;
        if (std::abs(denom) < 1e-15) continue;
        const double t = ((w.a.x - o.x) * w.normal.x + (w.a.y - o.y) * w.normal.y) / denom;
        if (t <= kEps || t >= best.distance) continue;
        const Vec3 p = o + t * d;
        const Vec2 along = (1.0 / w.length) * (w.b - w.a);
        const double u = (p.x - w.a.x) * along.x + (p.y - w.a.y) * along.y;
        if (u < 0.0 || u > w.length || p.z < w.base || p.z > w.top) continue;
        best = Hit{Surface::Wall, t, first + k, u, p.z - w.base};
    }
    if (std::abs(d.z) > 1e-15) {
        const double roof = scene_.ground_elevation + b.height;
        const double t = (roof - o.z) / d.z;
        if (t > kEps && t < best.distance) {
            const Vec3 p = o + t * d;
            if (contains(b.footprint, {p.x, p.y})) best = Hit{Surface::Roof, t, -1, 0.0, 0.0};
        }
    }
}

Hit RayCaster::cast_brute(Vec3 o, Vec3 d) const {
    Hit best;
    test_ground(o, d, best);
    for (int bi = 0; bi < static_cast<int>(scene_.buildings.size()); ++bi) test_building(bi, o, d, best);
    return best;
}

Hit RayCaster::cast(Vec3 o, Vec3 d) const {
    Hit best;
    test_ground(o, d, best);
    if (cells_.empty()) return best;

    double t_max = best.distance;
    if (d.z > 1e-15) {
        if (o.z >= top_) return best;
        t_max = std::min(t_max, (top_ - o.z) / d.z);
    }

    // slab clip against the grid rectangle
    const Vec2 hi = min_ + Vec2{nx_ * cell_, ny_ * cell_};
    double t0 = 0.0;
    double t1 = t_max;
    const double dir[2] = {d.x, d.y};
    const double org[2] = {o.x, o.y};
    const double lo_b[2] = {min_.x, min_.y};
    const double hi_b[2] = {hi.x, hi.y};
    for (int axis = 0; axis < 2; ++axis) {
        if (std::abs(dir[axis]) < 1e-15) {
            if (org[axis] < lo_b[axis] || org[axis] > hi_b[axis]) return best;
            continue;
        }
        double ta = (lo_b[axis] - org[axis]) / dir[axis];
        double tb = (hi_b[axis] - org[axis]) / dir[axis];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1) return best;

    const Vec3 p = o + t0 * d;
    int ix = std::clamp(static_cast<int>(std::floor((p.x - min_.x) / cell_)), 0, nx_ - 1);
    int iy = std::clamp(static_cast<int>(std::floor((p.y - min_.y) / cell_)), 0, ny_ - 1);
    const int sx = d.x > 0 ? 1 : -1;
    const int sy = d.y > 0 ? 1 : -1;
    const double tdx = std::abs(d.x) > 1e-15 ? cell_ / std::abs(d.x) : kInf;
    const double tdy = std::abs(d.y) > 1e-15 ? cell_ / std::abs(d.y) : kInf;
    double tnx = std::abs(d.x) > 1e-15 ? (min_.x + (ix + (sx > 0 ? 1 : 0)) * cell_ - o.x) / d.x : kInf;
    double tny = std::abs(d.y) > 1e-15 ? (min_.y + (iy + (sy > 0 ? 1 : 0)) * cell_ - o.y) / d.y : kInf;

    std::vector<int> tested;
    while (true) {
        for (int bi : cells_[static_cast<std::size_t>(iy) * nx_ + ix]) {
            if (std::find(tested.begin(), tested.end(), bi) != tested.end()) continue;
            tested.push_back(bi);
            test_building(bi, o, d, best);
        }
        const double exit = std::min(tnx, tny);
        if (best.distance <= exit || exit > t1) break;
        if (tnx < tny) {
            ix += sx;
            tnx += tdx;
            if (ix < 0 || ix >= nx_) break;
        } else {
            iy += sy;
            tny += tdy;
            if (iy < 0 || iy >= ny_) break;
        }
    }
    return best;
}

Category RayCaster::categorize(const Hit& hit, const GlazingSpec& glazing) const {
    switch (hit.surface) {
        case Surface::None: return Category::Sky;
        case Surface::Ground: return Category::Ground;
        case Surface::Roof: return Category::Opaque;
        case Surface::Wall: {
            const Wall& w = walls_[static_cast<std::size_t>(hit.wall)];
            return is_glazed(w, glazing, hit.u, hit.v) ? Category::Glazing : Category::Opaque;
        }
    }
    return Category::Sky;
}

CategorizedHit cast_ray(const RayCaster& caster, const GlazingSpec& glazing, Vec3 origin, Vec3 direction) {
    const Hit h = caster.cast(origin, direction);
    return {caster.categorize(h, glazing), h.distance};
}

}  // namespace urbansolar
