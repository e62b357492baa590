#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "urbansolar/scene.hpp"

namespace urbansolar {

/// Pixel categories of a shading mask. `Invalid` marks pixels outside the
/// fisheye circle and never appears in cube maps.
enum class Category : std::uint8_t { Sky = 0, Ground = 1, Opaque = 2, Glazing = 3, Invalid = 255 };

inline constexpr int kCategoryCount = 4;

const char* category_name(Category c);

enum class Surface : std::uint8_t { None, Wall, Roof, Ground };

/// Geometric hit; the category depends on the glazing applied afterwards.
struct Hit {
    Surface surface = Surface::None;
    double distance = std::numeric_limits<double>::infinity();
    int wall = -1;     ///< index into RayCaster::walls()
    double u = 0.0;    ///< wall-local coordinates of the hit
    double v = 0.0;
};

struct CategorizedHit {
    Category category = Category::Sky;
    double distance = std::numeric_limits<double>::infinity();
};

/// Immutable ray-casting acceleration structure over a scene. Rays march a
/// uniform 2D grid over the footprints; `cast_brute` tests every wall and roof
/// and defines correct behaviour.
class RayCaster {
public:
    explicit RayCaster(LOD1Scene scene, double cell_size = 8.0);

    Hit cast(Vec3 origin, Vec3 direction) const;
    Hit cast_brute(Vec3 origin, Vec3 direction) const;

    Category categorize(const Hit& hit, const GlazingSpec& glazing) const;

    const LOD1Scene& scene() const { return scene_; }
    const std::vector<Wall>& walls() const { return walls_; }

private:
    void test_building(int building, Vec3 o, Vec3 d, Hit& best) const;
    void test_ground(Vec3 o, Vec3 d, Hit& best) const;

    LOD1Scene scene_;
    std::vector<Wall> walls_;
    std::vector<int> first_wall_;  ///< per building, index of its first wall
    double top_ = 0.0;

    // uniform grid
    double cell_ = 8.0;
    Vec2 min_{};
    int nx_ = 0;
    int ny_ = 0;
    std::vector<std::vector<int>> cells_;
};

/// Convenience wrapper: nearest hit category and distance; no hit is Sky.
CategorizedHit cast_ray(const RayCaster& caster, const GlazingSpec& glazing, Vec3 origin, Vec3 direction);

}  // namespace urbansolar
