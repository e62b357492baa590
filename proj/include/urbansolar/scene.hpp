#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "urbansolar/geometry.hpp"

namespace urbansolar {

struct Building {
    Polygon footprint;  ///< counter-clockwise, meters, no closing vertex
    double height = 0.0;
};

/// Footprint polygons extruded by height (LOD1).
struct LOD1Scene {
    std::vector<Building> buildings;
    double ground_elevation = 0.0;
    std::string crs_note;

    /// Normalizes winding to counter-clockwise and checks every invariant.
    /// Throws GeometryError naming the offending building.
    void validate();
    std::size_t wall_count() const;
    double max_height() const;
};

/// One vertical quad per footprint edge.
struct Wall {
    int building = -1;
    int edge = -1;
    Vec2 a;            ///< start of the edge (counter-clockwise order)
    Vec2 b;
    double base = 0.0; ///< z of the wall bottom
    double top = 0.0;
    Vec3 normal;       ///< outward, horizontal, unit
    double length = 0.0;

    std::string id() const;
    double height() const { return top - base; }
};

std::vector<Wall> extract_walls(const LOD1Scene& scene);

/// Window-to-wall ratio realized as a regular per-storey window grid.
/// Each storey band is cut into cells of `bay_width` (rounded so that an
/// integer number of bays fits the wall) by `storey_height / rows_per_storey`;
/// every cell receives a centered window scaled by sqrt(wwr) in both
/// directions, so the glazed fraction of the storey bands equals wwr.
struct GlazingSpec {
    double wwr = 0.0;
    int rows_per_storey = 1;
    double bay_width = 3.0;
    double storey_height = 3.0;

    void validate() const;
};

/// Window rectangle in wall-local coordinates (u along the wall from `a`,
/// v upwards from the wall base).
struct WindowRect {
    double u0, u1, v0, v1;
};

std::vector<WindowRect> window_rects(const Wall& wall, const GlazingSpec& glazing);

/// O(1) test whether wall-local (u, v) falls on glazing.
bool is_glazed(const Wall& wall, const GlazingSpec& glazing, double u, double v);

struct SensorPoint {
    std::string id;
    Vec3 position;
    Vec3 normal;
    std::string wall_id;
    int building = -1;
};

/// Regular centered grid of points strictly inside every wall. Along an extent
/// L the grid holds ceil(L / spacing) - 1 points spaced `spacing` apart and
/// centered on the wall; each point is pushed `offset` meters along the
/// outward normal. Points that would sit inside a neighbouring building are
/// dropped.
std::vector<SensorPoint> sample_facade_points(const LOD1Scene& scene, double spacing, double offset);

/// Reads a GeoJSON FeatureCollection of Polygon features with a numeric
/// `height` property (meters, planar coordinates).
LOD1Scene load_geojson(const std::filesystem::path& path);
LOD1Scene parse_geojson(const std::string& text);
std::string to_geojson(const LOD1Scene& scene);

struct CityParams {
    int blocks_x = 3;
    int blocks_y = 3;
    int lots_per_side = 2;         ///< lots per block side; one building per lot
    double extent = 120.0;         ///< side of the square city area, meters
    double street_width = 10.0;
    double footprint_min = 8.0;
    double footprint_max = 16.0;
    double height_min = 6.0;
    double height_max = 36.0;

    void validate() const;
};

/// Axis-aligned rectangular buildings, one per lot, on a regular block grid.
/// Deterministic for fixed (params, seed). Throws ConfigError when the lots
/// cannot host footprint_min.
LOD1Scene generate_synthetic_city(const CityParams& params, std::uint64_t seed);

}  // namespace urbansolar
