#include "urbansolar/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "urbansolar/error.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

using nlohmann::json;

void LOD1Scene::validate() {
    if (!std::isfinite(ground_elevation)) throw GeometryError("ground elevation is not finite");
    for (std::size_t i = 0; i < buildings.size(); ++i) {
        auto& b = buildings[i];
        const std::string who = "building " + std::to_string(i);
        if (!std::isfinite(b.height) || b.height <= 0.0) {
            throw GeometryError(who + ": height must be finite and > 0");
        }
        for (const Vec2& v : b.footprint) {
            if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
                throw GeometryError(who + ": non-finite coordinate");
            }
        }
        if (!is_simple(b.footprint)) throw GeometryError(who + ": footprint is not a simple polygon");
        if (signed_area(b.footprint) < 0.0) std::reverse(b.footprint.begin(), b.footprint.end());
    }
}

std::size_t LOD1Scene::wall_count() const {
    std::size_t n = 0;
    for (const auto& b : buildings) n += b.footprint.size();
    return n;
}

double LOD1Scene::max_height() const {
    double h = 0.0;
    for (const auto& b : buildings) h = std::max(h, b.height);
    return ground_elevation + h;
}

std::string Wall::id() const {
    return "b" + std::to_string(building) + "w" + std::to_string(edge);
}

std::vector<Wall> extract_walls(const LOD1Scene& scene) {
    std::vector<Wall> walls;
    walls.reserve(scene.wall_count());
    for (std::size_t bi = 0; bi < scene.buildings.size(); ++bi) {
        const auto& fp = scene.buildings[bi].footprint;
        for (std::size_t e = 0; e < fp.size(); ++e) {
            Wall w;
            w.building = static_cast<int>(bi);
            w.edge = static_cast<int>(e);
            w.a = fp[e];
            w.b = fp[(e + 1) % fp.size()];
            w.base = scene.ground_elevation;
            w.top = scene.ground_elevation + scene.buildings[bi].height;
            const Vec2 d = w.b - w.a;
            w.length = norm(d);
            // right-hand side of a counter-clockwise edge is the exterior
            w.normal = Vec3{d.y / w.length, -d.x / w.length, 0.0};
            walls.push_back(w);
        }
    }
    return walls;
}

void GlazingSpec::validate() const {
    if (!(wwr >= 0.0 && wwr <= 1.0)) throw ConfigError("wwr must lie in [0, 1]");
    if (rows_per_storey < 1) throw ConfigError("rows_per_storey must be >= 1");
    if (!(bay_width > 0.0)) throw ConfigError("bay_width must be > 0");
    if (!(storey_height > 0.0)) throw ConfigError("storey_height must be > 0");
}

namespace {

struct WindowGrid {
    int columns = 0;
    int rows = 0;  // total window rows over all storeys
    double cell_w = 0.0;
    double cell_h = 0.0;
    double scale = 0.0;
};

WindowGrid window_grid(const Wall& wall, const GlazingSpec& g) {
    WindowGrid grid;
    if (g.wwr <= 0.0) return grid;
    const int storeys = static_cast<int>(std::floor(wall.height() / g.storey_height + 1e-9));
    grid.columns = std::max(1, static_cast<int>(std::floor(wall.length / g.bay_width + 1e-9)));
    grid.rows = storeys * g.rows_per_storey;
    grid.cell_w = wall.length / grid.columns;
    grid.cell_h = g.storey_height / g.rows_per_storey;
    // keep windows strictly inside their cell even for wwr = 1
    grid.scale = std::min(std::sqrt(g.wwr), 1.0 - 1e-6);
    return grid;
}

}  // namespace

std::vector<WindowRect> window_rects(const Wall& wall, const GlazingSpec& glazing) {
    const WindowGrid grid = window_grid(wall, glazing);
    std::vector<WindowRect> rects;
    const double hw = 0.5 * grid.cell_w * grid.scale;
    const double hh = 0.5 * grid.cell_h * grid.scale;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.columns; ++c) {
            const double cu = (c + 0.5) * grid.cell_w;
            const double cv = (r + 0.5) * grid.cell_h;
            rects.push_back({cu - hw, cu + hw, cv - hh, cv + hh});
        }
    }
    return rects;
}

bool is_glazed(const Wall& wall, const GlazingSpec& glazing, double u, double v) {
    const WindowGrid grid = window_grid(wall, glazing);
    if (grid.rows == 0 || u < 0.0 || v < 0.0) return false;
    const int c = static_cast<int>(u / grid.cell_w);
    const int r = static_cast<int>(v / grid.cell_h);
    if (c >= grid.columns || r >= grid.rows) return false;
    const double du = std::abs(u - (c + 0.5) * grid.cell_w);
    const double dv = std::abs(v - (r + 0.5) * grid.cell_h);
    return du <= 0.5 * grid.cell_w * grid.scale && dv <= 0.5 * grid.cell_h * grid.scale;
}

namespace {

std::vector<double> centered_grid(double extent, double spacing) {
    const int n = static_cast<int>(std::ceil(extent / spacing - 1e-9)) - 1;
    std::vector<double> out;
    if (n <= 0) return out;
    const double start = 0.5 * (extent - (n - 1) * spacing);
    for (int i = 0; i < n; ++i) out.push_back(start + i * spacing);
    return out;
}

}  // namespace

std::vector<SensorPoint> sample_facade_points(const LOD1Scene& scene, double spacing, double offset) {
    if (!(spacing > 0.0)) throw InputError("spacing must be > 0");
    if (!(offset > 0.0)) throw InputError("offset must be > 0");
    std::vector<SensorPoint> points;
    for (const Wall& w : extract_walls(scene)) {
        const Vec2 dir = (1.0 / w.length) * (w.b - w.a);
        for (double v : centered_grid(w.height(), spacing)) {
            for (double u : centered_grid(w.length, spacing)) {
                const Vec2 p2 = w.a + u * dir + offset * Vec2{w.normal.x, w.normal.y};
                const double z = w.base + v;
                bool buried = false;
                for (std::size_t bi = 0; bi < scene.buildings.size() && !buried; ++bi) {
                    if (static_cast<int>(bi) == w.building) continue;
                    const auto& other = scene.buildings[bi];
                    buried = z < scene.ground_elevation + other.height && contains(other.footprint, p2);
                }
                if (buried) continue;
                SensorPoint sp;
                sp.id = "p" + std::to_string(points.size());
                sp.position = {p2.x, p2.y, z};
                sp.normal = w.normal;
                sp.wall_id = w.id();
                sp.building = w.building;
                points.push_back(std::move(sp));
            }
        }
    }
    if (points.empty()) {
        spdlog::warn("sample_facade_points: spacing {} m exceeds every wall, no points sampled", spacing);
    }
    return points;
}

LOD1Scene parse_geojson(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("invalid GeoJSON: ") + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array()) {
        throw DataError("GeoJSON root must be a FeatureCollection");
    }
    LOD1Scene scene;
    if (doc.contains("crs_note") && doc["crs_note"].is_string()) scene.crs_note = doc["crs_note"];
    if (doc.contains("ground_elevation") && doc["ground_elevation"].is_number()) {
        scene.ground_elevation = doc["ground_elevation"];
    }
    const auto& features = doc["features"];
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& f = features[i];
        if (!f.contains("geometry") || !f["geometry"].is_object() ||
            f["geometry"].value("type", "") != "Polygon") {
            throw FeatureError(i, "geometry must be a Polygon");
        }
        const json* height = nullptr;
        if (f.contains("properties") && f["properties"].is_object() && f["properties"].contains("height")) {
            height = &f["properties"]["height"];
        }
        if (height == nullptr || !height->is_number()) throw FeatureError(i, "missing numeric height");
        const double h = height->get<double>();
        if (!(h > 0.0) || !std::isfinite(h)) throw FeatureError(i, "height must be > 0");
        const auto& rings = f["geometry"]["coordinates"];
        if (!rings.is_array() || rings.empty() || !rings[0].is_array()) {
            throw FeatureError(i, "polygon has no outer ring");
        }
        Building b;
        b.height = h;
        for (const auto& c : rings[0]) {
            if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
                throw FeatureError(i, "malformed coordinate");
            }
            b.footprint.push_back({c[0].get<double>(), c[1].get<double>()});
        }
        if (b.footprint.size() >= 2 && b.footprint.front() == b.footprint.back()) b.footprint.pop_back();
        if (b.footprint.size() < 3) throw FeatureError(i, "polygon needs at least 3 vertices");
        if (!is_simple(b.footprint)) {
            throw GeometryError("feature " + std::to_string(i) + ": self-intersecting footprint");
        }
        scene.buildings.push_back(std::move(b));
    }
    scene.validate();
    return scene;
}

LOD1Scene load_geojson(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_geojson(ss.str());
}

std::string to_geojson(const LOD1Scene& scene) {
    json features = json::array();
    for (const auto& b : scene.buildings) {
        json ring = json::array();
        for (const Vec2& v : b.footprint) ring.push_back({v.x, v.y});
        ring.push_back({b.footprint.front().x, b.footprint.front().y});
        features.push_back({{"type", "Feature"},
                            {"properties", {{"height", b.height}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}}});
    }
    json doc = {{"type", "FeatureCollection"},
                {"crs_note", scene.crs_note},
                {"ground_elevation", scene.ground_elevation},
                {"features", features}};
    return doc.dump(1);
}

void CityParams::validate() const {
    if (blocks_x < 1 || blocks_y < 1 || lots_per_side < 1) throw ConfigError("block and lot counts must be >= 1");
    if (!(extent > 0.0) || !(street_width > 0.0)) throw ConfigError("extent and street_width must be > 0");
    if (!(footprint_min > 0.0) || footprint_max < footprint_min) throw ConfigError("invalid footprint size range");
    if (!(height_min > 0.0) || height_max < height_min) throw ConfigError("invalid height range");
}

LOD1Scene generate_synthetic_city(const CityParams& p, std::uint64_t seed) {
    p.validate();
    constexpr double kLotMargin = 1.0;
    const int nb = std::max(p.blocks_x, p.blocks_y);
    const double block = (p.extent - (nb - 1) * p.street_width) / nb;
    const double lot = block / p.lots_per_side;
    if (block <= 0.0 || lot - 2.0 * kLotMargin < p.footprint_min) {
        throw ConfigError("infeasible packing: street width " + std::to_string(p.street_width) +
                          " m leaves lots of " + std::to_string(lot) + " m, too small for footprint_min " +
                          std::to_string(p.footprint_min) + " m");
    }
    const double fmax = std::min(p.footprint_max, lot - 2.0 * kLotMargin);
    Rng rng(seed, "city");
    LOD1Scene scene;
    scene.crs_note = "synthetic planar meters";
    for (int bx = 0; bx < p.blocks_x; ++bx) {
        for (int by = 0; by < p.blocks_y; ++by) {
            const double bx0 = bx * (block + p.street_width);
            const double by0 = by * (block + p.street_width);
            for (int lx = 0; lx < p.lots_per_side; ++lx) {
                for (int ly = 0; ly < p.lots_per_side; ++ly) {
                    const double w = rng.uniform(p.footprint_min, fmax);
                    const double d = rng.uniform(p.footprint_min, fmax);
                    const double x0 = bx0 + lx * lot + kLotMargin + rng.uniform(0.0, lot - 2.0 * kLotMargin - w);
                    const double y0 = by0 + ly * lot + kLotMargin + rng.uniform(0.0, lot - 2.0 * kLotMargin - d);
                    Building b;
                    b.height = rng.uniform(p.height_min, p.height_max);
                    b.footprint = {{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + d}, {x0, y0 + d}};
                    scene.buildings.push_back(std::move(b));
                }
            }
        }
    }
    scene.validate();
    return scene;
}

}  // namespace urbansolar
