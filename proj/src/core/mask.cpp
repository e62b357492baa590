#include "urbansolar/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "urbansolar/error.hpp"

namespace urbansolar {

namespace {
constexpr double kHalfPi = 0.5 * std::numbers::pi;

void image_coords(int resolution, int row, int col, double& x, double& y) {
    x = 2.0 * (col + 0.5) / resolution - 1.0;
    y = 1.0 - 2.0 * (row + 0.5) / resolution;
}
}  // namespace

ViewFrame ViewFrame::from_normal(Vec3 normal) {
    ViewFrame f;
    f.normal = normalized(normal);
    Vec3 world_up{0.0, 0.0, 1.0};
    if (std::abs(dot(world_up, f.normal)) > 0.999) world_up = {0.0, 1.0, 0.0};
    f.up = normalized(world_up - dot(world_up, f.normal) * f.normal);
    f.right = cross(f.normal, f.up);
    return f;
}

bool FisheyeMask::in_circle(int resolution, int row, int col) {
    double x = 0.0;
    double y = 0.0;
    image_coords(resolution, row, col, x, y);
    return x * x + y * y <= 1.0;
}

double FisheyeMask::polar_angle(int resolution, int row, int col) {
    double x = 0.0;
    double y = 0.0;
    image_coords(resolution, row, col, x, y);
    return std::sqrt(x * x + y * y) * kHalfPi;
}

Vec3 FisheyeMask::direction(int row, int col) const {
    double x = 0.0;
    double y = 0.0;
    image_coords(resolution, row, col, x, y);
    const double r = std::sqrt(x * x + y * y);
    const double theta = r * kHalfPi;
    const double phi = std::atan2(y, x);
    const double s = std::sin(theta);
    return std::cos(theta) * frame.normal + (s * std::cos(phi)) * frame.right + (s * std::sin(phi)) * frame.up;
}

std::optional<std::pair<int, int>> FisheyeMask::pixel_for(Vec3 d) const {
    d = normalized(d);
    const double c = std::clamp(dot(d, frame.normal), -1.0, 1.0);
    const double theta = std::acos(c);
    if (theta > kHalfPi + 1e-9) return std::nullopt;
    const double phi = std::atan2(dot(d, frame.up), dot(d, frame.right));
    double r = std::min(theta / kHalfPi, 1.0);
    for (int attempt = 0; attempt < 4; ++attempt) {
        const double x = r * std::cos(phi);
        const double y = r * std::sin(phi);
        const int col = std::clamp(static_cast<int>(std::floor((x + 1.0) * 0.5 * resolution)), 0, resolution - 1);
        const int row = std::clamp(static_cast<int>(std::floor((1.0 - y) * 0.5 * resolution)), 0, resolution - 1);
        if (in_circle(resolution, row, col)) return std::make_pair(row, col);
        r -= 0.75 / resolution;  // rim pixel whose center lies outside the circle
    }
    return std::nullopt;
}

std::vector<FisheyeMask> render_fisheye_levels(const RayCaster& caster, std::span<const GlazingSpec> glazings,
                                               const SensorPoint& point, int resolution) {
    if (resolution < 32) throw InputError("fisheye resolution must be >= 32");
    FisheyeMask proto;
    proto.resolution = resolution;
    proto.frame = ViewFrame::from_normal(point.normal);
    proto.pixels.assign(static_cast<std::size_t>(resolution) * resolution, Category::Invalid);
    std::vector<FisheyeMask> masks(glazings.size(), proto);
    for (int row = 0; row < resolution; ++row) {
        for (int col = 0; col < resolution; ++col) {
            if (!FisheyeMask::in_circle(resolution, row, col)) continue;
            const Hit hit = caster.cast(point.position, proto.direction(row, col));
            const std::size_t idx = static_cast<std::size_t>(row) * resolution + col;
            for (std::size_t g = 0; g < glazings.size(); ++g) {
                masks[g].pixels[idx] = caster.categorize(hit, glazings[g]);
            }
        }
    }
    return masks;
}

FisheyeMask render_fisheye(const RayCaster& caster, const GlazingSpec& glazing, const SensorPoint& point,
                           int resolution) {
    return std::move(render_fisheye_levels(caster, std::span<const GlazingSpec>(&glazing, 1), point, resolution)[0]);
}

double sky_ratio(const FisheyeMask& mask) {
    std::size_t sky = 0;
    std::size_t total = 0;
    for (Category c : mask.pixels) {
        if (c == Category::Invalid) continue;
        ++total;
        if (c == Category::Sky) ++sky;
    }
    return total == 0 ? 0.0 : static_cast<double>(sky) / static_cast<double>(total);
}

std::optional<Vec3> cube_direction(const ViewFrame& f, int row, int col) {
    constexpr int F = CubeMask::kFace;
    constexpr int H = CubeMask::kHalf;
    const bool mid_row = row >= H && row < H + F;
    const bool mid_col = col >= H && col < H + F;
    // offsets across the front face, in (-1, 1)
    const double a = (col - H + 0.5) / H - 1.0;
    const double b = 1.0 - (row - H + 0.5) / H;
    if (mid_row && mid_col) return f.normal + a * f.right + b * f.up;
    if (mid_col && row < H) {
        const double c = (row + 0.5) / H;
        return c * f.normal + a * f.right + f.up;
    }
    if (mid_col && row >= H + F) {
        const double c = 1.0 - (row - H - F + 0.5) / H;
        return c * f.normal + a * f.right - f.up;
    }
    if (mid_row && col < H) {
        const double c = (col + 0.5) / H;
        return c * f.normal - f.right + b * f.up;
    }
    if (mid_row && col >= H + F) {
        const double c = 1.0 - (col - H - F + 0.5) / H;
        return c * f.normal + f.right + b * f.up;
    }
    return std::nullopt;
}

CubeMask reproject_cubemap(const FisheyeMask& mask) {
    CubeMask cube;
    for (int row = 0; row < CubeMask::kSize; ++row) {
        for (int col = 0; col < CubeMask::kSize; ++col) {
            const auto dir = cube_direction(mask.frame, row, col);
            if (!dir) continue;
            const auto px = mask.pixel_for(*dir);
            if (!px) continue;
            cube.at(row, col) = mask.at(px->first, px->second);
        }
    }
    return cube;
}

std::uint8_t palette_level(Category c) {
    switch (c) {
        case Category::Sky: return 255;
        case Category::Glazing: return 170;
        case Category::Opaque: return 85;
        case Category::Ground: return 0;
        case Category::Invalid: break;
    }
    throw DataError("invalid category has no palette level");
}

Category category_from_level(std::uint8_t level) {
    switch (level) {
        case 255: return Category::Sky;
        case 170: return Category::Glazing;
        case 85: return Category::Opaque;
        case 0: return Category::Ground;
        default: throw DataError("gray level " + std::to_string(level) + " is not in the mask palette");
    }
}

Category nearest_category(float gray) {
    static constexpr std::array<Category, 4> kByLevel{Category::Ground, Category::Opaque, Category::Glazing,
                                                      Category::Sky};
    const int idx = static_cast<int>(std::lround(std::clamp(gray, 0.0f, 255.0f) / 85.0f));
    return kByLevel[static_cast<std::size_t>(std::clamp(idx, 0, 3))];
}

EncodedMask encode(const CubeMask& mask, Encoding encoding) {
    constexpr int S = CubeMask::kSize;
    EncodedMask out;
    out.height = S;
    out.width = S;
    if (encoding == Encoding::Ordinal) {
        out.channels = 1;
        out.data.resize(static_cast<std::size_t>(S) * S);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = palette_level(mask.pixels[i]);
        return out;
    }
    out.channels = kCategoryCount;
    out.data.assign(static_cast<std::size_t>(kCategoryCount) * S * S, 0.0f);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        const auto c = static_cast<std::size_t>(mask.pixels[i]);
        if (c >= kCategoryCount) throw DataError("invalid category in cube mask");
        out.data[c * S * S + i] = 1.0f;
    }
    return out;
}

CubeMask decode(const EncodedMask& e) {
    constexpr int S = CubeMask::kSize;
    if (e.height != S || e.width != S) throw ShapeError("encoded mask must be 128x128");
    CubeMask mask;
    const std::size_t plane = static_cast<std::size_t>(S) * S;
    if (e.channels == 1) {
        if (e.data.size() != plane) throw ShapeError("ordinal mask data size mismatch");
        for (std::size_t i = 0; i < plane; ++i) {
            const float v = e.data[i];
            if (v < 0.0f || v > 255.0f || v != std::floor(v)) {
                throw DataError("value " + std::to_string(v) + " is not a palette level");
            }
            mask.pixels[i] = category_from_level(static_cast<std::uint8_t>(v));
        }
        return mask;
    }
    if (e.channels != kCategoryCount || e.data.size() != plane * kCategoryCount) {
        throw ShapeError("one-hot mask must have 4 channels");
    }
    for (std::size_t i = 0; i < plane; ++i) {
        int hot = -1;
        for (int c = 0; c < kCategoryCount; ++c) {
            const float v = e.data[static_cast<std::size_t>(c) * plane + i];
            if (v == 1.0f) {
                if (hot >= 0) throw DataError("pixel with several hot channels");
                hot = c;
            } else if (v != 0.0f) {
                throw DataError("one-hot value must be 0 or 1");
            }
        }
        if (hot < 0) throw DataError("pixel with no hot channel");
        mask.pixels[i] = static_cast<Category>(hot);
    }
    return mask;
}

EncodedMask convert(const EncodedMask& encoded, Encoding target) { return encode(decode(encoded), target); }

std::array<std::size_t, kCategoryCount> category_counts(const CubeMask& mask) {
    std::array<std::size_t, kCategoryCount> counts{};
    for (Category c : mask.pixels) ++counts[static_cast<std::size_t>(c)];
    return counts;
}

}  // namespace urbansolar
