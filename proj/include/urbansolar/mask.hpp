#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "urbansolar/raycast.hpp"

namespace urbansolar {

/// Orthonormal viewing frame of a hemisphere: `normal` is the view axis,
/// `up` points to the top of the image and `right = normal x up`.
struct ViewFrame {
    Vec3 normal;
    Vec3 up;
    Vec3 right;

    static ViewFrame from_normal(Vec3 normal);
};

/// Equidistant azimuthal projection of the hemisphere around a normal: the
/// image radius grows linearly with the angle from the normal and reaches the
/// inscribed circle at 90 degrees.
struct FisheyeMask {
    int resolution = 0;
    ViewFrame frame;
    std::vector<Category> pixels;  ///< row-major, row 0 at the top

    Category at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * resolution + col]; }

    static bool in_circle(int resolution, int row, int col);
    /// Angle from the normal (radians) at a pixel center.
    static double polar_angle(int resolution, int row, int col);
    Vec3 direction(int row, int col) const;
    /// Nearest in-circle pixel of a direction; empty for directions behind the plane.
    std::optional<std::pair<int, int>> pixel_for(Vec3 direction) const;
};

FisheyeMask render_fisheye(const RayCaster& caster, const GlazingSpec& glazing, const SensorPoint& point,
                           int resolution);

/// One mask per glazing spec, sharing a single geometric ray cast per pixel.
std::vector<FisheyeMask> render_fisheye_levels(const RayCaster& caster, std::span<const GlazingSpec> glazings,
                                               const SensorPoint& point, int resolution);

/// Sky pixels over in-circle pixels.
double sky_ratio(const FisheyeMask& mask);

/// Unfolded semi-cube map: a 64x64 front face centered in a 128x128 canvas
/// with four 64x32 half faces (up, down, left, right) attached in a cross.
/// Canvas corners are Ground.
struct CubeMask {
    static constexpr int kSize = 128;
    static constexpr int kFace = 64;
    static constexpr int kHalf = 32;

    std::vector<Category> pixels = std::vector<Category>(kSize * kSize, Category::Ground);

    Category at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * kSize + col]; }
    Category& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * kSize + col]; }
    friend bool operator==(const CubeMask&, const CubeMask&) = default;
};

/// Viewing direction (not normalized) of a canvas pixel; empty in the unused corners.
std::optional<Vec3> cube_direction(const ViewFrame& frame, int row, int col);

CubeMask reproject_cubemap(const FisheyeMask& mask);

/// Ordinal grayscale palette. Order encodes openness.
std::uint8_t palette_level(Category c);
/// Exact inverse of palette_level; throws DataError on any other value.
Category category_from_level(std::uint8_t level);
/// Snap a continuous gray value to the nearest palette level.
Category nearest_category(float gray);

enum class Encoding { OneHot, Ordinal };

/// Channel-major dense array. One-hot: 4 channels in category order
/// (sky, ground, opaque, glazing); ordinal: 1 channel holding palette levels.
struct EncodedMask {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float at(int c, int row, int col) const {
        return data[(static_cast<std::size_t>(c) * height + row) * width + col];
    }
};

EncodedMask encode(const CubeMask& mask, Encoding encoding);
/// Inverse of encode for either layout; throws DataError on values that are
/// not a valid one-hot vector or palette level.
CubeMask decode(const EncodedMask& encoded);
EncodedMask convert(const EncodedMask& encoded, Encoding target);

std::array<std::size_t, kCategoryCount> category_counts(const CubeMask& mask);

}  // namespace urbansolar
