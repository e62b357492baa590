#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "urbansolar/mask.hpp"

namespace urbansolar {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

/// 8-bit grayscale PNG in memory.
std::vector<std::uint8_t> encode_png(const GrayImage& image);
GrayImage decode_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

GrayImage to_image(const CubeMask& mask);
/// Throws DataError if any pixel is not a palette level or the size is not 128x128.
CubeMask cube_from_image(const GrayImage& image);

/// Pixels outside the circle are written with the Ground level and restored
/// to Invalid on load from the geometry.
GrayImage to_image(const FisheyeMask& mask);
FisheyeMask fisheye_from_image(const GrayImage& image, Vec3 normal);

void save_png(const std::filesystem::path& path, const CubeMask& mask);
void save_png(const std::filesystem::path& path, const FisheyeMask& mask);
CubeMask load_cube_png(const std::filesystem::path& path);
FisheyeMask load_fisheye_png(const std::filesystem::path& path, Vec3 normal);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws DataError on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace urbansolar
