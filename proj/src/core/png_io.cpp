#include "urbansolar/png_io.hpp"

#include <fstream>

#include <openssl/evp.h>
#include <png.h>

#include "urbansolar/error.hpp"

namespace urbansolar {

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
        throw ShapeError("image buffer does not match its dimensions");
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw DataError(std::string("PNG encode: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw DataError(std::string("PNG encode: ") + png.message);
    }
    out.resize(size);
    return out;
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw DataError(std::string("PNG decode: ") + png.message);
    }
    if ((png.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR)) != 0) {
        png_image_free(&png);
        throw DataError("mask PNG must be 8-bit grayscale");
    }
    png.format = PNG_FORMAT_GRAY;
    GrayImage image;
    image.width = static_cast<int>(png.width);
    image.height = static_cast<int>(png.height);
    image.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
        throw DataError(std::string("PNG decode: ") + png.message);
    }
    return image;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayImage to_image(const CubeMask& mask) {
    GrayImage img{CubeMask::kSize, CubeMask::kSize, {}};
    img.pixels.reserve(mask.pixels.size());
    for (Category c : mask.pixels) img.pixels.push_back(palette_level(c));
    return img;
}

CubeMask cube_from_image(const GrayImage& image) {
    if (image.width != CubeMask::kSize || image.height != CubeMask::kSize) {
        throw DataError("cube mask PNG must be 128x128");
    }
    CubeMask mask;
    for (std::size_t i = 0; i < image.pixels.size(); ++i) mask.pixels[i] = category_from_level(image.pixels[i]);
    return mask;
}

GrayImage to_image(const FisheyeMask& mask) {
    GrayImage img{mask.resolution, mask.resolution, {}};
    img.pixels.reserve(mask.pixels.size());
    for (Category c : mask.pixels) img.pixels.push_back(c == Category::Invalid ? 0 : palette_level(c));
    return img;
}

FisheyeMask fisheye_from_image(const GrayImage& image, Vec3 normal) {
    if (image.width != image.height) throw DataError("fisheye PNG must be square");
    FisheyeMask mask;
    mask.resolution = image.width;
    mask.frame = ViewFrame::from_normal(normal);
    mask.pixels.resize(image.pixels.size());
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * image.width + c;
            mask.pixels[i] = FisheyeMask::in_circle(mask.resolution, r, c) ? category_from_level(image.pixels[i])
                                                                           : Category::Invalid;
        }
    }
    return mask;
}

void save_png(const std::filesystem::path& path, const CubeMask& mask) { write_bytes(path, encode_png(to_image(mask))); }

void save_png(const std::filesystem::path& path, const FisheyeMask& mask) {
    write_bytes(path, encode_png(to_image(mask)));
}

CubeMask load_cube_png(const std::filesystem::path& path) { return cube_from_image(decode_png(read_bytes(path))); }

FisheyeMask load_fisheye_png(const std::filesystem::path& path, Vec3 normal) {
    return fisheye_from_image(decode_png(read_bytes(path)), normal);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw DataError("base64 length must be a multiple of 4");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw DataError("malformed base64");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

}  // namespace urbansolar
