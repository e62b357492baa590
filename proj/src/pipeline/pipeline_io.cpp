#include "pipeline_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "urbansolar/dataset.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/png_io.hpp"

namespace urbansolar {

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& path, const std::string& producer) {
    if (!std::filesystem::exists(path)) throw UsageError(path.string() + " is missing; run " + producer + " first");
    std::ifstream in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(path.string() + " is not valid JSON: " + e.what());
    }
}

void write_f64(const std::filesystem::path& path, const std::vector<double>& values) {
    std::vector<std::uint8_t> bytes(values.size() * sizeof(double));
    std::memcpy(bytes.data(), values.data(), bytes.size());
    write_bytes(path, bytes);
}

std::vector<double> read_f64(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw UsageError(path.string() + " is missing; run simulate first");
    const auto bytes = read_bytes(path);
    if (bytes.size() % sizeof(double) != 0) throw CorruptionError(path.string() + " is truncated");
    std::vector<double> out(bytes.size() / sizeof(double));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

std::string sha256_text(const std::string& text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

}  // namespace urbansolar
