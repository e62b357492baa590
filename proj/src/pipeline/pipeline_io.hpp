#pragma once

// File helpers shared by the pipeline stages.

#include <chrono>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace urbansolar {

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
/// UsageError naming `producer` when the file is missing.
nlohmann::json read_json(const std::filesystem::path& path, const std::string& producer);

void write_f64(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f64(const std::filesystem::path& path);

std::string sha256_text(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace urbansolar
