#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "urbansolar/mask.hpp"
#include "urbansolar/weather.hpp"

namespace urbansolar {

inline constexpr int kWeeks = 52;
inline constexpr int kFirstSunlitHour = 4;
inline constexpr int kStepsPerDay = 17;  // hours 04..20
inline constexpr int kPatchLength = kStepsPerDay * 7;
inline constexpr int kAttributeDim = 15;
inline constexpr int kCodeDim = 32;
inline constexpr int kConditionDim = kAttributeDim + kCodeDim;
inline constexpr int kWeatherStatDim = 8;

/// Slots of the 15-dim attribute vector.
enum AttributeSlot : int {
    kLongitude = 0,
    kLatitude,
    kHeight,
    kNormalX,
    kNormalY,
    kMonth,
    kDeclination,
    kDniPeak,
    kDniMean,
    kDniMaxDayMean,
    kDniMinDayMean,
    kDhiPeak,
    kDhiMean,
    kDhiMaxDayMean,
    kDhiMinDayMean,
};

using Patch = std::array<float, kPatchLength>;
using Attributes = std::array<float, kAttributeDim>;
using ImageCode = std::array<float, kCodeDim>;

/// Days 1..364 cut into 52 consecutive weeks, hours 04..20 of each day.
std::vector<std::vector<double>> weekly_patches(std::span<const double> annual);

/// Inverse of weekly_patches: zeros for night hours and day 365.
std::vector<double> assemble_annual(std::span<const std::vector<double>> patches);

/// Per DNI then DHI over the week's 168 hours: peak hour, mean hour, mean
/// hour of the day with the highest daily total, mean hour of the day with
/// the lowest daily total (ties go to the earlier day).
std::array<double, kWeatherStatDim> weather_stats(const WeatherSeries& weather, int week);

struct RecordKey {
    int point = 0;      ///< index into the dataset's point list
    int wwr_level = 0;  ///< index into the WWR level list
    int climate = 0;    ///< index into the climate list
    int week = 0;

    friend auto operator<=>(const RecordKey&, const RecordKey&) = default;
};

struct WeeklySample {
    RecordKey key;
    Attributes attributes{};
    ImageCode image_code{};
    Patch series{};
    float series_min = 0.0f;
    float series_max = 0.0f;
};

/// (point, wwr level) pair.
using PairKey = std::pair<int, int>;

/// One annual oracle series per (point, wwr level) for a single climate.
using SeriesTable = std::map<PairKey, std::vector<double>>;

/// 52 records per (point, wwr level). Every pair must have both a mask and a
/// series; a missing pairing raises ConsistencyError naming the point.
std::vector<WeeklySample> build_records(std::span<const SensorPoint> points, int wwr_levels,
                                        const std::map<PairKey, CubeMask>& masks, const SeriesTable& series,
                                        const WeatherSeries& weather, int climate);

Attributes point_attributes(const SensorPoint& point, const WeatherSeries& weather, int week);

struct NormalizationStats {
    std::array<double, kAttributeDim> mean{};
    std::array<double, kAttributeDim> stddev{};
    double series_scale = 1.0;  ///< largest training series_max, maps min/max to [0, 1]
    std::string provenance;     ///< split the statistics were fitted on
    std::size_t fitted_on = 0;

    nlohmann::json to_json() const;
    static NormalizationStats from_json(const nlohmann::json& j);
};

inline constexpr double kStdFloor = 1e-8;
inline constexpr double kSpanFloor = 1e-6;

NormalizationStats fit_normalization(std::span<const WeeklySample> records, const std::string& provenance);

/// Model-space view of a record.
struct NormalizedSample {
    RecordKey key;
    Attributes attributes{};   ///< z-scored
    ImageCode image_code{};
    Patch series{};            ///< per-record min-max scaled to [0, 1]
    float min_norm = 0.0f;     ///< series_min / series_scale
    float max_norm = 0.0f;
};

/// Throws UsageError unless `stats` were fitted on the training split.
NormalizedSample normalize(const WeeklySample& record, const NormalizationStats& stats);
std::vector<NormalizedSample> normalize(std::span<const WeeklySample> records, const NormalizationStats& stats);

Attributes normalize_attributes(const Attributes& raw, const NormalizationStats& stats);
Attributes denormalize_attributes(const Attributes& z, const NormalizationStats& stats);
/// Maps a [0, 1] patch back to W/m2 with the record's own (min, max).
Patch denormalize_series(const Patch& unit, float series_min, float series_max);

struct Split {
    std::vector<int> train_points;
    std::vector<int> test_points;
    std::vector<WeeklySample> train;
    std::vector<WeeklySample> test;
};

/// 4:1 split at sensor-point granularity; throws InsufficientDataError with
/// fewer than 5 points.
Split split_by_point(std::span<const WeeklySample> records, std::uint64_t seed);

/// Same ratio applied inside every stratum (point -> class), so a class with
/// at least two points lands in both halves. Points without a stratum raise
/// InputError.
Split split_by_point(std::span<const WeeklySample> records, std::uint64_t seed, const std::map<int, int>& strata);

struct PointInfo {
    SensorPoint point;
    double sky_ratio = 0.0;  ///< zero-WWR fisheye
};

/// Everything the training stages consume, persisted as a directory.
struct Dataset {
    static constexpr int kSchemaVersion = 1;

    std::vector<PointInfo> points;
    std::vector<double> wwr_levels;
    std::vector<WeatherSeries> climates;
    std::map<PairKey, CubeMask> masks;
    std::vector<WeeklySample> records;
    std::vector<int> train_points;
    std::vector<int> test_points;
    NormalizationStats stats;
    std::map<std::string, std::uint64_t> seeds;

    std::vector<const WeeklySample*> records_for_points(std::span<const int> points) const;
    const WeeklySample& record(const RecordKey& key) const;
};

/// Layout of `dir`:
///   manifest.json          schema version, counts, shapes, stats, palette, seeds, SHA-256 per file
///   keys.f32               N x 4   (point, wwr level, climate, week)
///   attributes.f32         N x 15
///   codes.f32              N x 32
///   series.f32             N x 119
///   minmax.f32             N x 2
///   weather/{climate}.f64  2 x 8760 (DNI, DHI) as float64
///   masks/{point_id}_{wwr_level}.png
/// Other arrays are flat little-endian float32, row-major.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Verifies checksums and recounts arrays; throws CorruptionError on mismatch.
Dataset load_dataset(const std::filesystem::path& dir);

/// One line per record: key, attributes, min/max, series.
void export_csv(const Dataset& dataset, const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> to_le_bytes(std::span<const float> values);
std::vector<float> from_le_bytes(std::span<const std::uint8_t> bytes);

}  // namespace urbansolar
