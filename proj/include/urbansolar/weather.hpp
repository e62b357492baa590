#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace urbansolar {

inline constexpr int kHoursPerYear = 8760;
inline constexpr int kDaysPerYear = 365;

/// Calendar month (1..12) of a day of a non-leap year (1..365).
int month_of_day(int day_of_year);
/// Day of year (1..365) of the first day of `month`.
int first_day_of_month(int month);

/// Hourly weather of a non-leap year; index 0 is January 1st 00:00-01:00.
struct WeatherSeries {
    std::string name;
    double latitude = 0.0;   ///< degrees north
    double longitude = 0.0;  ///< degrees east
    std::vector<double> dni; ///< W/m2
    std::vector<double> dhi; ///< W/m2

    /// Throws LengthError / DataError when an invariant is broken.
    void validate() const;
    double ghi(int hour_of_year) const;
};

/// EnergyPlus weather text format. Extracts the LOCATION latitude/longitude
/// and the direct normal (field 15) and diffuse horizontal (field 16)
/// radiation columns. February 29 rows are skipped; the remaining row count
/// must be exactly 8760.
WeatherSeries read_epw(const std::filesystem::path& path);
WeatherSeries parse_epw(const std::string& text, const std::string& name = "epw");

/// Writes a minimal but well-formed EPW file (other columns hold placeholders).
void write_epw(const std::filesystem::path& path, const WeatherSeries& weather);

/// Stochastic clear-sky-times-clearness weather generator for desk-scale
/// climates. `mean_clearness` and `persistence` drive a daily AR(1)
/// clearness index.
struct ClimateParams {
    std::string name = "temperate";
    double latitude = 47.4;
    double longitude = 8.5;
    double mean_clearness = 0.55;
    double clearness_spread = 0.25;
    double persistence = 0.6;
    double hourly_noise = 0.08;
};

ClimateParams temperate_climate();
ClimateParams tropical_climate();

WeatherSeries synthesize_weather(const ClimateParams& climate, std::uint64_t seed);

}  // namespace urbansolar
