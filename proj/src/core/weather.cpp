#include "urbansolar/weather.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "urbansolar/error.hpp"
#include "urbansolar/oracle.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

namespace {
constexpr std::array<int, 12> kDaysInMonth{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
}

int month_of_day(int day_of_year) {
    if (day_of_year < 1 || day_of_year > kDaysPerYear) throw InputError("day of year out of range");
    int acc = 0;
    for (int m = 0; m < 12; ++m) {
        acc += kDaysInMonth[static_cast<std::size_t>(m)];
        if (day_of_year <= acc) return m + 1;
    }
    return 12;
}

int first_day_of_month(int month) {
    if (month < 1 || month > 12) throw InputError("month out of range");
    int day = 1;
    for (int m = 1; m < month; ++m) day += kDaysInMonth[static_cast<std::size_t>(m - 1)];
    return day;
}

void WeatherSeries::validate() const {
    if (dni.size() != kHoursPerYear || dhi.size() != kHoursPerYear) {
        throw LengthError("weather series must hold exactly 8760 hours");
    }
    if (latitude < -90.0 || latitude > 90.0 || !std::isfinite(longitude)) {
        throw DataError("weather location out of range");
    }
    for (std::size_t i = 0; i < dni.size(); ++i) {
        if (!(dni[i] >= 0.0) || !(dhi[i] >= 0.0) || !std::isfinite(dni[i]) || !std::isfinite(dhi[i])) {
            throw DataError("negative or non-finite irradiance at hour " + std::to_string(i));
        }
    }
}

double WeatherSeries::ghi(int t) const {
    const auto sun = sun_direction(latitude, longitude, t / 24 + 1, t % 24);
    const auto i = static_cast<std::size_t>(t);
    return dhi[i] + (sun ? dni[i] * sun->z : 0.0);
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double to_number(std::string_view field, std::size_t line_no, const char* what) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError(line_no, std::string("cannot parse ") + what + " '" + std::string(field) + "'");
    }
    return value;
}

bool is_header(std::string_view first) {
    static constexpr std::array<std::string_view, 8> kHeaders{
        "LOCATION", "DESIGN CONDITIONS", "TYPICAL/EXTREME PERIODS", "GROUND TEMPERATURES",
        "HOLIDAYS/DAYLIGHT SAVINGS", "COMMENTS 1", "COMMENTS 2", "DATA PERIODS"};
    return std::find(kHeaders.begin(), kHeaders.end(), first) != kHeaders.end();
}

}  // namespace

WeatherSeries parse_epw(const std::string& text, const std::string& name) {
    WeatherSeries w;
    w.name = name;
    bool have_location = false;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (is_header(fields[0])) {
            if (fields[0] == "LOCATION") {
                if (fields.size() < 8) throw ParseError(line_no, "LOCATION record needs latitude and longitude");
                w.latitude = to_number(fields[6], line_no, "latitude");
                w.longitude = to_number(fields[7], line_no, "longitude");
                have_location = true;
            }
            continue;
        }
        if (fields.size() < 16) throw ParseError(line_no, "data row has fewer than 16 fields");
        const double month = to_number(fields[1], line_no, "month");
        const double day = to_number(fields[2], line_no, "day");
        if (month == 2.0 && day == 29.0) continue;
        const double dni = to_number(fields[14], line_no, "direct normal radiation");
        const double dhi = to_number(fields[15], line_no, "diffuse horizontal radiation");
        if (dni < 0.0 || dhi < 0.0 || dni >= 9999.0 || dhi >= 9999.0) {
            throw ParseError(line_no, "radiation value missing or negative");
        }
        w.dni.push_back(dni);
        w.dhi.push_back(dhi);
    }
    if (!have_location) throw ParseError(line_no, "missing LOCATION header");
    if (w.dni.size() != kHoursPerYear) {
        throw LengthError("EPW holds " + std::to_string(w.dni.size()) + " hourly rows, expected 8760");
    }
    w.validate();
    return w;
}

WeatherSeries read_epw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_epw(ss.str(), path.stem().string());
}

void write_epw(const std::filesystem::path& path, const WeatherSeries& w) {
    w.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << "LOCATION," << w.name << ",-,-,synthetic,000000," << w.latitude << ',' << w.longitude << ",0.0,0.0\n"
        << "DESIGN CONDITIONS,0\n"
        << "TYPICAL/EXTREME PERIODS,0\n"
        << "GROUND TEMPERATURES,0\n"
        << "HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0\n"
        << "COMMENTS 1,synthetic weather\n"
        << "COMMENTS 2,\n"
        << "DATA PERIODS,1,1,Data,Sunday, 1/ 1,12/31\n";
    for (int t = 0; t < kHoursPerYear; ++t) {
        const int doy = t / 24 + 1;
        const int month = month_of_day(doy);
        const int day = doy - first_day_of_month(month) + 1;
        const auto i = static_cast<std::size_t>(t);
        out << "2001," << month << ',' << day << ',' << (t % 24 + 1) << ",60,?9?9?9?9E0?9?9?9?9?9?9?9?9?9?9?9?9?9?9?9*9*9?9,"
            << "20.0,10.0,50,101325,0,0,300," << w.ghi(t) << ',' << w.dni[i] << ',' << w.dhi[i]
            << ",0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n";
    }
}

ClimateParams temperate_climate() { return {}; }

ClimateParams tropical_climate() {
    ClimateParams c;
    c.name = "tropical";
    c.latitude = 1.35;
    c.longitude = 103.8;
    c.mean_clearness = 0.45;
    c.clearness_spread = 0.15;
    c.persistence = 0.3;
    c.hourly_noise = 0.15;
    return c;
}

WeatherSeries synthesize_weather(const ClimateParams& climate, std::uint64_t seed) {
    constexpr double kSolarConstant = 1361.0;
    Rng rng(seed, "weather/" + climate.name);
    WeatherSeries w;
    w.name = climate.name;
    w.latitude = climate.latitude;
    w.longitude = climate.longitude;
    w.dni.assign(kHoursPerYear, 0.0);
    w.dhi.assign(kHoursPerYear, 0.0);
    double anomaly = 0.0;
    for (int day = 1; day <= kDaysPerYear; ++day) {
        anomaly = climate.persistence * anomaly +
                  std::sqrt(1.0 - climate.persistence * climate.persistence) * rng.normal();
        const double daily = std::clamp(climate.mean_clearness + climate.clearness_spread * anomaly, 0.05, 0.95);
        for (int hour = 0; hour < 24; ++hour) {
            const double k = std::clamp(daily + climate.hourly_noise * rng.normal(), 0.02, 0.98);
            const auto sun = sun_direction(climate.latitude, climate.longitude, day, hour);
            if (!sun) continue;
            const double sin_alt = sun->z;
            const double air_mass = 1.0 / std::max(sin_alt, 0.05);
            const double dni_clear = kSolarConstant * std::pow(0.7, std::pow(air_mass, 0.678));
            const double dhi_clear = 0.12 * kSolarConstant * sin_alt;
            const auto i = static_cast<std::size_t>((day - 1) * 24 + hour);
            w.dni[i] = dni_clear * std::pow(k, 1.5);
            w.dhi[i] = dhi_clear + 0.35 * (1.0 - k) * kSolarConstant * sin_alt;
        }
    }
    return w;
}

}  // namespace urbansolar
