#include "urbansolar/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "urbansolar/error.hpp"

namespace urbansolar {

double solar_declination(int day_of_year) {
    if (day_of_year < 1 || day_of_year > kDaysPerYear) {
        throw InputError("day of year must lie in [1, 365], got " + std::to_string(day_of_year));
    }
    return 23.45 * std::sin(2.0 * std::numbers::pi * (284.0 + day_of_year) / 365.0);
}

std::optional<Vec3> sun_direction(double latitude, double /*longitude*/, int day_of_year, int hour) {
    if (latitude < -90.0 || latitude > 90.0) throw InputError("latitude out of range");
    if (hour < 0 || hour > 23) throw InputError("hour must lie in [0, 23]");
    const double decl = deg2rad(solar_declination(day_of_year));
    const double lat = deg2rad(latitude);
    const double omega = deg2rad(15.0 * (hour - 12));
    const Vec3 s{-std::cos(decl) * std::sin(omega),
                 std::sin(decl) * std::cos(lat) - std::cos(decl) * std::sin(lat) * std::cos(omega),
                 std::sin(decl) * std::sin(lat) + std::cos(decl) * std::cos(lat) * std::cos(omega)};
    if (s.z <= 0.0) return std::nullopt;
    return normalized(s);
}

namespace {

double pixel_weight(int resolution, int row, int col) {
    const double theta = FisheyeMask::polar_angle(resolution, row, col);
    const double jac = theta < 1e-12 ? 1.0 : std::sin(theta) / theta;
    return std::cos(theta) * jac;
}

}  // namespace

ViewFactors view_factors(const FisheyeMask& mask) {
    double acc[kCategoryCount] = {};
    double total = 0.0;
    for (int row = 0; row < mask.resolution; ++row) {
        for (int col = 0; col < mask.resolution; ++col) {
            const Category c = mask.at(row, col);
            if (c == Category::Invalid) continue;
            const double w = pixel_weight(mask.resolution, row, col);
            acc[static_cast<int>(c)] += w;
            total += w;
        }
    }
    if (total <= 0.0) return {};
    return {acc[0] / total, acc[1] / total, acc[2] / total, acc[3] / total};
}

double svf_tilted(const FisheyeMask& mask, Vec3 normal) {
    if (norm(normalized(normal) - mask.frame.normal) > 1e-6) {
        throw UsageError("mask was rendered for a different normal");
    }
    return view_factors(mask).sky;
}

IrradianceBreakdown simulate_point_breakdown(const FisheyeMask& mask, const SensorPoint& point,
                                             const WeatherSeries& weather, const Albedos& albedos) {
    weather.validate();
    const Vec3 n = normalized(point.normal);
    if (norm(n - mask.frame.normal) > 1e-6) throw UsageError("mask normal does not match the sensor normal");

    const ViewFactors vf = view_factors(mask);
    const double reflect = albedos.opaque * vf.opaque + albedos.glazing * vf.glazing + albedos.ground * vf.ground;

    IrradianceBreakdown out;
    out.direct.assign(kHoursPerYear, 0.0);
    out.diffuse.assign(kHoursPerYear, 0.0);
    out.reflected.assign(kHoursPerYear, 0.0);
    out.total.assign(kHoursPerYear, 0.0);
    for (int t = 0; t < kHoursPerYear; ++t) {
        const int day = t / 24 + 1;
        const int hour = t % 24;
        const double dni = weather.dni[static_cast<std::size_t>(t)];
        const double dhi = weather.dhi[static_cast<std::size_t>(t)];
        const auto sun = sun_direction(weather.latitude, weather.longitude, day, hour);
        double direct = 0.0;
        double ghi = dhi;
        if (sun) {
            ghi += dni * sun->z;
            const double cos_i = dot(*sun, n);
            if (cos_i > 0.0 && dni > 0.0) {
                const auto px = mask.pixel_for(*sun);
                if (px && mask.at(px->first, px->second) == Category::Sky) direct = dni * cos_i;
            }
        }
        const std::size_t i = static_cast<std::size_t>(t);
        out.direct[i] = direct;
        out.diffuse[i] = dhi * vf.sky;
        out.reflected[i] = ghi * reflect;
        out.total[i] = std::max(0.0, direct + out.diffuse[i] + out.reflected[i]);
    }
    return out;
}

IrradianceSeries simulate_point(const FisheyeMask& mask, const SensorPoint& point, const WeatherSeries& weather,
                                const Albedos& albedos) {
    return {simulate_point_breakdown(mask, point, weather, albedos).total, Provenance::Oracle};
}

}  // namespace urbansolar
