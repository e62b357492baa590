#pragma once

#include <optional>
#include <vector>

#include "urbansolar/mask.hpp"
#include "urbansolar/weather.hpp"

namespace urbansolar {

/// Cooper's declination in degrees for day-of-year 1..365.
double solar_declination(int day_of_year);

/// Unit vector towards the sun in scene axes (x east, y north, z up), or
/// nothing when the sun is at or below the horizon. `hour` is local solar
/// time 0..23; the equation of time is ignored.
std::optional<Vec3> sun_direction(double latitude, double longitude, int day_of_year, int hour);

/// Cosine-weighted fraction of a category as seen from the mask's plane:
/// sum over category pixels of cos(theta) * solid_angle / same over all
/// in-circle pixels. Under the equidistant projection a pixel at polar angle
/// theta subtends a solid angle proportional to sin(theta) / theta.
struct ViewFactors {
    double sky = 0.0;
    double ground = 0.0;
    double opaque = 0.0;
    double glazing = 0.0;
};

ViewFactors view_factors(const FisheyeMask& mask);

/// Sky view factor of the tilted plane. Throws UsageError if `normal` is not
/// the normal the mask was rendered for.
double svf_tilted(const FisheyeMask& mask, Vec3 normal);

struct Albedos {
    double opaque = 0.2;
    double glazing = 0.15;
    double ground = 0.2;
};

enum class Provenance { Oracle, Generated };

struct IrradianceSeries {
    std::vector<double> values;  ///< W/m2 on the sensor plane, 8760 hours
    Provenance provenance = Provenance::Oracle;
};

/// Per-hour breakdown of the oracle irradiance.
struct IrradianceBreakdown {
    std::vector<double> direct;
    std::vector<double> diffuse;
    std::vector<double> reflected;
    std::vector<double> total;
};

/// Mask-based irradiance: beam through Sky pixels, isotropic diffuse scaled by
/// the tilted sky view factor, and one-bounce reflection of GHI off the
/// visible ground, opaque and glazed surfaces.
IrradianceBreakdown simulate_point_breakdown(const FisheyeMask& mask, const SensorPoint& point,
                                             const WeatherSeries& weather, const Albedos& albedos = {});

IrradianceSeries simulate_point(const FisheyeMask& mask, const SensorPoint& point, const WeatherSeries& weather,
                                const Albedos& albedos = {});

}  // namespace urbansolar
