#include "urbansolar/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "urbansolar/error.hpp"
#include "urbansolar/oracle.hpp"
#include "urbansolar/png_io.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::vector<double>> weekly_patches(std::span<const double> annual) {
    if (annual.size() != kHoursPerYear) {
        throw LengthError("annual series must hold 8760 hours, got " + std::to_string(annual.size()));
    }
    std::vector<std::vector<double>> out(kWeeks, std::vector<double>(kPatchLength));
    for (int w = 0; w < kWeeks; ++w) {
        for (int d = 0; d < 7; ++d) {
            const int day = w * 7 + d;
            for (int s = 0; s < kStepsPerDay; ++s) {
                out[w][static_cast<std::size_t>(d * kStepsPerDay + s)] =
                    annual[static_cast<std::size_t>(day * 24 + kFirstSunlitHour + s)];
            }
        }
    }
    return out;
}

std::vector<double> assemble_annual(std::span<const std::vector<double>> patches) {
    if (patches.size() != kWeeks) throw LengthError("expected 52 weekly patches");
    std::vector<double> annual(kHoursPerYear, 0.0);
    for (int w = 0; w < kWeeks; ++w) {
        const auto& p = patches[static_cast<std::size_t>(w)];
        if (p.size() != kPatchLength) throw LengthError("weekly patch must hold 119 steps");
        for (int d = 0; d < 7; ++d) {
            const int day = w * 7 + d;
            for (int s = 0; s < kStepsPerDay; ++s) {
                annual[static_cast<std::size_t>(day * 24 + kFirstSunlitHour + s)] =
                    p[static_cast<std::size_t>(d * kStepsPerDay + s)];
            }
        }
    }
    return annual;
}

namespace {

std::array<double, 4> week_stats(const std::vector<double>& v, int week) {
    double peak = 0.0, sum = 0.0;
    double best = -1.0, worst = 0.0;
    for (int d = 0; d < 7; ++d) {
        double day_total = 0.0;
        for (int h = 0; h < 24; ++h) {
            const double x = v[static_cast<std::size_t>((week * 7 + d) * 24 + h)];
            peak = std::max(peak, x);
            day_total += x;
        }
        sum += day_total;
        if (day_total > best) best = day_total;
        if (d == 0 || day_total < worst) worst = day_total;
    }
    return {peak, sum / 168.0, best / 24.0, worst / 24.0};
}

}  // namespace

std::array<double, kWeatherStatDim> weather_stats(const WeatherSeries& weather, int week) {
    if (week < 0 || week >= kWeeks) throw InputError("week index must lie in [0, 51]");
    weather.validate();
    const auto a = week_stats(weather.dni, week);
    const auto b = week_stats(weather.dhi, week);
    return {a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]};
}

Attributes point_attributes(const SensorPoint& point, const WeatherSeries& weather, int week) {
    const auto stats = weather_stats(weather, week);
    const int month = month_of_day(week * 7 + 1);
    Attributes a{};
    a[kLongitude] = static_cast<float>(weather.longitude);
    a[kLatitude] = static_cast<float>(weather.latitude);
    a[kHeight] = static_cast<float>(point.position.z);
    a[kNormalX] = static_cast<float>(point.normal.x);
    a[kNormalY] = static_cast<float>(point.normal.y);
    a[kMonth] = static_cast<float>(month);
    a[kDeclination] = static_cast<float>(solar_declination(first_day_of_month(month)));
    for (int i = 0; i < kWeatherStatDim; ++i) a[static_cast<std::size_t>(kDniPeak + i)] = static_cast<float>(stats[i]);
    return a;
}

std::vector<WeeklySample> build_records(std::span<const SensorPoint> points, int wwr_levels,
                                        const std::map<PairKey, CubeMask>& masks, const SeriesTable& series,
                                        const WeatherSeries& weather, int climate) {
    weather.validate();
    std::vector<Attributes> week_attrs;
    std::vector<WeeklySample> out;
    out.reserve(points.size() * static_cast<std::size_t>(wwr_levels) * kWeeks);
    for (std::size_t p = 0; p < points.size(); ++p) {
        week_attrs.clear();
        for (int w = 0; w < kWeeks; ++w) week_attrs.push_back(point_attributes(points[p], weather, w));
        for (int level = 0; level < wwr_levels; ++level) {
            const PairKey key{static_cast<int>(p), level};
            if (!masks.contains(key)) {
                throw ConsistencyError("point " + points[p].id + " has no mask for wwr level " + std::to_string(level));
            }
            const auto it = series.find(key);
            if (it == series.end()) {
                throw ConsistencyError("point " + points[p].id + " has no series for wwr level " +
                                       std::to_string(level));
            }
            const auto patches = weekly_patches(it->second);
            for (int w = 0; w < kWeeks; ++w) {
                WeeklySample s;
                s.key = {static_cast<int>(p), level, climate, w};
                s.attributes = week_attrs[static_cast<std::size_t>(w)];
                const auto& patch = patches[static_cast<std::size_t>(w)];
                std::copy(patch.begin(), patch.end(), s.series.begin());
                const auto [lo, hi] = std::minmax_element(s.series.begin(), s.series.end());
                s.series_min = *lo;
                s.series_max = *hi;
                out.push_back(s);
            }
        }
    }
    return out;
}

json NormalizationStats::to_json() const {
    return {{"mean", mean}, {"stddev", stddev}, {"series_scale", series_scale}, {"provenance", provenance},
            {"fitted_on", fitted_on}};
}

NormalizationStats NormalizationStats::from_json(const json& j) {
    NormalizationStats st;
    st.mean = j.at("mean").get<std::array<double, kAttributeDim>>();
    st.stddev = j.at("stddev").get<std::array<double, kAttributeDim>>();
    st.series_scale = j.at("series_scale").get<double>();
    st.provenance = j.at("provenance").get<std::string>();
    st.fitted_on = j.at("fitted_on").get<std::size_t>();
    return st;
}

NormalizationStats fit_normalization(std::span<const WeeklySample> records, const std::string& provenance) {
    if (records.empty()) throw InsufficientDataError("cannot fit normalization on an empty split");
    NormalizationStats st;
    st.provenance = provenance;
    st.fitted_on = records.size();
    const double n = static_cast<double>(records.size());
    for (const auto& r : records) {
        for (int i = 0; i < kAttributeDim; ++i) st.mean[static_cast<std::size_t>(i)] += r.attributes[static_cast<std::size_t>(i)];
        st.series_scale = std::max(st.series_scale, static_cast<double>(r.series_max));
    }
    for (auto& m : st.mean) m /= n;
    for (const auto& r : records) {
        for (std::size_t i = 0; i < kAttributeDim; ++i) {
            const double d = r.attributes[i] - st.mean[i];
            st.stddev[i] += d * d;
        }
    }
    for (auto& s : st.stddev) s = std::max(std::sqrt(s / n), kStdFloor);
    return st;
}

Attributes normalize_attributes(const Attributes& raw, const NormalizationStats& stats) {
    Attributes z{};
    for (std::size_t i = 0; i < kAttributeDim; ++i) {
        z[i] = static_cast<float>((raw[i] - stats.mean[i]) / std::max(stats.stddev[i], kStdFloor));
    }
    return z;
}

Attributes denormalize_attributes(const Attributes& z, const NormalizationStats& stats) {
    Attributes raw{};
    for (std::size_t i = 0; i < kAttributeDim; ++i) {
        raw[i] = static_cast<float>(z[i] * std::max(stats.stddev[i], kStdFloor) + stats.mean[i]);
    }
    return raw;
}

namespace {
double span_of(float lo, float hi) { return std::max(static_cast<double>(hi) - lo, kSpanFloor); }
}  // namespace

Patch denormalize_series(const Patch& unit, float series_min, float series_max) {
    const double span = span_of(series_min, series_max);
    Patch out{};
    for (std::size_t i = 0; i < unit.size(); ++i) out[i] = static_cast<float>(series_min + unit[i] * span);
    return out;
}

NormalizedSample normalize(const WeeklySample& record, const NormalizationStats& stats) {
    if (stats.provenance != "train") {
        throw UsageError("normalization statistics were fitted on '" + stats.provenance + "', not the training split");
    }
    NormalizedSample s;
    s.key = record.key;
    s.attributes = normalize_attributes(record.attributes, stats);
    s.image_code = record.image_code;
    const double span = span_of(record.series_min, record.series_max);
    for (std::size_t i = 0; i < kPatchLength; ++i) {
        s.series[i] = static_cast<float>(std::clamp((record.series[i] - record.series_min) / span, 0.0, 1.0));
    }
    s.min_norm = static_cast<float>(record.series_min / stats.series_scale);
    s.max_norm = static_cast<float>(record.series_max / stats.series_scale);
    return s;
}

std::vector<NormalizedSample> normalize(std::span<const WeeklySample> records, const NormalizationStats& stats) {
    std::vector<NormalizedSample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(normalize(r, stats));
    return out;
}

Split split_by_point(std::span<const WeeklySample> records, std::uint64_t seed) {
    std::set<int> ids;
    for (const auto& r : records) ids.insert(r.key.point);
    if (ids.size() < 5) {
        throw InsufficientDataError("a 4:1 point split needs at least 5 sensor points, got " + std::to_string(ids.size()));
    }
    std::vector<int> order(ids.begin(), ids.end());
    Rng rng(seed, "split");
    rng.shuffle(order.begin(), order.end());
    const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(order.size()) / 5.0));
    Split s;
    s.test_points.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train_points.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(s.test_points.begin(), s.test_points.end());
    std::sort(s.train_points.begin(), s.train_points.end());
    const std::set<int> test(s.test_points.begin(), s.test_points.end());
    for (const auto& r : records) (test.contains(r.key.point) ? s.test : s.train).push_back(r);
    return s;
}

Split split_by_point(std::span<const WeeklySample> records, std::uint64_t seed, const std::map<int, int>& strata) {
    std::map<int, std::vector<int>> groups;
    std::set<int> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.key.point).second) continue;
        const auto it = strata.find(r.key.point);
        if (it == strata.end()) throw InputError("point " + std::to_string(r.key.point) + " has no stratum");
        groups[it->second].push_back(r.key.point);
    }
    if (seen.size() < 5) {
        throw InsufficientDataError("a 4:1 point split needs at least 5 sensor points, got " + std::to_string(seen.size()));
    }
    Rng rng(seed, "split");
    Split s;
    for (auto& [stratum, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        rng.shuffle(ids.begin(), ids.end());
        // one test point per stratum as soon as there are two
        auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(ids.size()) / 5.0));
        if (ids.size() >= 2) n_test = std::max<std::size_t>(n_test, 1);
        s.test_points.insert(s.test_points.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        s.train_points.insert(s.train_points.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    }
    std::sort(s.test_points.begin(), s.test_points.end());
    std::sort(s.train_points.begin(), s.train_points.end());
    const std::set<int> test(s.test_points.begin(), s.test_points.end());
    for (const auto& r : records) (test.contains(r.key.point) ? s.test : s.train).push_back(r);
    return s;
}

std::vector<const WeeklySample*> Dataset::records_for_points(std::span<const int> pts) const {
    const std::set<int> wanted(pts.begin(), pts.end());
    std::vector<const WeeklySample*> out;
    for (const auto& r : records) {
        if (wanted.contains(r.key.point)) out.push_back(&r);
    }
    return out;
}

const WeeklySample& Dataset::record(const RecordKey& key) const {
    const auto it = std::find_if(records.begin(), records.end(), [&](const WeeklySample& r) { return r.key == key; });
    if (it == records.end()) throw InputError("no record for the requested key");
    return *it;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("crypto", "SHA-256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::vector<std::uint8_t> to_le_bytes(std::span<const float> values) {
    std::vector<std::uint8_t> out(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) out[i * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    return out;
}

std::vector<float> from_le_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % 4 != 0) throw CorruptionError("float32 array length is not a multiple of 4 bytes");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
        out[i] = std::bit_cast<float>(u);
    }
    return out;
}

namespace {

std::vector<std::uint8_t> f64_bytes(std::span<const double> values) {
    std::vector<std::uint8_t> out(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto u = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) out[i * 8 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    return out;
}

std::vector<double> f64_values(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % 8 != 0) throw CorruptionError("float64 array length is not a multiple of 8 bytes");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        out[i] = std::bit_cast<double>(u);
    }
    return out;
}

std::string mask_file(const Dataset& d, const PairKey& key) {
    return "masks/" + d.points.at(static_cast<std::size_t>(key.first)).point.id + "_" + std::to_string(key.second) +
           ".png";
}

json vec3_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void save_dataset(const Dataset& d, const fs::path& dir) {
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "weather");
    json files = json::object();
    const auto put = [&](const std::string& rel, const std::vector<std::uint8_t>& bytes) {
        write_bytes(dir / rel, bytes);
        files[rel] = sha256_hex(bytes);
    };

    const std::size_t n = d.records.size();
    std::vector<float> keys, attrs, codes, series, minmax;
    keys.reserve(n * 4);
    attrs.reserve(n * kAttributeDim);
    codes.reserve(n * kCodeDim);
    series.reserve(n * kPatchLength);
    minmax.reserve(n * 2);
    for (const auto& r : d.records) {
        keys.insert(keys.end(), {float(r.key.point), float(r.key.wwr_level), float(r.key.climate), float(r.key.week)});
        attrs.insert(attrs.end(), r.attributes.begin(), r.attributes.end());
        codes.insert(codes.end(), r.image_code.begin(), r.image_code.end());
        series.insert(series.end(), r.series.begin(), r.series.end());
        minmax.insert(minmax.end(), {r.series_min, r.series_max});
    }
    put("keys.f32", to_le_bytes(keys));
    put("attributes.f32", to_le_bytes(attrs));
    put("codes.f32", to_le_bytes(codes));
    put("series.f32", to_le_bytes(series));
    put("minmax.f32", to_le_bytes(minmax));

    json climates = json::array();
    for (const auto& w : d.climates) {
        std::vector<double> both(w.dni);
        both.insert(both.end(), w.dhi.begin(), w.dhi.end());
        const std::string rel = "weather/" + w.name + ".f64";
        put(rel, f64_bytes(both));
        climates.push_back({{"name", w.name}, {"latitude", w.latitude}, {"longitude", w.longitude}, {"file", rel}});
    }

    json masks = json::array();
    for (const auto& [key, mask] : d.masks) {
        const std::string rel = mask_file(d, key);
        put(rel, encode_png(to_image(mask)));
        masks.push_back({{"point", key.first}, {"wwr_level", key.second}, {"file", rel}});
    }

    json points = json::array();
    for (const auto& p : d.points) {
        points.push_back({{"id", p.point.id},
                          {"position", vec3_json(p.point.position)},
                          {"normal", vec3_json(p.point.normal)},
                          {"wall_id", p.point.wall_id},
                          {"building", p.point.building},
                          {"sky_ratio", p.sky_ratio}});
    }

    std::size_t train_count = 0;
    const std::set<int> train(d.train_points.begin(), d.train_points.end());
    for (const auto& r : d.records) train_count += train.contains(r.key.point) ? 1 : 0;

    json m;
    m["schema_version"] = Dataset::kSchemaVersion;
    m["counts"] = {{"records", n},
                   {"train_records", train_count},
                   {"test_records", n - train_count},
                   {"points", d.points.size()},
                   {"train_points", d.train_points.size()},
                   {"test_points", d.test_points.size()},
                   {"masks", d.masks.size()}};
    m["shapes"] = {{"keys.f32", {n, 4}},
                   {"attributes.f32", {n, kAttributeDim}},
                   {"codes.f32", {n, kCodeDim}},
                   {"series.f32", {n, kPatchLength}},
                   {"minmax.f32", {n, 2}}};
    m["stats"] = d.stats.to_json();
    m["palette"] = {{"sky", palette_level(Category::Sky)},
                    {"ground", palette_level(Category::Ground)},
                    {"opaque", palette_level(Category::Opaque)},
                    {"glazing", palette_level(Category::Glazing)}};
    m["seeds"] = d.seeds;
    m["wwr_levels"] = d.wwr_levels;
    m["climates"] = climates;
    m["points"] = points;
    m["train_points"] = d.train_points;
    m["test_points"] = d.test_points;
    m["masks"] = masks;
    m["files"] = files;
    const std::string text = m.dump(2) + "\n";
    write_bytes(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset load_dataset(const fs::path& dir) {
    const auto raw = read_bytes(dir / "manifest.json");
    json m;
    try {
        m = json::parse(raw.begin(), raw.end());
    } catch (const json::exception& e) {
        throw CorruptionError(std::string("manifest is not valid JSON: ") + e.what());
    }
    try {
        if (m.at("schema_version").get<int>() != Dataset::kSchemaVersion) {
            throw CorruptionError("unsupported dataset schema version");
        }
        const json& files = m.at("files");
        const auto fetch = [&](const std::string& rel) {
            if (!files.contains(rel)) throw CorruptionError("manifest lists no checksum for " + rel);
            if (!fs::exists(dir / rel)) throw CorruptionError("missing dataset file " + rel);
            auto bytes = read_bytes(dir / rel);
            if (sha256_hex(bytes) != files.at(rel).get<std::string>()) {
                throw CorruptionError("checksum mismatch for " + rel);
            }
            return bytes;
        };

        Dataset d;
        for (const auto& p : m.at("points")) {
            PointInfo info;
            info.point.id = p.at("id").get<std::string>();
            info.point.position = vec3_from(p.at("position"));
            info.point.normal = vec3_from(p.at("normal"));
            info.point.wall_id = p.at("wall_id").get<std::string>();
            info.point.building = p.at("building").get<int>();
            info.sky_ratio = p.at("sky_ratio").get<double>();
            d.points.push_back(info);
        }
        d.wwr_levels = m.at("wwr_levels").get<std::vector<double>>();
        d.train_points = m.at("train_points").get<std::vector<int>>();
        d.test_points = m.at("test_points").get<std::vector<int>>();
        d.seeds = m.at("seeds").get<std::map<std::string, std::uint64_t>>();
        d.stats = NormalizationStats::from_json(m.at("stats"));

        for (const auto& c : m.at("climates")) {
            WeatherSeries w;
            w.name = c.at("name").get<std::string>();
            w.latitude = c.at("latitude").get<double>();
            w.longitude = c.at("longitude").get<double>();
            const auto values = f64_values(fetch(c.at("file").get<std::string>()));
            if (values.size() != 2 * kHoursPerYear) throw CorruptionError("weather array of " + w.name + " has wrong length");
            w.dni.assign(values.begin(), values.begin() + kHoursPerYear);
            w.dhi.assign(values.begin() + kHoursPerYear, values.end());
            d.climates.push_back(std::move(w));
        }
        for (const auto& entry : m.at("masks")) {
            const PairKey key{entry.at("point").get<int>(), entry.at("wwr_level").get<int>()};
            d.masks[key] = cube_from_image(decode_png(fetch(entry.at("file").get<std::string>())));
        }
        if (d.masks.size() != m.at("counts").at("masks").get<std::size_t>()) throw CorruptionError("mask count mismatch");

        const std::size_t n = m.at("counts").at("records").get<std::size_t>();
        const auto load = [&](const std::string& rel, std::size_t width) {
            auto v = from_le_bytes(fetch(rel));
            if (v.size() != n * width) {
                throw CorruptionError(rel + " holds " + std::to_string(v.size()) + " values, manifest implies " +
                                      std::to_string(n * width));
            }
            return v;
        };
        const auto keys = load("keys.f32", 4);
        const auto attrs = load("attributes.f32", kAttributeDim);
        const auto codes = load("codes.f32", kCodeDim);
        const auto series = load("series.f32", kPatchLength);
        const auto minmax = load("minmax.f32", 2);
        d.records.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& r = d.records[i];
            r.key = {int(keys[i * 4]), int(keys[i * 4 + 1]), int(keys[i * 4 + 2]), int(keys[i * 4 + 3])};
            std::copy_n(attrs.begin() + static_cast<std::ptrdiff_t>(i * kAttributeDim), kAttributeDim, r.attributes.begin());
            std::copy_n(codes.begin() + static_cast<std::ptrdiff_t>(i * kCodeDim), kCodeDim, r.image_code.begin());
            std::copy_n(series.begin() + static_cast<std::ptrdiff_t>(i * kPatchLength), kPatchLength, r.series.begin());
            r.series_min = minmax[i * 2];
            r.series_max = minmax[i * 2 + 1];
        }
        return d;
    } catch (const json::exception& e) {
        throw CorruptionError(std::string("malformed manifest: ") + e.what());
    }
}

void export_csv(const Dataset& d, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << "point_id,wwr,climate,week";
    static constexpr const char* kNames[kAttributeDim] = {
        "longitude", "latitude", "height", "normal_x", "normal_y", "month", "declination", "dni_peak", "dni_mean",
        "dni_max_day", "dni_min_day", "dhi_peak", "dhi_mean", "dhi_max_day", "dhi_min_day"};
    for (const char* name : kNames) out << ',' << name;
    out << ",series_min,series_max";
    for (int i = 0; i < kPatchLength; ++i) out << ",s" << i;
    out << '\n';
    out << std::setprecision(9);
    for (const auto& r : d.records) {
        out << d.points.at(static_cast<std::size_t>(r.key.point)).point.id << ','
            << d.wwr_levels.at(static_cast<std::size_t>(r.key.wwr_level)) << ','
            << d.climates.at(static_cast<std::size_t>(r.key.climate)).name << ',' << r.key.week;
        for (float a : r.attributes) out << ',' << a;
        out << ',' << r.series_min << ',' << r.series_max;
        for (float s : r.series) out << ',' << s;
        out << '\n';
    }
}

}  // namespace urbansolar
