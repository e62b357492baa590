#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "pipeline_io.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/log.hpp"
#include "urbansolar/mask.hpp"
#include "urbansolar/oracle.hpp"
#include "urbansolar/png_io.hpp"
#include "urbansolar/raycast.hpp"
#include "urbansolar/rng.hpp"
#include "urbansolar/pipeline.hpp"

namespace urbansolar {

using nlohmann::json;

// ---- run bookkeeping -------------------------------------------------------

json RunLog::to_json() const {
    return {{"command", command}, {"inputs", inputs},   {"seeds", seeds},    {"durations", durations},
            {"metrics", metrics}, {"outputs", outputs}, {"details", details}};
}

RunLock::RunLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    std::filesystem::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd >= 0) {
            const auto pid = std::to_string(::getpid());
            [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST) throw InputError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
        // stale lock from a process that is gone
        std::ifstream in(path_);
        long pid = 0;
        in >> pid;
        if (pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno != ESRCH)) {
            throw UsageError("run directory " + dir.string() + " is locked by process " + std::to_string(pid));
        }
        std::filesystem::remove(path_);
    }
    throw UsageError("could not acquire lock " + path_.string());
}

RunLock::~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

json SitePoint::to_json() const {
    return {{"id", point.id},
            {"position", {point.position.x, point.position.y, point.position.z}},
            {"normal", {point.normal.x, point.normal.y, point.normal.z}},
            {"wall_id", point.wall_id},
            {"building", point.building},
            {"screen_sky_ratio", screen_sky_ratio},
            {"sky_ratio", sky_ratio},
            {"scenario", scenario},
            {"scenario_name", scenario_name(scenario)}};
}

SitePoint SitePoint::from_json(const json& j) {
    SitePoint s;
    s.point.id = j.at("id").get<std::string>();
    const auto& p = j.at("position");
    const auto& n = j.at("normal");
    s.point.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    s.point.normal = {n[0].get<double>(), n[1].get<double>(), n[2].get<double>()};
    s.point.wall_id = j.at("wall_id").get<std::string>();
    s.point.building = j.at("building").get<int>();
    s.screen_sky_ratio = j.at("screen_sky_ratio").get<double>();
    s.sky_ratio = j.at("sky_ratio").get<double>();
    s.scenario = j.at("scenario").get<int>();
    return s;
}

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {}

RunLog Pipeline::run(const std::string& command, bool exclusive, const std::function<void(RunLog&)>& body) {
    std::optional<RunLock> lock;
    if (exclusive) lock.emplace(dir());
    RunLog log;
    log.command = command;
    log.inputs["run_dir"] = dir().string();
    log.inputs["config_sha256"] = config_sha256(config_);
    log.seeds["master"] = config_.seed;
    const Stopwatch total;
    log_info(command + ": started");
    body(log);
    log.durations["total"] = total.seconds();
    write_json(path("logs/" + command + ".json"), log.to_json());
    log_info(command + ": done in " + std::to_string(total.seconds()) + " s");
    return log;
}

std::filesystem::path Pipeline::fisheye_path(const std::string& point_id, int level) const {
    return path("masks/fisheye/" + point_id + "_" + std::to_string(level) + ".png");
}

std::filesystem::path Pipeline::cube_path(const std::string& point_id, int level) const {
    return path("masks/cube/" + point_id + "_" + std::to_string(level) + ".png");
}

// ---- artifact readers ------------------------------------------------------

LOD1Scene Pipeline::load_scene() const {
    const auto p = path("scene.geojson");
    if (!std::filesystem::exists(p)) throw UsageError("no scene in " + dir().string() + "; run scene-build first");
    return load_geojson(p);
}

std::vector<SitePoint> Pipeline::load_points() const {
    const auto j = read_json(path("points.json"), "sample-points");
    std::vector<SitePoint> out;
    for (const auto& p : j.at("points")) out.push_back(SitePoint::from_json(p));
    return out;
}

std::vector<WeatherSeries> Pipeline::load_weather() const {
    const auto index = read_json(path("weather/index.json"), "simulate");
    std::vector<WeatherSeries> out;
    for (const auto& c : index.at("climates")) {
        WeatherSeries w;
        w.name = c.at("name").get<std::string>();
        w.latitude = c.at("latitude").get<double>();
        w.longitude = c.at("longitude").get<double>();
        const auto values = read_f64(path("weather/" + w.name + ".f64"));
        if (values.size() != 2 * kHoursPerYear) throw CorruptionError("weather file of " + w.name + " has a wrong length");
        w.dni.assign(values.begin(), values.begin() + kHoursPerYear);
        w.dhi.assign(values.begin() + kHoursPerYear, values.end());
        w.validate();
        out.push_back(std::move(w));
    }
    return out;
}

SeriesTable Pipeline::load_oracle(int climate) const {
    const auto points = load_points();
    const auto levels = static_cast<int>(config_.masks.wwr_levels.size());
    const auto& name = config_.climates.at(static_cast<std::size_t>(climate)).name;
    const auto values = read_f64(path("oracle/" + name + ".f64"));
    const auto expected = points.size() * static_cast<std::size_t>(levels) * kHoursPerYear;
    if (values.size() != expected) throw CorruptionError("oracle file of " + name + " has a wrong length");
    SeriesTable table;
    std::size_t offset = 0;
    for (int p = 0; p < static_cast<int>(points.size()); ++p) {
        for (int l = 0; l < levels; ++l) {
            table[{p, l}].assign(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                 values.begin() + static_cast<std::ptrdiff_t>(offset + kHoursPerYear));
            offset += kHoursPerYear;
        }
    }
    return table;
}

Dataset Pipeline::load_dataset() const {
    const auto d = path("dataset");
    if (!std::filesystem::exists(d / "manifest.json")) throw UsageError("no dataset; run dataset-build first");
    return urbansolar::load_dataset(d);
}

VaeModel Pipeline::load_vae() const {
    const auto p = path("models/vae.ck");
    if (!std::filesystem::exists(p)) throw UsageError("no encoder checkpoint; run train-vae first");
    return VaeModel::load(p);
}

IdganModel Pipeline::load_idgan() const {
    const auto p = path("models/idgan.ck");
    if (!std::filesystem::exists(p)) throw UsageError("no image generator checkpoint; run train-idgan first");
    return IdganModel::load(p);
}

TsganModel Pipeline::load_tsgan() const {
    const auto p = path("models/tsgan.ck");
    if (!std::filesystem::exists(p)) throw UsageError("no series generator checkpoint; run train-tsgan first");
    return TsganModel::load(p);
}

// ---- stages ----------------------------------------------------------------

RunLog Pipeline::scene_build() {
    return run("scene-build", true, [&](RunLog& log) {
        LOD1Scene scene;
        if (config_.scene.source == "geojson") {
            scene = load_geojson(config_.scene.geojson);
            log.inputs["geojson"] = config_.scene.geojson.string();
        } else {
            log.seeds["scene"] = config_.stage_seed("scene");
            scene = generate_synthetic_city(config_.scene.city, config_.stage_seed("scene"));
        }
        const auto out = path("scene.geojson");
        write_text(out, to_geojson(scene));
        log.outputs.push_back(out.string());
        log.metrics["buildings"] = scene.buildings.size();
        log.metrics["walls"] = scene.wall_count();
        log.metrics["max_height"] = scene.max_height();
    });
}

RunLog Pipeline::sample_points() {
    return run("sample-points", true, [&](RunLog& log) {
        const auto scene = load_scene();
        const auto candidates = sample_facade_points(scene, config_.sampling.spacing, config_.sampling.offset);
        if (candidates.empty()) throw InsufficientDataError("the scene yields no facade points");
        const RayCaster caster(scene, config_.masks.ray_cell);
        GlazingSpec bare = config_.masks.glazings().front();
        bare.wwr = 0.0;

        const auto seed = config_.stage_seed("sample-points");
        log.seeds["sample-points"] = seed;
        std::vector<std::size_t> order(candidates.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(seed);
        rng.shuffle(order.begin(), order.end());

        const int wanted = config_.sampling.points;
        const int quota = (wanted + kScenarioClasses - 1) / kScenarioClasses;
        std::array<std::vector<std::size_t>, kScenarioClasses> buckets;
        std::vector<std::size_t> screened_order;
        std::map<std::size_t, double> screen_ratio;
        auto satisfied = [&] {
            if (!config_.sampling.stratify) return static_cast<int>(screened_order.size()) >= wanted;
            return std::all_of(buckets.begin(), buckets.end(),
                               [&](const auto& b) { return static_cast<int>(b.size()) >= quota; });
        };
        for (std::size_t i : order) {
            if (satisfied() || static_cast<int>(screened_order.size()) >= config_.sampling.max_screened) break;
            const auto& pt = candidates[i];
            const double ratio = sky_ratio(render_fisheye(caster, bare, pt, config_.sampling.screen_resolution));
            screen_ratio[i] = ratio;
            buckets[static_cast<std::size_t>(scenario_class(pt.normal, ratio))].push_back(i);
            screened_order.push_back(i);
        }

        std::vector<std::size_t> chosen;
        if (config_.sampling.stratify) {
            // round robin over classes so scarce classes are not crowded out
            std::array<std::size_t, kScenarioClasses> next{};
            while (static_cast<int>(chosen.size()) < wanted) {
                bool progress = false;
                for (int c = 0; c < kScenarioClasses && static_cast<int>(chosen.size()) < wanted; ++c) {
                    auto& b = buckets[static_cast<std::size_t>(c)];
                    auto& k = next[static_cast<std::size_t>(c)];
                    if (k < b.size()) {
                        chosen.push_back(b[k++]);
                        progress = true;
                    }
                }
                if (!progress) break;
            }
        } else {
            chosen.assign(screened_order.begin(),
                          screened_order.begin() + std::min<std::ptrdiff_t>(wanted, std::ssize(screened_order)));
        }
        if (static_cast<int>(chosen.size()) < wanted) {
            throw InsufficientDataError("only " + std::to_string(chosen.size()) + " facade points available, " +
                                        std::to_string(wanted) + " requested");
        }
        std::sort(chosen.begin(), chosen.end());

        json points = json::array();
        std::array<int, kScenarioClasses> counts{};
        for (std::size_t i : chosen) {
            SitePoint s;
            s.point = candidates[i];
            s.screen_sky_ratio = screen_ratio.at(i);
            s.sky_ratio = s.screen_sky_ratio;
            s.scenario = scenario_class(s.point.normal, s.sky_ratio);
            ++counts[static_cast<std::size_t>(s.scenario)];
            points.push_back(s.to_json());
        }
        const auto out = path("points.json");
        write_json(out, {{"points", points}, {"candidates", candidates.size()}, {"screened", screened_order.size()}});
        log.outputs.push_back(out.string());
        log.metrics["candidates"] = candidates.size();
        log.metrics["screened"] = screened_order.size();
        log.metrics["points"] = chosen.size();
        log.metrics["screen_class_counts"] = counts;
    });
}

RunLog Pipeline::render_masks() {
    return run("render-masks", true, [&](RunLog& log) {
        const auto scene = load_scene();
        auto points = load_points();
        const RayCaster caster(scene, config_.masks.ray_cell);
        const auto glazings = config_.masks.glazings();
        std::array<int, kScenarioClasses> counts{};
        double ratio_sum = 0.0;
        const Stopwatch timer;
        for (auto& s : points) {
            const auto levels = render_fisheye_levels(caster, glazings, s.point, config_.masks.fisheye_resolution);
            for (std::size_t l = 0; l < levels.size(); ++l) {
                save_png(fisheye_path(s.point.id, static_cast<int>(l)), levels[l]);
                save_png(cube_path(s.point.id, static_cast<int>(l)), reproject_cubemap(levels[l]));
            }
            s.sky_ratio = sky_ratio(levels.front());
            s.scenario = scenario_class(s.point.normal, s.sky_ratio);
            ++counts[static_cast<std::size_t>(s.scenario)];
            ratio_sum += s.sky_ratio;
        }
        log.durations["render"] = timer.seconds();
        auto index = read_json(path("points.json"), "sample-points");
        index["points"] = json::array();
        for (const auto& s : points) index["points"].push_back(s.to_json());
        write_json(path("points.json"), index);
        log.outputs.push_back(path("masks").string());
        log.metrics["masks"] = points.size() * glazings.size();
        log.metrics["class_counts"] = counts;
        log.metrics["mean_sky_ratio"] = ratio_sum / static_cast<double>(points.size());
    });
}

RunLog Pipeline::simulate() {
    return run("simulate", true, [&](RunLog& log) {
        const auto points = load_points();
        const auto levels = static_cast<int>(config_.masks.wwr_levels.size());
        json index = {{"climates", json::array()}};
        json annual = json::object();
        for (const auto& section : config_.climates) {
            WeatherSeries w;
            if (!section.epw.empty()) {
                w = read_epw(section.epw);
                log.inputs["epw:" + section.name] = section.epw.string();
            } else {
                const auto seed = config_.stage_seed("weather:" + section.name);
                log.seeds["weather:" + section.name] = seed;
                w = synthesize_weather(section.synthetic, seed);
            }
            w.name = section.name;
            std::vector<double> flat(w.dni);
            flat.insert(flat.end(), w.dhi.begin(), w.dhi.end());
            write_f64(path("weather/" + w.name + ".f64"), flat);
            write_epw(path("weather/" + w.name + ".epw"), w);
            index["climates"].push_back({{"name", w.name}, {"latitude", w.latitude}, {"longitude", w.longitude}});

            std::vector<double> series;
            series.reserve(points.size() * static_cast<std::size_t>(levels) * kHoursPerYear);
            double total = 0.0;
            for (const auto& s : points) {
                for (int l = 0; l < levels; ++l) {
                    const auto mask = load_fisheye_png(fisheye_path(s.point.id, l), s.point.normal);
                    const auto r = simulate_point(mask, s.point, w, config_.albedos);
                    series.insert(series.end(), r.values.begin(), r.values.end());
                    for (double v : r.values) total += v;
                }
            }
            write_f64(path("oracle/" + w.name + ".f64"), series);
            log.outputs.push_back(path("oracle/" + w.name + ".f64").string());
            // kWh/m2 per series
            annual[w.name] = total / 1000.0 / static_cast<double>(points.size() * static_cast<std::size_t>(levels));
        }
        write_json(path("weather/index.json"), index);
        log.metrics["mean_annual_kwh_m2"] = annual;
    });
}

RunLog Pipeline::dataset_build() {
    return run("dataset-build", true, [&](RunLog& log) {
        const auto points = load_points();
        const auto weather = load_weather();
        const auto levels = static_cast<int>(config_.masks.wwr_levels.size());
        Dataset d;
        d.wwr_levels = config_.masks.wwr_levels;
        d.climates = weather;
        std::vector<SensorPoint> sensors;
        std::map<int, int> strata;
        for (std::size_t p = 0; p < points.size(); ++p) {
            sensors.push_back(points[p].point);
            d.points.push_back({points[p].point, points[p].sky_ratio});
            strata[static_cast<int>(p)] = points[p].scenario;
            for (int l = 0; l < levels; ++l) {
                d.masks[{static_cast<int>(p), l}] = load_cube_png(cube_path(points[p].point.id, l));
            }
        }
        std::vector<WeeklySample> records;
        for (std::size_t c = 0; c < weather.size(); ++c) {
            const auto part = build_records(sensors, levels, d.masks, load_oracle(static_cast<int>(c)), weather[c],
                                            static_cast<int>(c));
            records.insert(records.end(), part.begin(), part.end());
        }
        const auto seed = config_.stage_seed("dataset-build");
        log.seeds["split"] = seed;
        const auto split = config_.stratified_split ? split_by_point(records, seed, strata) : split_by_point(records, seed);
        d.stats = fit_normalization(split.train, "train");
        d.train_points = split.train_points;
        d.test_points = split.test_points;
        d.records = std::move(records);
        d.seeds = {{"master", config_.seed}, {"split", seed}};
        const auto out = path("dataset");
        save_dataset(d, out);
        log.outputs.push_back(out.string());

        std::array<int, kScenarioClasses> train_counts{}, test_counts{};
        for (int p : d.train_points) ++train_counts[static_cast<std::size_t>(points[static_cast<std::size_t>(p)].scenario)];
        for (int p : d.test_points) ++test_counts[static_cast<std::size_t>(points[static_cast<std::size_t>(p)].scenario)];
        log.metrics["records"] = d.records.size();
        log.metrics["train_points"] = d.train_points.size();
        log.metrics["test_points"] = d.test_points.size();
        log.metrics["train_class_counts"] = train_counts;
        log.metrics["test_class_counts"] = test_counts;
        log.metrics["series_scale"] = d.stats.series_scale;
        log.metrics["manifest_sha256"] = sha256_file(out / "manifest.json");
    });
}

namespace {

std::vector<CubeMask> masks_of(const Dataset& d, std::span<const int> points) {
    std::vector<CubeMask> out;
    for (int p : points) {
        for (int l = 0; l < static_cast<int>(d.wwr_levels.size()); ++l) out.push_back(d.masks.at({p, l}));
    }
    return out;
}

ProgressFn progress_every(const std::string& what, int every, int total) {
    return [what, every, total](int it, double loss) {
        if ((it + 1) % every == 0 || it + 1 == total) {
            log_info(what + ": iteration " + std::to_string(it + 1) + "/" + std::to_string(total) + " loss " +
                     std::to_string(loss));
        }
    };
}

double tail_mean(const std::vector<double>& v, std::size_t n) {
    if (v.empty()) return 0.0;
    n = std::min(n, v.size());
    double s = 0.0;
    for (std::size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
    return s / static_cast<double>(n);
}

}  // namespace

RunLog Pipeline::train_vae() {
    return run("train-vae", true, [&](RunLog& log) {
        const auto d = load_dataset();
        const auto corpus = masks_of(d, d.train_points);
        const auto held_out = masks_of(d, d.test_points);
        log.seeds["train-vae"] = config_.vae.seed;
        TrainLog train_log;
        auto model = urbansolar::train_vae(corpus, config_.vae_arch, config_.vae, &train_log,
                                           progress_every("train-vae", 100, config_.vae.iterations));
        const auto out = path("models/vae.ck");
        model.save(out, {{"seed", config_.vae.seed}, {"train_points", d.train_points}});
        log.outputs.push_back(out.string());
        log.metrics["fingerprint"] = model.fingerprint();
        log.metrics["iterations"] = train_log.loss.size();
        log.metrics["final_loss"] = tail_mean(train_log.loss, 50);
        log.metrics["min_batch_kl"] = train_log.kl.empty() ? 0.0 : *std::min_element(train_log.kl.begin(), train_log.kl.end());
        log.metrics["train_pixel_accuracy"] = reconstruction_accuracy(model, corpus);
        log.metrics["heldout_pixel_accuracy"] = reconstruction_accuracy(model, held_out);
        log.durations["train"] = train_log.seconds;
        log.details["curve"] = train_log.to_json(std::max<std::size_t>(1, train_log.loss.size() / 200));
    });
}

RunLog Pipeline::encode() {
    return run("encode", true, [&](RunLog& log) {
        auto d = load_dataset();
        auto vae = load_vae();
        std::map<PairKey, ImageCode> codes;
        double magnitude = 0.0;
        for (const auto& [key, mask] : d.masks) {
            const auto code = vae.encode(mask).mean;
            codes[key] = code;
            for (float v : code) magnitude += std::abs(v);
        }
        for (auto& r : d.records) r.image_code = codes.at({r.key.point, r.key.wwr_level});
        d.seeds["encoded"] = 1;
        save_dataset(d, path("dataset"));
        log.inputs["encoder"] = vae.fingerprint();
        log.outputs.push_back(path("dataset").string());
        log.metrics["codes"] = codes.size();
        log.metrics["mean_abs_code"] = magnitude / static_cast<double>(codes.size() * kCodeDim);
        log.metrics["manifest_sha256"] = sha256_file(path("dataset/manifest.json"));
    });
}

RunLog Pipeline::train_idgan() {
    return run("train-idgan", true, [&](RunLog& log) {
        const auto d = load_dataset();
        auto vae = load_vae();
        const FrozenEncoder encoder(vae);
        const auto corpus = masks_of(d, d.train_points);
        const auto held_out = masks_of(d, d.test_points);
        log.seeds["train-idgan"] = config_.idgan.seed;
        IdganLog train_log;
        auto model = urbansolar::train_idgan(corpus, encoder, config_.gan_arch, config_.idgan, &train_log,
                                             progress_every("train-idgan", 100, config_.idgan.iterations));
        const auto out = path("models/idgan.ck");
        model.save(out, {{"seed", config_.idgan.seed}});
        log.outputs.push_back(out.string());
        log.inputs["encoder"] = vae.fingerprint();
        log.metrics["fingerprint"] = model.fingerprint();
        log.metrics["iterations"] = train_log.generator_loss.size();
        log.metrics["final_discriminator_loss"] = tail_mean(train_log.discriminator_loss, 50);
        log.metrics["final_generator_loss"] = tail_mean(train_log.generator_loss, 50);
        log.metrics["final_regularizer"] = tail_mean(train_log.regularizer, 50);
        const auto eval_seed = config_.stage_seed("idgan-eval");
        log.metrics["train_quantized_pixel_accuracy"] = regeneration_accuracy(vae, model, corpus, eval_seed);
        log.metrics["heldout_quantized_pixel_accuracy"] = regeneration_accuracy(vae, model, held_out, eval_seed);
        log.durations["train"] = train_log.seconds;
        log.details["curve"] = train_log.to_json(std::max<std::size_t>(1, train_log.generator_loss.size() / 200));
    });
}

RunLog Pipeline::train_tsgan() {
    return run("train-tsgan", true, [&](RunLog& log) {
        const auto d = load_dataset();
        require_codes(d);
        const auto vae_fp = load_vae().fingerprint();
        std::vector<WeeklySample> train;
        for (const auto* r : d.records_for_points(d.train_points)) train.push_back(*r);
        const auto samples = normalize(train, d.stats);
        log.seeds["train-tsgan"] = config_.tsgan.seed;
        TsganLog train_log;
        auto model = urbansolar::train_tsgan(samples, d.stats, config_.tsgan_arch, config_.tsgan, &train_log,
                                             progress_every("train-tsgan", 50, config_.tsgan.iterations),
                                             path("models/tsgan.last_good.ck"));
        model.encoder_fingerprint = vae_fp;
        const auto out = path("models/tsgan.ck");
        model.save(out, {{"seed", config_.tsgan.seed}});
        log.outputs.push_back(out.string());
        log.inputs["encoder"] = vae_fp;
        log.metrics["fingerprint"] = model.fingerprint();
        log.metrics["samples"] = samples.size();
        log.metrics["iterations"] = train_log.generator_loss.size();
        log.metrics["final_wasserstein"] = tail_mean(train_log.wasserstein, 50);
        log.metrics["final_aux_wasserstein"] = tail_mean(train_log.aux_wasserstein, 50);
        log.durations["train"] = train_log.seconds;
        log.details["curve"] = train_log.to_json(std::max<std::size_t>(1, train_log.generator_loss.size() / 200));
    });
}

std::vector<RunLog> Pipeline::build_all() {
    std::vector<RunLog> logs;
    logs.push_back(scene_build());
    logs.push_back(sample_points());
    logs.push_back(render_masks());
    logs.push_back(simulate());
    logs.push_back(dataset_build());
    logs.push_back(train_vae());
    logs.push_back(encode());
    logs.push_back(train_idgan());
    logs.push_back(train_tsgan());
    return logs;
}

}  // namespace urbansolar
