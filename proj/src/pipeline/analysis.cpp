#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "pipeline_io.hpp"
#include "urbansolar/classifier.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/log.hpp"
#include "urbansolar/mask.hpp"
#include "urbansolar/oracle.hpp"
#include "urbansolar/pipeline.hpp"
#include "urbansolar/raycast.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

using nlohmann::json;

double regeneration_accuracy(VaeModel& vae, IdganModel& generator, std::span<const CubeMask> masks, std::uint64_t seed) {
    if (masks.empty()) return 0.0;
    Rng rng(seed);
    double sum = 0.0;
    std::vector<float> noise(static_cast<std::size_t>(generator.config().noise_dim));
    for (const auto& m : masks) {
        for (auto& v : noise) v = static_cast<float>(rng.normal());
        sum += pixel_accuracy(regenerate(vae, generator, m, noise), m);
    }
    return sum / static_cast<double>(masks.size());
}

void require_codes(const Dataset& dataset) {
    if (!dataset.seeds.contains("encoded")) throw UsageError("the dataset carries no image codes; run encode first");
}

std::vector<Condition> weekly_conditions(const Dataset& dataset, int point, int wwr_level, int climate,
                                         const NormalizationStats& stats) {
    std::vector<Condition> out(kWeeks);
    std::vector<bool> seen(kWeeks, false);
    for (const auto& r : dataset.records) {
        if (r.key.point != point || r.key.wwr_level != wwr_level || r.key.climate != climate) continue;
        out[static_cast<std::size_t>(r.key.week)] = make_condition(r.attributes, r.image_code, stats);
        seen[static_cast<std::size_t>(r.key.week)] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw InputError("no complete year of records for point " + std::to_string(point) + ", wwr level " +
                         std::to_string(wwr_level) + ", climate " + std::to_string(climate));
    }
    return out;
}

std::vector<int> top_irradiance_weeks(const WeatherSeries& weather, int k) {
    std::vector<std::pair<double, int>> means;
    for (int w = 0; w < kWeeks; ++w) {
        double s = 0.0;
        const int first = (1 + 7 * w) * 24;  // weeks start at day 1
        for (int h = first; h < first + 7 * 24; ++h) s += weather.ghi(h);
        means.emplace_back(-s, w);
    }
    std::sort(means.begin(), means.end());
    std::vector<int> out;
    for (int i = 0; i < std::min(k, kWeeks); ++i) out.push_back(means[static_cast<std::size_t>(i)].second);
    return out;
}

json SeriesFidelity::to_json() const {
    return {{"hourly_jsd", hourly_jsd}, {"annual_jsd", annual_jsd}, {"peak_hour_jsd", peak_hour_jsd},
            {"ac_mae", ac_mae},         {"groups", groups},         {"degenerate", degenerate}};
}

SeriesFidelity series_fidelity(std::span<const std::vector<double>> truth,
                               std::span<const std::vector<std::vector<double>>> ensembles) {
    if (truth.size() != ensembles.size()) throw ShapeError("one ensemble per truth series expected");
    if (truth.empty()) throw InputError("no series to compare");
    std::vector<std::vector<double>> real_sun, gen_sun, gen_annual;
    for (const auto& t : truth) real_sun.push_back(sunlit_hours(t));
    for (const auto& e : ensembles) {
        for (const auto& m : e) {
            gen_sun.push_back(sunlit_hours(m));
            gen_annual.push_back(m);
        }
    }
    SeriesFidelity f;
    f.groups = static_cast<int>(truth.size());
    const auto hourly = value_histograms(real_sun, gen_sun, Aggregation::Hourly);
    f.hourly_jsd = jsd(hourly.real, hourly.generated);
    const auto annual = value_histograms(truth, gen_annual, Aggregation::Annual);
    f.annual_jsd = jsd(annual.real, annual.generated);
    f.peak_hour_jsd = jsd(peak_hour_distribution(real_sun), peak_hour_distribution(gen_sun));

    double sum = 0.0;
    int used = 0;
    for (std::size_t g = 0; g < truth.size(); ++g) {
        auto days = [](const std::vector<double>& annual_series) {
            auto d = daily_totals(annual_series);
            d.resize(kWeeks * 7);  // day 365 is never generated
            return d;
        };
        std::vector<std::vector<double>> members;
        for (const auto& m : ensembles[g]) members.push_back(days(m));
        try {
            sum += ac_mae(members, days(truth[g]));
            ++used;
        } catch (const DegenerateSeriesError&) {
            ++f.degenerate;
        }
    }
    f.ac_mae = used > 0 ? sum / used : 0.0;
    return f;
}

std::string format_bench_table(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(14) << "stage" << std::right << std::setw(8) << "count" << std::setw(12) << "mean ms"
        << std::setw(12) << "p95 ms" << std::setw(12) << "total ms" << "\n";
    for (const auto& r : rows) {
        auto s = r.seconds;
        std::sort(s.begin(), s.end());
        const double total = std::accumulate(s.begin(), s.end(), 0.0);
        const double mean = s.empty() ? 0.0 : total / static_cast<double>(s.size());
        const double p95 = s.empty() ? 0.0 : s[std::min(s.size() - 1, static_cast<std::size_t>(std::ceil(0.95 * s.size())) - 1)];
        out << std::left << std::setw(14) << r.stage << std::right << std::setw(8) << s.size() << std::fixed
            << std::setprecision(1) << std::setw(12) << mean * 1e3 << std::setw(12) << p95 * 1e3 << std::setw(12)
            << total * 1e3 << "\n";
    }
    return out.str();
}

namespace {

int point_index(const Dataset& d, const std::string& id) {
    for (std::size_t i = 0; i < d.points.size(); ++i) {
        if (d.points[i].point.id == id) return static_cast<int>(i);
    }
    throw InputError("unknown point '" + id + "'");
}

int scenario_of(const Dataset& d, int point) {
    const auto& p = d.points.at(static_cast<std::size_t>(point));
    return scenario_class(p.point.normal, p.sky_ratio);
}

void check_fingerprints(VaeModel& vae, const IdganModel* idgan, const TsganModel* tsgan) {
    const auto fp = vae.fingerprint();
    if (idgan && idgan->encoder_fingerprint != fp) {
        throw ConsistencyError("image generator was trained against a different encoder checkpoint");
    }
    if (tsgan && tsgan->encoder_fingerprint != fp) {
        throw ConsistencyError("series generator was trained against a different encoder checkpoint");
    }
}

std::vector<float> noise_vector(Rng& rng, int n) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

json box_json(const BoxStats& b) {
    return {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}};
}

double share_at_least(const std::vector<double>& v, double threshold) {
    if (v.empty()) return 0.0;
    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x >= threshold; })) /
           static_cast<double>(v.size());
}

}  // namespace

RunLog Pipeline::generate(const GenerateOptions& options) {
    return run("generate", false, [&](RunLog& log) {
        const auto d = load_dataset();
        require_codes(d);
        auto tsgan = load_tsgan();
        const int p = point_index(d, options.point);
        if (options.ensemble < 1) throw InputError("ensemble must be at least 1");
        if (options.wwr_level < 0 || options.wwr_level >= static_cast<int>(d.wwr_levels.size())) {
            throw InputError("wwr level out of range");
        }
        if (options.climate < 0 || options.climate >= static_cast<int>(d.climates.size())) {
            throw InputError("climate out of range");
        }
        const auto conditions = weekly_conditions(d, p, options.wwr_level, options.climate, tsgan.stats);
        const auto seed = derive_seed(config_.stage_seed("generate"), options.point + "/" +
                                                                           std::to_string(options.wwr_level) + "/" +
                                                                           std::to_string(options.climate));
        log.seeds["generate"] = seed;
        const auto out = options.out.value_or(path("outputs/generate_" + options.point + ".csv"));
        std::ostringstream csv;
        csv << std::setprecision(6);
        const int n = options.ensemble;
        if (options.weeks == "all") {
            const auto members = tsgan.generate_annual(conditions, n, seed);
            csv << "hour";
            for (int m = 0; m < n; ++m) csv << ",member_" << m + 1;
            csv << "\n";
            for (int h = 0; h < kHoursPerYear; ++h) {
                csv << h;
                for (int m = 0; m < n; ++m) csv << "," << members[static_cast<std::size_t>(m)][static_cast<std::size_t>(h)];
                csv << "\n";
            }
            double total = 0.0;
            for (const auto& m : members) total += std::accumulate(m.begin(), m.end(), 0.0);
            log.metrics["mean_annual_kwh_m2"] = total / 1000.0 / n;
        } else {
            std::vector<int> weeks;
            std::stringstream ss(options.weeks);
            for (std::string item; std::getline(ss, item, ',');) {
                int w = -1;
                try {
                    w = std::stoi(item);
                } catch (const std::exception&) {
                    throw InputError("weeks must be 'all' or comma-separated integers, got '" + options.weeks + "'");
                }
                if (w < 0 || w >= kWeeks) throw InputError("week " + item + " outside 0..51");
                weeks.push_back(w);
            }
            csv << "week,day,hour";
            for (int m = 0; m < n; ++m) csv << ",member_" << m + 1;
            csv << "\n";
            for (int w : weeks) {
                const auto members = tsgan.generate_ensemble(conditions[static_cast<std::size_t>(w)], n,
                                                             derive_seed(seed, static_cast<std::uint64_t>(w)));
                for (int t = 0; t < kPatchLength; ++t) {
                    csv << w << "," << 1 + 7 * w + t / kStepsPerDay << "," << kFirstSunlitHour + t % kStepsPerDay;
                    for (int m = 0; m < n; ++m) csv << "," << members[static_cast<std::size_t>(m)][static_cast<std::size_t>(t)];
                    csv << "\n";
                }
            }
        }
        write_text(out, csv.str());
        log.inputs["point"] = options.point;
        log.inputs["weeks"] = options.weeks;
        log.inputs["wwr_level"] = options.wwr_level;
        log.inputs["climate"] = options.climate;
        log.outputs.push_back(out.string());
        log.metrics["members"] = n;
    });
}

RunLog Pipeline::evaluate() {
    return run("evaluate", false, [&](RunLog& log) {
        const auto d = load_dataset();
        require_codes(d);
        auto vae = load_vae();
        auto idgan = load_idgan();
        auto tsgan = load_tsgan();
        check_fingerprints(vae, &idgan, &tsgan);
        const auto seed = config_.stage_seed("evaluate");
        log.seeds["evaluate"] = seed;
        const int levels = static_cast<int>(d.wwr_levels.size());
        const int n = config_.evaluation.ensemble;
        json report;

        // images
        const Stopwatch image_timer;
        {
            double vae_pa = 0.0, vae_miou = 0.0, gan_pa = 0.0, gan_miou = 0.0;
            Rng rng(derive_seed(seed, "images"));
            int count = 0;
            for (int p : d.test_points) {
                for (int l = 0; l < levels; ++l) {
                    const auto& truth = d.masks.at({p, l});
                    const auto rec = vae.reconstruct(truth);
                    const auto gen = regenerate(vae, idgan, truth, noise_vector(rng, idgan.config().noise_dim));
                    vae_pa += pixel_accuracy(rec, truth);
                    vae_miou += mean_iou(rec, truth);
                    gan_pa += pixel_accuracy(gen, truth);
                    gan_miou += mean_iou(gen, truth);
                    ++count;
                }
            }
            report["images"] = {{"masks", count},
                                {"vae_pixel_accuracy", vae_pa / count},
                                {"vae_mean_iou", vae_miou / count},
                                {"idgan_pixel_accuracy", gan_pa / count},
                                {"idgan_mean_iou", gan_miou / count}};
        }
        log.durations["images"] = image_timer.seconds();

        // raw generator range over 10^4 draws
        {
            std::vector<Condition> conditions;
            for (const auto* r : d.records_for_points(d.test_points)) {
                if (conditions.size() == 1000) break;
                conditions.push_back(make_condition(r->attributes, r->image_code, tsgan.stats));
            }
            const auto draws = tsgan.sample(conditions, 10, derive_seed(seed, "range"));
            double lo = 1.0, hi = 0.0;
            int inverted = 0;
            for (const auto& g : draws) {
                const auto [a, b] = std::minmax_element(g.unit.begin(), g.unit.end());
                lo = std::min(lo, static_cast<double>(*a));
                hi = std::max(hi, static_cast<double>(*b));
                if (g.min_norm > g.max_norm) ++inverted;
            }
            report["range"] = {{"draws", draws.size()}, {"min", lo}, {"max", hi}, {"inverted_minmax", inverted}};
        }

        // series fidelity on the test split
        const Stopwatch series_timer;
        std::vector<std::vector<double>> truth_all;
        std::vector<std::vector<std::vector<double>>> ens_all;
        json per_climate = json::object();
        std::uint64_t group = 0;
        for (int c = 0; c < static_cast<int>(d.climates.size()); ++c) {
            const auto oracle = load_oracle(c);
            std::vector<std::vector<double>> truth;
            std::vector<std::vector<std::vector<double>>> ens;
            for (int p : d.test_points) {
                for (int l = 0; l < levels; ++l) {
                    truth.push_back(oracle.at({p, l}));
                    ens.push_back(tsgan.generate_annual(weekly_conditions(d, p, l, c, tsgan.stats), n,
                                                        derive_seed(derive_seed(seed, "series"), group++)));
                }
            }
            per_climate[d.climates[static_cast<std::size_t>(c)].name] = series_fidelity(truth, ens).to_json();
            truth_all.insert(truth_all.end(), truth.begin(), truth.end());
            ens_all.insert(ens_all.end(), ens.begin(), ens.end());
        }
        report["series"] = {{"pooled", series_fidelity(truth_all, ens_all).to_json()},
                            {"per_climate", per_climate},
                            {"ensemble", n}};
        log.durations["series"] = series_timer.seconds();

        // scenario study on high-irradiance weeks
        const Stopwatch study_timer;
        {
            std::set<int> train(d.train_points.begin(), d.train_points.end());
            std::vector<std::vector<int>> top(d.climates.size());
            for (std::size_t c = 0; c < d.climates.size(); ++c) {
                top[c] = top_irradiance_weeks(d.climates[c], config_.evaluation.study_weeks);
            }
            std::vector<const WeeklySample*> picked;
            for (const auto& r : d.records) {
                const auto& weeks = top[static_cast<std::size_t>(r.key.climate)];
                if (std::find(weeks.begin(), weeks.end(), r.key.week) != weeks.end()) picked.push_back(&r);
            }
            std::vector<Condition> conditions;
            for (const auto* r : picked) conditions.push_back(make_condition(r->attributes, r->image_code, tsgan.stats));
            const auto draws = tsgan.sample(conditions, 1, derive_seed(seed, "study"));
            LabeledSet real_train, real_test, synth_train, synth_test;
            for (std::size_t i = 0; i < picked.size(); ++i) {
                const auto* r = picked[i];
                std::vector<float> real(r->series.begin(), r->series.end());
                // one generated member stands in for the one observed week
                const auto member = to_physical(draws[i], tsgan.stats.series_scale);
                std::vector<float> synth(member.begin(), member.end());
                for (auto& v : real) v /= 1000.0f;
                for (auto& v : synth) v /= 1000.0f;
                const int label = scenario_of(d, r->key.point);
                const bool is_train = train.contains(r->key.point);
                auto& rs = is_train ? real_train : real_test;
                auto& ss = is_train ? synth_train : synth_test;
                rs.features.push_back(std::move(real));
                rs.labels.push_back(label);
                ss.features.push_back(std::move(synth));
                ss.labels.push_back(label);
            }
            const auto study = scenario_study(real_train, real_test, synth_train, synth_test,
                                              mlp_run(kScenarioClasses, config_.classifier));
            auto f1_json = [](const F1Report& r) { return json{{"macro", r.macro}, {"per_class", r.per_class}}; };
            report["scenario_study"] = {{"weeks", top},
                                        {"train_samples", real_train.labels.size()},
                                        {"test_samples", real_test.labels.size()},
                                        {"trtr", f1_json(study.trtr)},
                                        {"tsts", f1_json(study.tsts)},
                                        {"trts", f1_json(study.trts)},
                                        {"tstr", f1_json(study.tstr)}};
        }
        log.durations["scenario_study"] = study_timer.seconds();

        write_json(path("reports/evaluation.json"), report);
        std::ostringstream csv;
        csv << std::setprecision(9) << "metric,value\n";
        csv << "vae_pixel_accuracy," << report["images"]["vae_pixel_accuracy"].get<double>() << "\n";
        csv << "idgan_pixel_accuracy," << report["images"]["idgan_pixel_accuracy"].get<double>() << "\n";
        for (const char* k : {"hourly_jsd", "annual_jsd", "peak_hour_jsd", "ac_mae"}) {
            csv << k << "," << report["series"]["pooled"][k].get<double>() << "\n";
        }
        for (const char* k : {"trtr", "tsts", "trts", "tstr"}) {
            csv << "macro_f1_" << k << "," << report["scenario_study"][k]["macro"].get<double>() << "\n";
        }
        write_text(path("reports/evaluation.csv"), csv.str());
        log.outputs = {path("reports/evaluation.json").string(), path("reports/evaluation.csv").string()};
        log.metrics = report;
    });
}

RunLog Pipeline::wwr_study() {
    return run("wwr-study", false, [&](RunLog& log) {
        const auto d = load_dataset();
        auto vae = load_vae();
        auto idgan = load_idgan();
        check_fingerprints(vae, &idgan, nullptr);
        const int levels = static_cast<int>(d.wwr_levels.size());
        if (levels < 3) throw ConfigError("the WWR study needs at least three wwr levels");
        const int low = 1, high = levels - 1;

        std::vector<WwrTriplet> triplets;
        for (int p : d.train_points) {
            WwrTriplet t;
            t.zero = vae.encode(d.masks.at({p, 0})).mean;
            t.low = vae.encode(d.masks.at({p, low})).mean;
            t.high = vae.encode(d.masks.at({p, high})).mean;
            triplets.push_back(t);
        }
        const auto dim = find_wwr_dimension(triplets);
        const auto range = static_cast<float>(config_.evaluation.traversal_range);
        const auto sweep = default_sweep(config_.evaluation.traversal_steps, -range, range);
        const auto seed = config_.stage_seed("wwr-study");
        log.seeds["wwr-study"] = seed;

        std::vector<WwrCase> cases;
        for (int p : d.test_points) cases.push_back({d.masks.at({p, 0}), d.masks.at({p, low}), d.masks.at({p, high})});
        const TraversalRun vae_path = [&](const CubeMask& zero) {
            auto code = vae.encode(zero).mean;
            std::vector<CubeMask> out;
            for (float v : sweep) {
                code[static_cast<std::size_t>(dim.dim)] = v;
                out.push_back(vae.decode(code));
            }
            return out;
        };
        Rng rng(seed);
        const TraversalRun gan_path = [&](const CubeMask& zero) {
            return traverse(vae, idgan, zero, dim.dim, sweep, noise_vector(rng, idgan.config().noise_dim));
        };
        const auto ex = wwr_experiment(cases, vae_path, gan_path);
        json report = {{"dimension", dim.to_json()},
                       {"sweep", sweep},
                       {"test_points", cases.size()},
                       {"vae_low", box_json(ex.vae_low_box)},
                       {"vae_high", box_json(ex.vae_high_box)},
                       {"idgan_low", box_json(ex.gan_low_box)},
                       {"idgan_high", box_json(ex.gan_high_box)},
                       {"idgan_high_share_at_least_0_4", share_at_least(ex.gan_high, 0.4)},
                       {"vae_high_share_at_least_0_4", share_at_least(ex.vae_high, 0.4)},
                       {"per_point",
                        {{"vae_low", ex.vae_low}, {"vae_high", ex.vae_high}, {"idgan_low", ex.gan_low},
                         {"idgan_high", ex.gan_high}}}};
        write_json(path("reports/wwr_study.json"), report);
        log.outputs.push_back(path("reports/wwr_study.json").string());
        log.metrics = report;
    });
}

RunLog Pipeline::bench(int points) {
    return run("bench", false, [&](RunLog& log) {
        if (points < 1) throw InputError("bench needs at least one point");
        const auto d = load_dataset();
        require_codes(d);
        auto vae = load_vae();
        auto idgan = load_idgan();
        auto tsgan = load_tsgan();
        const auto scene = load_scene();
        std::vector<int> chosen(d.test_points.begin(), d.test_points.end());
        for (int p : d.train_points) chosen.push_back(p);
        chosen.resize(std::min<std::size_t>(chosen.size(), static_cast<std::size_t>(points)));

        const Stopwatch setup;
        const RayCaster caster(scene, config_.masks.ray_cell);
        log.durations["ray_caster_setup"] = setup.seconds();
        const auto glazings = config_.masks.glazings();
        const auto sweep = default_sweep(config_.evaluation.traversal_steps,
                                         -static_cast<float>(config_.evaluation.traversal_range),
                                         static_cast<float>(config_.evaluation.traversal_range));
        const int n = config_.evaluation.ensemble;
        Rng rng(config_.stage_seed("bench"));
        std::vector<BenchRow> rows{{"mask render", {}}, {"simulate", {}}, {"encode", {}}, {"generate", {}}, {"traverse", {}}};
        for (int p : chosen) {
            const auto& sp = d.points[static_cast<std::size_t>(p)].point;
            Stopwatch t;
            const auto fisheyes = render_fisheye_levels(caster, glazings, sp, config_.masks.fisheye_resolution);
            const auto cube = reproject_cubemap(fisheyes.front());
            rows[0].seconds.push_back(t.seconds());

            t = Stopwatch();
            [[maybe_unused]] const auto oracle = simulate_point(fisheyes.front(), sp, d.climates.front(), config_.albedos);
            rows[1].seconds.push_back(t.seconds());

            t = Stopwatch();
            [[maybe_unused]] const auto code = vae.encode(cube);
            rows[2].seconds.push_back(t.seconds());

            t = Stopwatch();
            const auto conditions = weekly_conditions(d, p, 0, 0, tsgan.stats);
            [[maybe_unused]] const auto annual = tsgan.generate_annual(conditions, n, rng.next());
            rows[3].seconds.push_back(t.seconds());

            t = Stopwatch();
            [[maybe_unused]] const auto masks = traverse(vae, idgan, cube, 0, sweep, noise_vector(rng, idgan.config().noise_dim));
            rows[4].seconds.push_back(t.seconds());
        }
        const auto table = format_bench_table(rows);
        json rows_json = json::array();
        for (const auto& r : rows) rows_json.push_back({{"stage", r.stage}, {"seconds", r.seconds}});
        write_json(path("reports/bench.json"), {{"points", chosen.size()}, {"ensemble", n}, {"rows", rows_json}});
        write_text(path("reports/bench.txt"), table);
        log.outputs = {path("reports/bench.json").string(), path("reports/bench.txt").string()};
        log.metrics["points"] = chosen.size();
        log.details["table"] = table;
        log.details["rows"] = rows_json;
    });
}

}  // namespace urbansolar
