#include "urbansolar/fidelity.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "urbansolar/dataset.hpp"
#include "urbansolar/error.hpp"

namespace urbansolar {

namespace {

void same_size(std::size_t a, std::size_t b) {
    if (a != b) throw ShapeError("rasters differ in size: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

ConfusionCounts confusion(std::span<const Category> pred, std::span<const Category> truth, Category category) {
    same_size(pred.size(), truth.size());
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == category;
        const bool t = truth[i] == category;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double pixel_accuracy(std::span<const Category> pred, std::span<const Category> truth) {
    same_size(pred.size(), truth.size());
    if (pred.empty()) throw ShapeError("empty raster");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double pixel_accuracy(const CubeMask& pred, const CubeMask& truth) { return pixel_accuracy(pred.pixels, truth.pixels); }

std::optional<double> iou(std::span<const Category> pred, std::span<const Category> truth, Category category) {
    const auto c = confusion(pred, truth, category);
    const std::size_t denom = c.tp + c.fp + c.fn;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::optional<double> iou(const CubeMask& pred, const CubeMask& truth, Category category) {
    return iou(pred.pixels, truth.pixels, category);
}

double mean_iou(std::span<const Category> pred, std::span<const Category> truth) {
    double sum = 0.0;
    int present = 0;
    for (int k = 0; k < kCategoryCount; ++k) {
        if (const auto v = iou(pred, truth, static_cast<Category>(k))) {
            sum += *v;
            ++present;
        }
    }
    return present == 0 ? 1.0 : sum / present;
}

double mean_iou(const CubeMask& pred, const CubeMask& truth) { return mean_iou(pred.pixels, truth.pixels); }

CubeMask quantize(std::span<const float> gray) {
    same_size(gray.size(), static_cast<std::size_t>(CubeMask::kSize) * CubeMask::kSize);
    CubeMask m;
    for (std::size_t i = 0; i < gray.size(); ++i) m.pixels[i] = nearest_category(gray[i]);
    return m;
}

Histogram histogram(std::span<const double> values, double lo, double hi, int bins) {
    if (values.empty()) throw InputError("cannot build a histogram of an empty set");
    if (bins < 1 || !(hi >= lo)) throw InputError("invalid histogram grid");
    Histogram h{lo, hi, std::vector<double>(static_cast<std::size_t>(bins), 0.0)};
    const double width = (hi - lo) / bins;
    for (double v : values) {
        int b = 0;
        if (width > 0.0) b = std::clamp(static_cast<int>(std::floor((v - lo) / width)), 0, bins - 1);
        h.mass[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& m : h.mass) m /= static_cast<double>(values.size());
    return h;
}

const char* jsd_variant_name(JsdVariant variant) { return variant == JsdVariant::Summed ? "summed" : "halved"; }

double jsd(std::span<const double> p, std::span<const double> q, JsdVariant variant) {
    if (p.size() != q.size()) throw ShapeError("histograms have different bin counts");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) total += p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) total += q[i] * std::log(q[i] / m);
    }
    total = std::max(total, 0.0);
    return variant == JsdVariant::Summed ? total : 0.5 * total;
}

double jsd(const Histogram& p, const Histogram& q, JsdVariant variant) {
    if (p.lo != q.lo || p.hi != q.hi || p.bins() != q.bins()) throw ShapeError("histograms use different bin grids");
    return jsd(p.mass, q.mass, variant);
}

HistogramPair value_histograms(std::span<const std::vector<double>> real, std::span<const std::vector<double>> generated,
                               Aggregation aggregation, int bins) {
    if (real.empty() || generated.empty()) throw InputError("value histograms need non-empty real and generated sets");
    const auto pool = [&](std::span<const std::vector<double>> set) {
        std::vector<double> out;
        for (const auto& s : set) {
            if (aggregation == Aggregation::Hourly) {
                out.insert(out.end(), s.begin(), s.end());
            } else {
                double sum = 0.0;
                for (double v : s) sum += v;
                out.push_back(sum);
            }
        }
        if (out.empty()) throw InputError("value histograms need at least one value");
        return out;
    };
    const auto a = pool(real);
    const auto b = pool(generated);
    const auto [alo, ahi] = std::minmax_element(a.begin(), a.end());
    const auto [blo, bhi] = std::minmax_element(b.begin(), b.end());
    const double lo = std::min(*alo, *blo);
    const double hi = std::max(*ahi, *bhi);
    return {histogram(a, lo, hi, bins), histogram(b, lo, hi, bins)};
}

Histogram peak_hour_distribution(std::span<const std::vector<double>> series) {
    Histogram h{double(kFirstSunlitHour), double(kFirstSunlitHour + kStepsPerDay),
                std::vector<double>(kStepsPerDay, 0.0)};
    double days = 0.0;
    for (const auto& s : series) {
        if (s.size() % kStepsPerDay != 0) throw ShapeError("series length is not a whole number of sunlit days");
        for (std::size_t d = 0; d < s.size(); d += kStepsPerDay) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < kStepsPerDay; ++i) {
                if (s[d + i] > s[d + best]) best = i;
            }
            if (!(s[d + best] > 0.0)) continue;
            h.mass[best] += 1.0;
            days += 1.0;
        }
    }
    if (days > 0.0) {
        for (double& m : h.mass) m /= days;
    }
    return h;
}

std::vector<double> sunlit_hours(std::span<const double> annual) {
    std::vector<double> out;
    out.reserve(kWeeks * kPatchLength);
    for (const auto& p : weekly_patches(annual)) out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::vector<double> daily_totals(std::span<const double> annual) {
    if (annual.size() != kHoursPerYear) throw LengthError("annual series must hold 8760 hours");
    std::vector<double> out(kDaysPerYear, 0.0);
    for (std::size_t t = 0; t < annual.size(); ++t) out[t / 24] += annual[t];
    return out;
}

double autocorrelation(std::span<const double> x, int k) {
    const int n = static_cast<int>(x.size());
    if (k < 0 || k >= n) throw InputError("lag must lie in [0, T-1]");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);
    if (denom <= 1e-12 * std::max(1.0, mean * mean) * n) throw DegenerateSeriesError("series has zero variance");
    double num = 0.0;
    for (int t = 0; t + k < n; ++t) {
        num += (x[static_cast<std::size_t>(t)] - mean) * (x[static_cast<std::size_t>(t + k)] - mean);
    }
    return num / denom;
}

std::vector<double> autocorrelation_curve(std::span<const double> x) {
    std::vector<double> out;
    for (int k = 1; k < static_cast<int>(x.size()); ++k) out.push_back(autocorrelation(x, k));
    return out;
}

double ac_mae(std::span<const std::vector<double>> generated_daily, std::span<const double> truth_daily) {
    if (generated_daily.empty()) throw InputError("ac_mae needs at least one generated member");
    const auto truth = autocorrelation_curve(truth_daily);
    double sum = 0.0;
    for (const auto& g : generated_daily) {
        if (g.size() != truth_daily.size()) throw ShapeError("member and truth differ in length");
        const auto curve = autocorrelation_curve(g);
        for (std::size_t k = 0; k < curve.size(); ++k) sum += std::abs(curve[k] - truth[k]);
    }
    return sum / static_cast<double>(generated_daily.size() * truth.size());
}

double f1(const ConfusionCounts& c) {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) {
        spdlog::warn("F1 undefined for a class without predictions or positives; reporting 0");
        return 0.0;
    }
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

F1Report f1_report(std::span<const int> predicted, std::span<const int> truth, int classes) {
    same_size(predicted.size(), truth.size());
    F1Report r;
    for (int k = 0; k < classes; ++k) {
        ConfusionCounts c;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool p = predicted[i] == k;
            const bool t = truth[i] == k;
            if (p && t) ++c.tp;
            else if (p) ++c.fp;
            else if (t) ++c.fn;
            else ++c.tn;
        }
        r.per_class.push_back(f1(c));
    }
    double sum = 0.0;
    for (double v : r.per_class) sum += v;
    r.macro = classes > 0 ? sum / classes : 0.0;
    return r;
}

double normal_azimuth(Vec3 n) {
    double az = rad2deg(std::atan2(n.x, n.y));
    if (az < 0.0) az += 360.0;
    if (az >= 360.0) az -= 360.0;
    return az;
}

Orientation orientation_of(Vec3 normal) {
    const double az = normal_azimuth(normal);
    if (az >= 315.0 || az < 45.0) return Orientation::North;
    if (az < 135.0) return Orientation::East;
    if (az < 225.0) return Orientation::South;
    return Orientation::West;
}

Obstruction obstruction_of(double sky_ratio) {
    return sky_ratio <= kHighObstructionSkyRatio ? Obstruction::High : Obstruction::Low;
}

int scenario_class(Vec3 normal, double sky_ratio) {
    return static_cast<int>(orientation_of(normal)) * 2 + static_cast<int>(obstruction_of(sky_ratio));
}

std::string scenario_name(int scenario) {
    static constexpr const char* kOrient[] = {"N", "E", "S", "W"};
    if (scenario < 0 || scenario >= kScenarioClasses) throw InputError("scenario class out of range");
    return std::string(kOrient[scenario / 2]) + (scenario % 2 == 0 ? "-high" : "-low");
}

int high_irradiance_week(const WeatherSeries& weather) {
    weather.validate();
    int best = 0;
    double best_sum = -1.0;
    for (int w = 0; w < kWeeks; ++w) {
        double sum = 0.0;
        for (int t = w * 168; t < (w + 1) * 168; ++t) sum += weather.ghi(t);
        if (sum > best_sum) {
            best_sum = sum;
            best = w;
        }
    }
    return best;
}

ScenarioStudy scenario_study(const LabeledSet& real_train, const LabeledSet& real_test, const LabeledSet& synth_train,
                             const LabeledSet& synth_test, const ClassifierRun& run, int classes) {
    const auto check = [&](const LabeledSet& s, const char* name) {
        same_size(s.features.size(), s.labels.size());
        const std::set<int> seen(s.labels.begin(), s.labels.end());
        for (int k = 0; k < classes; ++k) {
            if (!seen.contains(k)) {
                throw StratificationError(std::string("class ") + std::to_string(k) + " is absent from the " + name +
                                          " training set");
            }
        }
    };
    check(real_train, "real");
    check(synth_train, "synthetic");
    ScenarioStudy out;
    out.trtr = f1_report(run(real_train, real_test), real_test.labels, classes);
    out.tsts = f1_report(run(synth_train, synth_test), synth_test.labels, classes);
    out.trts = f1_report(run(real_train, synth_test), synth_test.labels, classes);
    out.tstr = f1_report(run(synth_train, real_test), real_test.labels, classes);
    return out;
}

BoxStats box_stats(std::vector<double> v) {
    if (v.empty()) throw InputError("box statistics of an empty set");
    std::sort(v.begin(), v.end());
    const auto q = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

double best_glazing_iou(std::span<const CubeMask> sweep, const CubeMask& truth) {
    double best = 0.0;
    for (const auto& m : sweep) best = std::max(best, iou(m, truth, Category::Glazing).value_or(0.0));
    return best;
}

WwrExperiment wwr_experiment(std::span<const WwrCase> cases, const TraversalRun& vae_path, const TraversalRun& gan_path) {
    if (cases.empty()) throw InsufficientDataError("WWR experiment needs at least one case");
    WwrExperiment e;
    for (const auto& c : cases) {
        const auto vae = vae_path(c.zero);
        const auto gan = gan_path(c.zero);
        e.vae_low.push_back(best_glazing_iou(vae, c.low));
        e.vae_high.push_back(best_glazing_iou(vae, c.high));
        e.gan_low.push_back(best_glazing_iou(gan, c.low));
        e.gan_high.push_back(best_glazing_iou(gan, c.high));
    }
    e.vae_low_box = box_stats(e.vae_low);
    e.vae_high_box = box_stats(e.vae_high);
    e.gan_low_box = box_stats(e.gan_low);
    e.gan_high_box = box_stats(e.gan_high);
    return e;
}

}  // namespace urbansolar
