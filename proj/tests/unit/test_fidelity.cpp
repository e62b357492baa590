#include <gtest/gtest.h>

#include <numbers>

#include "urbansolar/dataset.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/fidelity.hpp"
#include "urbansolar/rng.hpp"

using namespace urbansolar;

namespace {

constexpr auto S = Category::Sky;
constexpr auto G = Category::Ground;
constexpr auto O = Category::Opaque;
constexpr auto W = Category::Glazing;

std::vector<double> day_profile(int peak_step, double height = 100.0) {
    std::vector<double> d(kStepsPerDay, 0.0);
    for (int i = 0; i < kStepsPerDay; ++i) d[static_cast<std::size_t>(i)] = height / (1.0 + std::abs(i - peak_step));
    return d;
}

}  // namespace

TEST(PixelAccuracy, HandCounts) {
    const std::vector<Category> a{S, G, O, W};
    EXPECT_DOUBLE_EQ(pixel_accuracy(a, a), 1.0);
    EXPECT_DOUBLE_EQ(pixel_accuracy(std::vector{S, S, G, G}, std::vector{G, G, S, S}), 0.0);
    EXPECT_DOUBLE_EQ(pixel_accuracy(std::vector{S, G, O, W}, std::vector{S, G, O, O}), 0.75);
    EXPECT_THROW(pixel_accuracy(std::vector{S}, std::vector{S, S}), ShapeError);
}

TEST(Iou, HandCounts) {
    // pred glazing at {0, 1}, truth glazing at {1, 2}: TP 1, FP 1, FN 1.
    const std::vector<Category> pred{W, W, S, S};
    const std::vector<Category> truth{S, W, W, S};
    EXPECT_NEAR(*iou(pred, truth, W), 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(*iou(std::vector{W, S}, std::vector{S, W}, W), 0.0);
    EXPECT_DOUBLE_EQ(*iou(truth, truth, W), 1.0);
    EXPECT_FALSE(iou(pred, truth, O).has_value());
}

TEST(Iou, MeanSkipsAbsentCategories) {
    const std::vector<Category> pred{W, W, S, S};
    const std::vector<Category> truth{S, W, W, S};
    // Glazing 1/3, Sky 1/3 (pred {2, 3} vs truth {0, 3}), Ground and Opaque absent.
    EXPECT_NEAR(mean_iou(pred, truth), (1.0 / 3.0 + 1.0 / 3.0) / 2.0, 1e-12);
}

TEST(Iou, ConfusionSumsToTotal) {
    Rng rng(1);
    std::vector<Category> a(500), b(500);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<Category>(rng.below(4));
        b[i] = static_cast<Category>(rng.below(4));
    }
    for (int k = 0; k < 4; ++k) EXPECT_EQ(confusion(a, b, static_cast<Category>(k)).total(), 500u);
}

TEST(Jsd, IdenticalIsZeroAndSymmetric) {
    const std::vector<double> p{0.1, 0.4, 0.5};
    const std::vector<double> q{0.3, 0.3, 0.4};
    EXPECT_EQ(jsd(p, p), 0.0);
    EXPECT_NEAR(jsd(p, q), jsd(q, p), 1e-15);
    EXPECT_GT(jsd(p, q), 0.0);
}

TEST(Jsd, DisjointIsTwoLnTwo) {
    const std::vector<double> p{1.0, 0.0};
    const std::vector<double> q{0.0, 1.0};
    EXPECT_NEAR(jsd(p, q), 2.0 * std::numbers::ln2, 1e-12);
    EXPECT_NEAR(jsd(p, q, JsdVariant::Halved), std::numbers::ln2, 1e-12);
}

TEST(Jsd, HandEvaluatedCase) {
    const std::vector<double> p{0.5, 0.5, 0.0};
    const std::vector<double> q{0.0, 0.5, 0.5};
    // M = (0.25, 0.5, 0.25); KL(P||M) = 0.5 ln 2 = KL(Q||M).
    EXPECT_NEAR(jsd(p, q), std::numbers::ln2, 1e-12);
}

TEST(Jsd, GridMismatchIsShapeError) {
    const Histogram a{0.0, 1.0, {0.5, 0.5}};
    const Histogram b{0.0, 2.0, {0.5, 0.5}};
    EXPECT_THROW(jsd(a, b), ShapeError);
}

TEST(Histogram, AllZeroGoesToFirstBin) {
    const std::vector<std::vector<double>> set{std::vector<double>(20, 0.0)};
    const auto h = value_histograms(set, set, Aggregation::Hourly);
    EXPECT_EQ(h.real.bins(), 50u);
    EXPECT_EQ(h.real.mass[0], 1.0);
    EXPECT_EQ(jsd(h.real, h.generated), 0.0);
}

TEST(Histogram, HandCountedFixture) {
    // Union range [0, 10] with 5 bins of width 2.
    const std::vector<std::vector<double>> real{{0.0, 1.0, 2.0}, {9.0, 10.0}, {5.0}};
    const std::vector<std::vector<double>> gen{{3.0, 3.5}};
    const auto h = value_histograms(real, gen, Aggregation::Hourly, 5);
    const std::vector<double> expected_real{2.0 / 6, 1.0 / 6, 1.0 / 6, 0.0, 2.0 / 6};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(h.real.mass[i], expected_real[i], 1e-15);
    EXPECT_NEAR(h.generated.mass[1], 1.0, 1e-15);
    const auto annual = value_histograms(real, gen, Aggregation::Annual, 5);
    // Sums 3, 19, 5 and 6.5 over [3, 19].
    EXPECT_DOUBLE_EQ(annual.real.lo, 3.0);
    EXPECT_DOUBLE_EQ(annual.real.hi, 19.0);
    EXPECT_NEAR(annual.real.mass[0], 2.0 / 3, 1e-15);
    EXPECT_NEAR(annual.real.mass[4], 1.0 / 3, 1e-15);
    EXPECT_THROW(value_histograms({}, gen, Aggregation::Hourly), InputError);
}

TEST(PeakHour, NoonPeakGivesUnitMass) {
    std::vector<double> week;
    for (int d = 0; d < 7; ++d) {
        const auto day = day_profile(12 - kFirstSunlitHour);
        week.insert(week.end(), day.begin(), day.end());
    }
    const auto h = peak_hour_distribution(std::vector<std::vector<double>>{week});
    EXPECT_EQ(h.bins(), 17u);
    EXPECT_EQ(h.mass[12 - kFirstSunlitHour], 1.0);
}

TEST(PeakHour, ZeroDaysExcludedAndTiesEarliest) {
    std::vector<double> s(3 * kStepsPerDay, 0.0);
    s[5] = 50.0;
    s[9] = 50.0;                          // tie in day 0 -> step 5
    s[2 * kStepsPerDay + 11] = 10.0;      // day 2 -> step 11; day 1 is all zero
    const auto h = peak_hour_distribution(std::vector<std::vector<double>>{s});
    EXPECT_DOUBLE_EQ(h.mass[5], 0.5);
    EXPECT_DOUBLE_EQ(h.mass[11], 0.5);
    EXPECT_DOUBLE_EQ(h.mass[9], 0.0);
}

TEST(Autocorrelation, ZeroLagIsOne) {
    Rng rng(2);
    std::vector<double> x(365);
    for (auto& v : x) v = rng.uniform(0, 10);
    EXPECT_NEAR(autocorrelation(x, 0), 1.0, 1e-12);
}

TEST(Autocorrelation, AlternatingSeries) {
    std::vector<double> x(365);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = t % 2 == 0 ? 3.0 : -3.0;
    EXPECT_NEAR(autocorrelation(x, 1), -1.0, 2.0 / 365);
    EXPECT_NEAR(autocorrelation(x, 2), 1.0, 3.0 / 365);
}

TEST(Autocorrelation, HandEvaluatedShortSeries) {
    // x = 1, 2, 3, 4: mean 2.5, deviations -1.5 -0.5 0.5 1.5, denominator 5.
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_NEAR(autocorrelation(x, 1), (0.75 - 0.25 + 0.75) / 5.0, 1e-12);
    EXPECT_NEAR(autocorrelation(x, 3), -2.25 / 5.0, 1e-12);
}

TEST(Autocorrelation, ConstantSeriesIsDegenerate) {
    EXPECT_THROW(autocorrelation(std::vector<double>(365, 4.0), 1), DegenerateSeriesError);
    EXPECT_THROW(autocorrelation(std::vector<double>{1, 2}, 2), InputError);
}

TEST(Autocorrelation, MaeIsZeroForTruthItself) {
    Rng rng(3);
    std::vector<double> x(365);
    for (auto& v : x) v = rng.uniform(0, 10);
    EXPECT_EQ(ac_mae(std::vector<std::vector<double>>{x, x}, x), 0.0);
    auto y = x;
    std::reverse(y.begin(), y.end());
    EXPECT_GT(ac_mae(std::vector<std::vector<double>>{y}, x), 0.0);
}

TEST(DailyTotals, SumsEachDay) {
    std::vector<double> year(kHoursPerYear, 1.0);
    const auto d = daily_totals(year);
    ASSERT_EQ(d.size(), 365u);
    for (double v : d) EXPECT_EQ(v, 24.0);
}

TEST(F1, HandCases) {
    EXPECT_DOUBLE_EQ(f1({5, 0, 0, 0}), 1.0);
    EXPECT_NEAR(f1({2, 0, 1, 1}), 4.0 / 6.0, 1e-12);
    EXPECT_EQ(f1({0, 10, 0, 0}), 0.0);
}

TEST(F1, ReportAndMacro) {
    const std::vector<int> truth{0, 0, 1, 1, 2};
    const std::vector<int> pred{0, 1, 1, 1, 0};
    const auto r = f1_report(pred, truth, 3);
    EXPECT_NEAR(r.per_class[0], 2.0 / 4.0, 1e-12);  // TP 1, FP 1, FN 1
    EXPECT_NEAR(r.per_class[1], 4.0 / 5.0, 1e-12);  // TP 2, FP 1
    EXPECT_EQ(r.per_class[2], 0.0);
    EXPECT_NEAR(r.macro, (0.5 + 0.8) / 3.0, 1e-12);
}

TEST(Scenario, LabelsFollowAzimuthAndSkyRatio) {
    EXPECT_EQ(orientation_of({0, 1, 0}), Orientation::North);
    EXPECT_EQ(orientation_of({1, 0, 0}), Orientation::East);
    EXPECT_EQ(orientation_of({0, -1, 0}), Orientation::South);
    EXPECT_EQ(orientation_of({-1, 0, 0}), Orientation::West);
    EXPECT_EQ(orientation_of({std::sin(deg2rad(45)), std::cos(deg2rad(45)), 0}), Orientation::East);
    EXPECT_EQ(orientation_of({-std::sin(deg2rad(45)), std::cos(deg2rad(45)), 0}), Orientation::North);
    EXPECT_EQ(obstruction_of(0.25), Obstruction::High);
    EXPECT_EQ(obstruction_of(0.2501), Obstruction::Low);
    EXPECT_EQ(scenario_class({0, 1, 0}, 0.1), 0);
    EXPECT_EQ(scenario_class({-1, 0, 0}, 0.4), 7);
    EXPECT_EQ(scenario_name(5), "S-low");
}

TEST(Scenario, HighIrradianceWeekIsSummerInTheNorth) {
    const auto w = synthesize_weather(temperate_climate(), 3);
    const int week = high_irradiance_week(w);
    EXPECT_GE(week, 14);
    EXPECT_LE(week, 36);
}

TEST(ScenarioStudy, IdenticalDataGivesIdenticalScores) {
    LabeledSet set;
    for (int k = 0; k < 8; ++k) {
        for (int i = 0; i < 3; ++i) {
            set.features.push_back({float(k), float(i)});
            set.labels.push_back(k);
        }
    }
    const ClassifierRun nearest = [](const LabeledSet& train, const LabeledSet& test) {
        std::vector<int> out;
        for (const auto& f : test.features) {
            std::size_t best = 0;
            float best_d = 1e30f;
            for (std::size_t j = 0; j < train.features.size(); ++j) {
                const float d = std::abs(train.features[j][0] - f[0]);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            out.push_back(train.labels[best]);
        }
        return out;
    };
    const auto study = scenario_study(set, set, set, set, nearest);
    EXPECT_EQ(study.trts.macro, study.trtr.macro);
    EXPECT_EQ(study.tstr.macro, study.tsts.macro);
    EXPECT_DOUBLE_EQ(study.trtr.macro, 1.0);

    LabeledSet missing = set;
    missing.features.pop_back();
    missing.labels.pop_back();
    for (int i = 0; i < 2; ++i) {
        missing.features.pop_back();
        missing.labels.pop_back();
    }
    EXPECT_THROW(scenario_study(missing, set, set, set, nearest), StratificationError);
}

TEST(ScenarioStudy, PermutedLabelsFallToChance) {
    Rng rng(4);
    std::vector<int> truth(4000), pred(4000);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = static_cast<int>(rng.below(8));
        pred[i] = static_cast<int>(rng.below(8));
    }
    EXPECT_NEAR(f1_report(pred, truth, 8).macro, 1.0 / 8.0, 0.03);
}

TEST(BoxStats, Quartiles) {
    const auto b = box_stats({4, 1, 3, 2, 5});
    EXPECT_EQ(b.min, 1);
    EXPECT_EQ(b.q1, 2);
    EXPECT_EQ(b.median, 3);
    EXPECT_EQ(b.q3, 4);
    EXPECT_EQ(b.max, 5);
    EXPECT_DOUBLE_EQ(box_stats({1, 2}).median, 1.5);
}

TEST(WwrExperiment, GroundTruthAsPredictionScoresOne) {
    CubeMask zero, low, high;
    for (int i = 0; i < 200; ++i) low.pixels[static_cast<std::size_t>(i)] = Category::Glazing;
    for (int i = 0; i < 600; ++i) high.pixels[static_cast<std::size_t>(i)] = Category::Glazing;
    const std::vector<WwrCase> cases{{zero, low, high}};
    const TraversalRun sweep = [&](const CubeMask&) {
        std::vector<CubeMask> out(18, zero);
        out.push_back(low);
        out.push_back(high);
        return out;
    };
    const auto e = wwr_experiment(cases, sweep, sweep);
    EXPECT_EQ(e.vae_low[0], 1.0);
    EXPECT_EQ(e.gan_high[0], 1.0);
    EXPECT_EQ(e.gan_high_box.median, 1.0);
}

TEST(Quantize, SnapsToPalette) {
    std::vector<float> gray(128 * 128, 250.0f);
    gray[0] = 90.0f;
    gray[1] = 160.0f;
    const auto m = quantize(gray);
    EXPECT_EQ(m.pixels[0], Category::Opaque);
    EXPECT_EQ(m.pixels[1], Category::Glazing);
    EXPECT_EQ(m.pixels[2], Category::Sky);
}
