#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbansolar/mask.hpp"
#include "urbansolar/weather.hpp"

namespace urbansolar {

// ---- pixel metrics -------------------------------------------------------

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
};

/// One-vs-rest counts for `category`. Throws ShapeError on size mismatch.
ConfusionCounts confusion(std::span<const Category> pred, std::span<const Category> truth, Category category);

double pixel_accuracy(std::span<const Category> pred, std::span<const Category> truth);
double pixel_accuracy(const CubeMask& pred, const CubeMask& truth);

/// TP / (TP + FP + FN); empty when the category appears in neither raster.
std::optional<double> iou(std::span<const Category> pred, std::span<const Category> truth, Category category);
std::optional<double> iou(const CubeMask& pred, const CubeMask& truth, Category category);

/// Mean over the categories present in at least one raster.
double mean_iou(std::span<const Category> pred, std::span<const Category> truth);
double mean_iou(const CubeMask& pred, const CubeMask& truth);

/// Snaps a generated grayscale image to the palette, pixel by pixel.
CubeMask quantize(std::span<const float> gray);

// ---- distributions -------------------------------------------------------

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> mass;  ///< normalized to sum 1

    std::size_t bins() const { return mass.size(); }
};

inline constexpr int kHistogramBins = 50;

/// Equal-width bins over [lo, hi]; the top edge belongs to the last bin. A
/// zero-width range puts everything into bin 0. Throws InputError when empty.
Histogram histogram(std::span<const double> values, double lo, double hi, int bins = kHistogramBins);

enum class JsdVariant {
    Summed,  ///< KL(P||M) + KL(Q||M), range [0, 2 ln 2]
    Halved,  ///< half of the above, range [0, ln 2]
};

const char* jsd_variant_name(JsdVariant variant);

/// Natural log, 0 log 0 = 0. Throws ShapeError when the grids differ.
double jsd(const Histogram& p, const Histogram& q, JsdVariant variant = JsdVariant::Summed);
double jsd(std::span<const double> p, std::span<const double> q, JsdVariant variant = JsdVariant::Summed);

enum class Aggregation { Hourly, Annual };

struct HistogramPair {
    Histogram real;
    Histogram generated;
};

/// Hourly pools every value of every series; annual pools one sum per series.
/// Both histograms share the bin edges of the union range.
HistogramPair value_histograms(std::span<const std::vector<double>> real, std::span<const std::vector<double>> generated,
                               Aggregation aggregation, int bins = kHistogramBins);

/// Series are sequences of 17-step sunlit days (a weekly patch, or the
/// concatenated patches of a year). Per day the argmax step is counted
/// (ties go to the earliest hour); days without irradiance are skipped. The
/// histogram spans clock hours [4, 21) with one bin per hour. A set with no
/// sunlit day yields an all-zero mass vector.
Histogram peak_hour_distribution(std::span<const std::vector<double>> series);

/// Concatenation of the 52 weekly sunlit patches of an annual series.
std::vector<double> sunlit_hours(std::span<const double> annual);

/// 365 daily sums of an hourly year.
std::vector<double> daily_totals(std::span<const double> annual);

/// Lag-k autocorrelation sum_{t}(x_t - m)(x_{t+k} - m) / sum_t (x_t - m)^2.
/// Throws DegenerateSeriesError on zero variance and InputError when k is
/// outside [0, T-1].
double autocorrelation(std::span<const double> x, int k);

/// Lags 1..T-1.
std::vector<double> autocorrelation_curve(std::span<const double> x);

/// Mean over lags 1..T-1 and members of |r_k(member) - r_k(truth)|, on daily totals.
double ac_mae(std::span<const std::vector<double>> generated_daily, std::span<const double> truth_daily);

// ---- classification ------------------------------------------------------

/// 2TP / (2TP + FP + FN); 0 with a logged warning when all three are zero.
double f1(const ConfusionCounts& counts);

struct F1Report {
    std::vector<double> per_class;
    double macro = 0.0;
};

F1Report f1_report(std::span<const int> predicted, std::span<const int> truth, int classes);

enum class Orientation { North, East, South, West };
enum class Obstruction { High, Low };

inline constexpr int kScenarioClasses = 8;
inline constexpr double kHighObstructionSkyRatio = 0.25;

/// Azimuth in degrees clockwise from north of a facade normal (x east, y north).
double normal_azimuth(Vec3 normal);
Orientation orientation_of(Vec3 normal);
Obstruction obstruction_of(double sky_ratio);
/// orientation * 2 + obstruction, i.e. N-high = 0 ... W-low = 7.
int scenario_class(Vec3 normal, double sky_ratio);
std::string scenario_name(int scenario);

/// Week (0..51) with the largest mean GHI.
int high_irradiance_week(const WeatherSeries& weather);

struct LabeledSet {
    std::vector<std::vector<float>> features;
    std::vector<int> labels;
};

/// Trains on the first set and predicts the labels of the second.
using ClassifierRun = std::function<std::vector<int>(const LabeledSet& train, const LabeledSet& test)>;

struct ScenarioStudy {
    F1Report trtr;
    F1Report tsts;
    F1Report trts;
    F1Report tstr;
};

/// Train/test regime crosses between real and synthetic data. Throws
/// StratificationError when a class is missing from either training set.
ScenarioStudy scenario_study(const LabeledSet& real_train, const LabeledSet& real_test, const LabeledSet& synth_train,
                             const LabeledSet& synth_test, const ClassifierRun& run, int classes = kScenarioClasses);

// ---- WWR traversal experiment --------------------------------------------

struct WwrCase {
    CubeMask zero;  ///< mask at wwr 0, the traversal input
    CubeMask low;
    CubeMask high;
};

/// Produces the traversal sweep of one zero-WWR mask.
using TraversalRun = std::function<std::vector<CubeMask>(const CubeMask& zero)>;

struct BoxStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

/// Linear interpolation between order statistics. Throws InputError when empty.
BoxStats box_stats(std::vector<double> values);

/// Largest glazing IoU between any sweep element and `truth`; 0 when no element
/// shares glazing with it.
double best_glazing_iou(std::span<const CubeMask> sweep, const CubeMask& truth);

struct WwrExperiment {
    std::vector<double> vae_low, vae_high, gan_low, gan_high;  ///< one value per case
    BoxStats vae_low_box, vae_high_box, gan_low_box, gan_high_box;
};

WwrExperiment wwr_experiment(std::span<const WwrCase> cases, const TraversalRun& vae_path, const TraversalRun& gan_path);

}  // namespace urbansolar
