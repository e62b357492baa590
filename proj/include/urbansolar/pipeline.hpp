#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "urbansolar/config.hpp"
#include "urbansolar/dataset.hpp"
#include "urbansolar/editgan.hpp"
#include "urbansolar/fidelity.hpp"
#include "urbansolar/repnet.hpp"
#include "urbansolar/tsgan.hpp"

namespace urbansolar {

/// JSON record every command leaves in logs/{command}.json. `metrics` holds
/// only values that are a pure function of config and seed.
struct RunLog {
    std::string command;
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    nlohmann::json durations = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::array();
    nlohmann::json details = nlohmann::json::object();  ///< bulky diagnostics (loss curves, tables)

    nlohmann::json to_json() const;
};

/// Exclusive claim on a run directory, released on destruction. A lock left by
/// a dead process is taken over.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

/// Sampled sensor point with its scenario label.
struct SitePoint {
    SensorPoint point;
    double screen_sky_ratio = 0.0;  ///< low-resolution estimate used for selection
    double sky_ratio = 0.0;         ///< full-resolution zero-WWR fisheye
    int scenario = 0;

    nlohmann::json to_json() const;
    static SitePoint from_json(const nlohmann::json& j);
};

struct GenerateOptions {
    std::string point;             ///< sensor point id
    std::string weeks = "all";     ///< "all" or comma-separated week indices
    int ensemble = 10;
    int wwr_level = 0;
    int climate = 0;
    std::optional<std::filesystem::path> out;
};

struct BenchRow {
    std::string stage;
    std::vector<double> seconds;  ///< one entry per point
};

/// Human-readable per-stage table (count, mean, p95, total in ms).
std::string format_bench_table(const std::vector<BenchRow>& rows);

/// The pipeline over one run directory. Every public stage reads its inputs
/// from the directory, writes artifacts plus a run log and returns the log.
class Pipeline {
public:
    explicit Pipeline(RunConfig config);

    const RunConfig& config() const { return config_; }
    std::filesystem::path dir() const { return config_.run_dir; }
    std::filesystem::path path(const std::string& relative) const { return config_.run_dir / relative; }

    RunLog scene_build();
    RunLog sample_points();
    RunLog render_masks();
    RunLog simulate();
    RunLog dataset_build();
    RunLog train_vae();
    RunLog encode();
    RunLog train_idgan();
    RunLog train_tsgan();
    RunLog generate(const GenerateOptions& options);
    RunLog evaluate();
    RunLog wwr_study();
    RunLog bench(int points);

    /// Every stage from scene-build to train-tsgan in order.
    std::vector<RunLog> build_all();

    // artifact readers
    LOD1Scene load_scene() const;
    std::vector<SitePoint> load_points() const;
    std::vector<WeatherSeries> load_weather() const;
    /// Annual oracle series of one climate, keyed by (point, wwr level).
    SeriesTable load_oracle(int climate) const;
    Dataset load_dataset() const;
    VaeModel load_vae() const;
    IdganModel load_idgan() const;
    TsganModel load_tsgan() const;

    std::filesystem::path fisheye_path(const std::string& point_id, int level) const;
    std::filesystem::path cube_path(const std::string& point_id, int level) const;

private:
    RunLog run(const std::string& command, bool exclusive, const std::function<void(RunLog&)>& body);

    RunConfig config_;
};

/// Mean pixel accuracy of quantized regenerations (encode, generate with
/// seeded noise, snap to the palette) against the inputs.
double regeneration_accuracy(VaeModel& vae, IdganModel& generator, std::span<const CubeMask> masks, std::uint64_t seed);

/// UsageError unless the dataset's image codes were filled by `encode`.
void require_codes(const Dataset& dataset);

/// 52 conditions of a (point, wwr level, climate) group.
std::vector<Condition> weekly_conditions(const Dataset& dataset, int point, int wwr_level, int climate,
                                         const NormalizationStats& stats);

/// Indices of the k weeks with the largest mean GHI, best first.
std::vector<int> top_irradiance_weeks(const WeatherSeries& weather, int k);

/// Per-group fidelity of annual ensembles against oracle series.
struct SeriesFidelity {
    double hourly_jsd = 0.0;
    double annual_jsd = 0.0;
    double peak_hour_jsd = 0.0;
    double ac_mae = 0.0;
    int groups = 0;
    int degenerate = 0;  ///< groups skipped by AC-MAE for a constant series

    nlohmann::json to_json() const;
};

/// Hourly/peak statistics pool the sunlit hours of every series; annual pools
/// one total per series; AC-MAE averages per-group values on daily totals.
SeriesFidelity series_fidelity(std::span<const std::vector<double>> truth,
                               std::span<const std::vector<std::vector<double>>> ensembles);

}  // namespace urbansolar
