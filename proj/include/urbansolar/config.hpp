#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "urbansolar/classifier.hpp"
#include "urbansolar/editgan.hpp"
#include "urbansolar/oracle.hpp"
#include "urbansolar/repnet.hpp"
#include "urbansolar/scene.hpp"
#include "urbansolar/tsgan.hpp"
#include "urbansolar/weather.hpp"

namespace urbansolar {

/// Environment variable that anchors relative run directories.
inline constexpr const char* kRunRootVariable = "URBANSOLAR_RUN_ROOT";

struct SceneSection {
    std::string source = "synthetic";  ///< "synthetic" or "geojson"
    std::filesystem::path geojson;
    CityParams city;
};

struct SamplingSection {
    int points = 64;
    double spacing = 3.0;
    double offset = 0.05;
    int screen_resolution = 48;   ///< fisheye size used to classify candidates
    int max_screened = 1500;      ///< candidates inspected before giving up on a quota
    bool stratify = true;         ///< balance the scenario classes
};

struct MaskSection {
    int fisheye_resolution = 160;
    std::vector<double> wwr_levels{0.0, 0.2, 0.45};
    int rows_per_storey = 1;
    double bay_width = 3.0;
    double storey_height = 3.0;
    double ray_cell = 8.0;

    std::vector<GlazingSpec> glazings() const;
};

struct ClimateSection {
    std::string name;
    std::filesystem::path epw;  ///< empty: synthesize from `synthetic`
    ClimateParams synthetic;
};

struct EvaluationSection {
    int ensemble = 10;
    int study_weeks = 4;          ///< high-irradiance weeks per climate in the scenario study
    int traversal_steps = 20;
    double traversal_range = 3.0;
};

struct ServeSection {
    std::string host = "127.0.0.1";
    int port = 8080;
    int threads = 4;
};

/// Everything a run needs. Training seeds are not configured per stage: each
/// stage derives its stream from `seed`.
struct RunConfig {
    static constexpr int kSchemaVersion = 1;

    int schema_version = kSchemaVersion;
    std::uint64_t seed = 7;
    std::filesystem::path run_dir = "runs/toy";
    SceneSection scene;
    SamplingSection sampling;
    MaskSection masks;
    std::vector<ClimateSection> climates;
    Albedos albedos;
    bool stratified_split = true;
    VaeArch vae_arch;
    VaeConfig vae;
    GanArch gan_arch;
    IdganConfig idgan;
    TsganArch tsgan_arch;
    TsganConfig tsgan;
    ClassifierConfig classifier;
    EvaluationSection evaluation;
    ServeSection serve;

    /// Stage seed derived from the master seed.
    std::uint64_t stage_seed(std::string_view stage) const;
    nlohmann::json to_json() const;
};

/// The toy fixture: synthetic city, two synthetic climates, desk budgets.
nlohmann::json default_config_json();

/// Dotted path of the first key of `reference` absent from `config`, if any.
/// Arrays of objects are checked element-wise against the first reference element.
std::optional<std::string> first_missing_key(const nlohmann::json& config, const nlohmann::json& reference);

/// Strict parse: every key of the default layout must be present (ConfigError
/// naming the key), values are validated, referenced files must exist.
/// Relative paths resolve against `base`; a relative run_dir resolves against
/// the run-root variable when set, else against `base`.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base);
RunConfig load_config(const std::filesystem::path& path);

/// SHA-256 of the resolved configuration minus run_dir; run logs record it as an input.
std::string config_sha256(const RunConfig& config);

}  // namespace urbansolar
