#include "urbansolar/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "urbansolar/error.hpp"
#include "urbansolar/rng.hpp"
#include "pipeline_io.hpp"

namespace urbansolar {

namespace {

using nlohmann::json;

json without_seed(json j) {
    j.erase("seed");
    return j;
}

json city_json(const CityParams& c) {
    return {{"blocks_x", c.blocks_x},           {"blocks_y", c.blocks_y},
            {"lots_per_side", c.lots_per_side}, {"extent", c.extent},
            {"street_width", c.street_width},   {"footprint_min", c.footprint_min},
            {"footprint_max", c.footprint_max}, {"height_min", c.height_min},
            {"height_max", c.height_max}};
}

CityParams city_from(const json& j) {
    CityParams c;
    c.blocks_x = j.at("blocks_x").get<int>();
    c.blocks_y = j.at("blocks_y").get<int>();
    c.lots_per_side = j.at("lots_per_side").get<int>();
    c.extent = j.at("extent").get<double>();
    c.street_width = j.at("street_width").get<double>();
    c.footprint_min = j.at("footprint_min").get<double>();
    c.footprint_max = j.at("footprint_max").get<double>();
    c.height_min = j.at("height_min").get<double>();
    c.height_max = j.at("height_max").get<double>();
    c.validate();
    return c;
}

json climate_json(const ClimateParams& c) {
    return {{"name", c.name},
            {"latitude", c.latitude},
            {"longitude", c.longitude},
            {"mean_clearness", c.mean_clearness},
            {"clearness_spread", c.clearness_spread},
            {"persistence", c.persistence},
            {"hourly_noise", c.hourly_noise}};
}

ClimateParams climate_from(const json& j) {
    ClimateParams c;
    c.name = j.at("name").get<std::string>();
    c.latitude = j.at("latitude").get<double>();
    c.longitude = j.at("longitude").get<double>();
    c.mean_clearness = j.at("mean_clearness").get<double>();
    c.clearness_spread = j.at("clearness_spread").get<double>();
    c.persistence = j.at("persistence").get<double>();
    c.hourly_noise = j.at("hourly_noise").get<double>();
    return c;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    return p.is_absolute() ? p : base / p;
}

void require_file(const std::filesystem::path& p, const std::string& key) {
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(key + " points to a missing file: " + p.string());
}

}  // namespace

std::vector<GlazingSpec> MaskSection::glazings() const {
    std::vector<GlazingSpec> out;
    for (double w : wwr_levels) {
        GlazingSpec g;
        g.wwr = w;
        g.rows_per_storey = rows_per_storey;
        g.bay_width = bay_width;
        g.storey_height = storey_height;
        g.validate();
        out.push_back(g);
    }
    return out;
}

std::uint64_t RunConfig::stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }

json RunConfig::to_json() const {
    json climates_j = json::array();
    for (const auto& c : climates) {
        climates_j.push_back({{"name", c.name}, {"epw", c.epw.string()}, {"synthetic", climate_json(c.synthetic)}});
    }
    return {
        {"schema_version", schema_version},
        {"seed", seed},
        {"run_dir", run_dir.string()},
        {"scene", {{"source", scene.source}, {"geojson", scene.geojson.string()}, {"city", city_json(scene.city)}}},
        {"sampling",
         {{"points", sampling.points},
          {"spacing", sampling.spacing},
          {"offset", sampling.offset},
          {"screen_resolution", sampling.screen_resolution},
          {"max_screened", sampling.max_screened},
          {"stratify", sampling.stratify}}},
        {"masks",
         {{"fisheye_resolution", masks.fisheye_resolution},
          {"wwr_levels", masks.wwr_levels},
          {"rows_per_storey", masks.rows_per_storey},
          {"bay_width", masks.bay_width},
          {"storey_height", masks.storey_height},
          {"ray_cell", masks.ray_cell}}},
        {"climates", climates_j},
        {"albedos", {{"opaque", albedos.opaque}, {"glazing", albedos.glazing}, {"ground", albedos.ground}}},
        {"dataset", {{"stratified_split", stratified_split}}},
        {"vae", {{"arch", vae_arch.to_json()}, {"train", without_seed(vae.to_json())}}},
        {"idgan", {{"arch", gan_arch.to_json()}, {"train", without_seed(idgan.to_json())}}},
        {"tsgan", {{"arch", tsgan_arch.to_json()}, {"train", without_seed(tsgan.to_json())}}},
        {"classifier", without_seed(classifier.to_json())},
        {"evaluation",
         {{"ensemble", evaluation.ensemble},
          {"study_weeks", evaluation.study_weeks},
          {"traversal_steps", evaluation.traversal_steps},
          {"traversal_range", evaluation.traversal_range}}},
        {"serve", {{"host", serve.host}, {"port", serve.port}, {"threads", serve.threads}}},
    };
}

json default_config_json() {
    RunConfig c;
    c.climates.push_back({"temperate", {}, temperate_climate()});
    c.climates.push_back({"tropical", {}, tropical_climate()});
    c.vae.iterations = 3000;
    c.vae.flip_augment = true;
    c.idgan.iterations = 4800;
    c.idgan.batch = 16;
    c.tsgan.iterations = 10000;
    return c.to_json();
}

std::optional<std::string> first_missing_key(const json& config, const json& reference) {
    if (!reference.is_object()) return std::nullopt;
    if (!config.is_object()) return std::string{};
    for (const auto& [key, ref] : reference.items()) {
        if (!config.contains(key)) return key;
        const auto& value = config.at(key);
        std::optional<std::string> nested;
        if (ref.is_object()) {
            nested = first_missing_key(value, ref);
        } else if (ref.is_array() && !ref.empty() && ref.front().is_object() && value.is_array()) {
            for (std::size_t i = 0; i < value.size() && !nested; ++i) {
                if (auto m = first_missing_key(value[i], ref.front())) {
                    nested = "[" + std::to_string(i) + "]" + (m->empty() ? "" : "." + *m);
                }
            }
            if (nested) return key + *nested;
        }
        if (nested) return nested->empty() ? key : key + "." + *nested;
    }
    return std::nullopt;
}

RunConfig parse_config(const json& j, const std::filesystem::path& base) {
    if (auto missing = first_missing_key(j, default_config_json())) {
        throw ConfigError("missing config key: " + *missing);
    }
    RunConfig c;
    try {
        c.schema_version = j.at("schema_version").get<int>();
        if (c.schema_version != RunConfig::kSchemaVersion) {
            throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
        }
        c.seed = j.at("seed").get<std::uint64_t>();

        c.run_dir = j.at("run_dir").get<std::string>();
        if (c.run_dir.is_relative()) {
            const char* root = std::getenv(kRunRootVariable);
            c.run_dir = (root && *root) ? std::filesystem::path(root) / c.run_dir : base / c.run_dir;
        }

        const auto& s = j.at("scene");
        c.scene.source = s.at("source").get<std::string>();
        c.scene.city = city_from(s.at("city"));
        if (c.scene.source == "geojson") {
            c.scene.geojson = resolve(s.at("geojson").get<std::string>(), base);
            require_file(c.scene.geojson, "scene.geojson");
        } else if (c.scene.source != "synthetic") {
            throw ConfigError("scene.source must be 'synthetic' or 'geojson'");
        }

        const auto& sp = j.at("sampling");
        c.sampling.points = sp.at("points").get<int>();
        c.sampling.spacing = sp.at("spacing").get<double>();
        c.sampling.offset = sp.at("offset").get<double>();
        c.sampling.screen_resolution = sp.at("screen_resolution").get<int>();
        c.sampling.max_screened = sp.at("max_screened").get<int>();
        c.sampling.stratify = sp.at("stratify").get<bool>();
        if (c.sampling.points < 5) throw ConfigError("sampling.points must be at least 5");
        if (!(c.sampling.spacing > 0.0)) throw ConfigError("sampling.spacing must be positive");
        if (c.sampling.screen_resolution < 8) throw ConfigError("sampling.screen_resolution must be at least 8");

        const auto& m = j.at("masks");
        c.masks.fisheye_resolution = m.at("fisheye_resolution").get<int>();
        c.masks.wwr_levels = m.at("wwr_levels").get<std::vector<double>>();
        c.masks.rows_per_storey = m.at("rows_per_storey").get<int>();
        c.masks.bay_width = m.at("bay_width").get<double>();
        c.masks.storey_height = m.at("storey_height").get<double>();
        c.masks.ray_cell = m.at("ray_cell").get<double>();
        if (c.masks.wwr_levels.empty()) throw ConfigError("masks.wwr_levels is empty");
        if (c.masks.fisheye_resolution < 16) throw ConfigError("masks.fisheye_resolution must be at least 16");
        c.masks.glazings();

        for (const auto& cj : j.at("climates")) {
            ClimateSection cs;
            cs.name = cj.at("name").get<std::string>();
            cs.synthetic = climate_from(cj.at("synthetic"));
            const auto epw = cj.at("epw").get<std::string>();
            if (!epw.empty()) {
                cs.epw = resolve(epw, base);
                require_file(cs.epw, "climates." + cs.name + ".epw");
            }
            c.climates.push_back(cs);
        }
        if (c.climates.empty()) throw ConfigError("climates is empty");

        const auto& a = j.at("albedos");
        c.albedos = {a.at("opaque").get<double>(), a.at("glazing").get<double>(), a.at("ground").get<double>()};
        c.stratified_split = j.at("dataset").at("stratified_split").get<bool>();

        c.vae_arch = VaeArch::from_json(j.at("vae").at("arch"));
        c.vae = VaeConfig::from_json(j.at("vae").at("train"));
        c.gan_arch = GanArch::from_json(j.at("idgan").at("arch"));
        c.idgan = IdganConfig::from_json(j.at("idgan").at("train"));
        c.tsgan_arch = TsganArch::from_json(j.at("tsgan").at("arch"));
        c.tsgan = TsganConfig::from_json(j.at("tsgan").at("train"));
        c.classifier = ClassifierConfig::from_json(j.at("classifier"));
        c.vae.seed = c.stage_seed("train-vae");
        c.idgan.seed = c.stage_seed("train-idgan");
        c.tsgan.seed = c.stage_seed("train-tsgan");
        c.classifier.seed = c.stage_seed("classifier");

        const auto& e = j.at("evaluation");
        c.evaluation.ensemble = e.at("ensemble").get<int>();
        c.evaluation.study_weeks = e.at("study_weeks").get<int>();
        c.evaluation.traversal_steps = e.at("traversal_steps").get<int>();
        c.evaluation.traversal_range = e.at("traversal_range").get<double>();
        if (c.evaluation.ensemble < 1) throw ConfigError("evaluation.ensemble must be at least 1");
        if (c.evaluation.study_weeks < 1 || c.evaluation.study_weeks > 52) {
            throw ConfigError("evaluation.study_weeks must be in 1..52");
        }
        if (c.evaluation.traversal_steps < 2) throw ConfigError("evaluation.traversal_steps must be at least 2");

        const auto& sv = j.at("serve");
        c.serve.host = sv.at("host").get<std::string>();
        c.serve.port = sv.at("port").get<int>();
        c.serve.threads = sv.at("threads").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config value: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, std::filesystem::absolute(path).parent_path());
}

std::string config_sha256(const RunConfig& config) {
    // where the run lives is not part of what it computes
    auto j = config.to_json();
    j.erase("run_dir");
    return sha256_text(j.dump());
}

}  // namespace urbansolar
