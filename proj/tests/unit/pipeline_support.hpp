#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "urbansolar/config.hpp"
#include "urbansolar/pipeline.hpp"

namespace urbansolar::testing {

/// Desk-second run: 24 points, coarse masks, a handful of training steps.
inline nlohmann::json mini_config_json(const std::filesystem::path& run_dir) {
    auto j = default_config_json();
    j["run_dir"] = run_dir.string();
    j["sampling"]["points"] = 24;
    j["sampling"]["screen_resolution"] = 32;
    j["masks"]["fisheye_resolution"] = 64;
    j["vae"]["arch"]["channels"] = {4, 4, 8, 8, 8};
    j["vae"]["train"]["iterations"] = 3;
    j["vae"]["train"]["batch"] = 4;
    j["idgan"]["arch"]["generator_channels"] = {8, 8, 8, 4, 4};
    j["idgan"]["arch"]["discriminator_channels"] = {4, 4, 8, 8, 8};
    j["idgan"]["train"]["iterations"] = 3;
    j["idgan"]["train"]["batch"] = 4;
    j["tsgan"]["arch"]["hidden"] = 8;
    j["tsgan"]["arch"]["aux_hidden"] = 8;
    j["tsgan"]["arch"]["critic_hidden"] = 16;
    j["tsgan"]["train"]["iterations"] = 3;
    j["tsgan"]["train"]["batch"] = 20;
    j["classifier"]["epochs"] = 20;
    return j;
}

inline Pipeline mini_pipeline(const std::string& name) {
    const auto dir = temp_dir(name);
    return Pipeline(parse_config(mini_config_json(dir / "run"), dir));
}

}  // namespace urbansolar::testing
