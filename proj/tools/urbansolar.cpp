// Command-line entry point: one subcommand per pipeline stage plus the
// inference service.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <set>

#include "urbansolar/config.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/pipeline.hpp"
#include "urbansolar/service.hpp"

using namespace urbansolar;

namespace {

const std::vector<std::pair<std::string, std::string>> kCommands = {
    {"scene-build", "build the LOD1 scene (synthetic city or GeoJSON)"},
    {"sample-points", "sample facade sensor points, balanced over scenario classes"},
    {"render-masks", "render fisheye and cube masks at every WWR level"},
    {"simulate", "compute oracle hourly irradiance for every point, level and climate"},
    {"dataset-build", "assemble weekly records, split by point, fit normalization"},
    {"train-vae", "train the categorical beta-VAE encoder"},
    {"encode", "fill the dataset's image codes with the trained encoder"},
    {"train-idgan", "train the image generator against the frozen encoder"},
    {"train-tsgan", "train the conditional time-series generator"},
    {"generate", "write an ensemble CSV for one point"},
    {"evaluate", "image, series and scenario-study metrics on the test split"},
    {"wwr-study", "find the WWR latent dimension and score traversals"},
    {"bench", "per-stage timing table"},
    {"serve", "HTTP inference service"},
};

std::string usage() {
    std::string out = "usage: urbansolar <command> --config FILE [options]\n\ncommands:\n";
    for (const auto& [name, help] : kCommands) {
        out += "  " + name + std::string(16 - std::min<std::size_t>(15, name.size()), ' ') + help + "\n";
    }
    out += "\nrun 'urbansolar <command> --help' for command options\n";
    return out;
}

void print_log(const RunLog& log) { std::cout << nlohmann::json(log.metrics).dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << usage();
        return 2;
    }
    const std::string command = argv[1];
    if (command == "--help" || command == "-h" || command == "help") {
        std::cout << usage();
        return 0;
    }
    const bool known = std::any_of(kCommands.begin(), kCommands.end(), [&](const auto& c) { return c.first == command; });
    if (!known) {
        std::cerr << "unknown command '" << command << "'\n\n" << usage();
        return 2;
    }

    CLI::App app{"urbansolar " + command, "urbansolar " + command};
    std::string config_path;
    std::string run_dir;
    app.add_option("--config", config_path, "run configuration (JSON)")->required();
    app.add_option("--run-dir", run_dir, "override the configured run directory");

    GenerateOptions gen;
    std::string out_path;
    int ensemble = -1;
    int bench_points = 10;
    std::string host;
    int port = -1;
    if (command == "generate") {
        app.add_option("--point", gen.point, "sensor point id")->required();
        app.add_option("--weeks", gen.weeks, "'all' or comma-separated week indices")->capture_default_str();
        app.add_option("--ensemble", ensemble, "members (default: evaluation.ensemble)");
        app.add_option("--wwr-level", gen.wwr_level, "WWR level index")->capture_default_str();
        app.add_option("--climate", gen.climate, "climate index")->capture_default_str();
        app.add_option("--out", out_path, "CSV path (default: outputs/generate_<point>.csv)");
    } else if (command == "bench") {
        app.add_option("--points", bench_points, "points to time")->capture_default_str();
    } else if (command == "serve") {
        app.add_option("--host", host, "bind address (default: serve.host)");
        app.add_option("--port", port, "port (default: serve.port)");
    }

    try {
        app.parse(argc - 1, argv + 1);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        auto config = load_config(config_path);
        if (!run_dir.empty()) config.run_dir = std::filesystem::absolute(run_dir);
        Pipeline pipeline(config);
        if (command == "scene-build") print_log(pipeline.scene_build());
        if (command == "sample-points") print_log(pipeline.sample_points());
        if (command == "render-masks") print_log(pipeline.render_masks());
        if (command == "simulate") print_log(pipeline.simulate());
        if (command == "dataset-build") print_log(pipeline.dataset_build());
        if (command == "train-vae") print_log(pipeline.train_vae());
        if (command == "encode") print_log(pipeline.encode());
        if (command == "train-idgan") print_log(pipeline.train_idgan());
        if (command == "train-tsgan") print_log(pipeline.train_tsgan());
        if (command == "evaluate") print_log(pipeline.evaluate());
        if (command == "wwr-study") print_log(pipeline.wwr_study());
        if (command == "generate") {
            gen.ensemble = ensemble > 0 ? ensemble : config.evaluation.ensemble;
            if (!out_path.empty()) gen.out = out_path;
            const auto log = pipeline.generate(gen);
            std::cout << log.outputs.at(0).get<std::string>() << "\n";
        }
        if (command == "bench") {
            const auto log = pipeline.bench(bench_points);
            std::cout << log.details.at("table").get<std::string>();
        }
        if (command == "serve") {
            const auto service = InferenceService::open(pipeline);
            HttpServer server(*service, config.serve.threads);
            const auto bind_host = host.empty() ? config.serve.host : host;
            const int bound = server.bind(bind_host, port >= 0 ? port : config.serve.port);
            std::cout << "serving on http://" << bind_host << ":" << bound << " (fingerprint " << service->fingerprint()
                      << ")" << std::endl;
            server.listen();
        }
    } catch (const Error& e) {
        std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
