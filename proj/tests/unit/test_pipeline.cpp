#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pipeline_support.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/pipeline.hpp"

using namespace urbansolar;
using namespace urbansolar::testing;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read(const std::filesystem::path& p) { return json::parse(slurp(p)); }

std::string config_error(json j) {
    try {
        parse_config(j, std::filesystem::temp_directory_path());
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

// ---- config ------------------------------------------------------------------

TEST(Config, DefaultLayoutParses) {
    const auto c = parse_config(default_config_json(), "/tmp");
    EXPECT_EQ(c.climates.size(), 2u);
    EXPECT_EQ(c.masks.wwr_levels.size(), 3u);
    EXPECT_EQ(c.evaluation.ensemble, 10);
    EXPECT_EQ(c.evaluation.traversal_steps, 20);
}

TEST(Config, ShippedToyConfigHasTheFullLayout) {
    const std::filesystem::path path = URBANSOLAR_SOURCE "/configs/toy.json";
    const auto j = read(path);
    EXPECT_FALSE(first_missing_key(j, default_config_json()));
    EXPECT_FALSE(first_missing_key(default_config_json(), j));
    const auto c = load_config(path);
    EXPECT_EQ(c.sampling.points, 64);
}

TEST(Config, MissingKeyIsNamed) {
    auto j = default_config_json();
    j["vae"]["train"].erase("beta");
    EXPECT_NE(config_error(j).find("vae.train.beta"), std::string::npos);

    j = default_config_json();
    j["climates"][1]["synthetic"].erase("latitude");
    EXPECT_NE(config_error(j).find("climates[1].synthetic.latitude"), std::string::npos);

    j = default_config_json();
    j.erase("seed");
    EXPECT_NE(config_error(j).find("missing config key: seed"), std::string::npos);
}

TEST(Config, BadValuesAreRejected) {
    auto j = default_config_json();
    j["schema_version"] = 99;
    EXPECT_FALSE(config_error(j).empty());
    j = default_config_json();
    j["sampling"]["points"] = "many";
    EXPECT_FALSE(config_error(j).empty());
    j = default_config_json();
    j["masks"]["wwr_levels"] = json::array();
    EXPECT_FALSE(config_error(j).empty());
}

TEST(Config, ReferencedFilesMustExist) {
    auto j = default_config_json();
    j["scene"]["source"] = "geojson";
    j["scene"]["geojson"] = "no/such/city.geojson";
    EXPECT_NE(config_error(j).find("scene.geojson"), std::string::npos);

    j = default_config_json();
    j["climates"][0]["epw"] = "missing.epw";
    EXPECT_NE(config_error(j).find("epw"), std::string::npos);

    j = default_config_json();
    j["scene"]["source"] = "geojson";
    j["scene"]["geojson"] = URBANSOLAR_FIXTURES "/three_buildings.geojson";
    EXPECT_NO_THROW(parse_config(j, "/tmp"));
}

TEST(Config, RunRootVariableAnchorsRelativeRunDirs) {
    auto j = default_config_json();
    j["run_dir"] = "runs/a";
    ::setenv(kRunRootVariable, "/srv/root", 1);
    EXPECT_EQ(parse_config(j, "/base").run_dir, std::filesystem::path("/srv/root/runs/a"));
    ::unsetenv(kRunRootVariable);
    EXPECT_EQ(parse_config(j, "/base").run_dir, std::filesystem::path("/base/runs/a"));
    j["run_dir"] = "/abs/run";
    ::setenv(kRunRootVariable, "/srv/root", 1);
    EXPECT_EQ(parse_config(j, "/base").run_dir, std::filesystem::path("/abs/run"));
    ::unsetenv(kRunRootVariable);
}

TEST(Config, StageSeedsComeFromTheMasterSeed) {
    auto j = default_config_json();
    const auto a = parse_config(j, "/tmp");
    const auto b = parse_config(j, "/tmp");
    EXPECT_EQ(a.vae.seed, b.vae.seed);
    EXPECT_NE(a.vae.seed, a.idgan.seed);
    j["seed"] = 8;
    EXPECT_NE(parse_config(j, "/tmp").vae.seed, a.vae.seed);
}

// ---- lock --------------------------------------------------------------------

TEST(Lock, SecondClaimFailsUntilReleased) {
    const auto dir = temp_dir("lock");
    {
        RunLock first(dir);
        EXPECT_THROW(RunLock second(dir), UsageError);
    }
    EXPECT_NO_THROW(RunLock again(dir));
}

TEST(Lock, LockOfADeadProcessIsTakenOver) {
    const auto dir = temp_dir("stale_lock");
    const pid_t child = ::fork();
    if (child == 0) ::_exit(0);
    ::waitpid(child, nullptr, 0);
    std::ofstream(dir / ".lock") << child;
    EXPECT_NO_THROW(RunLock taken(dir));
}

// ---- stages on a mini run ----------------------------------------------------

class MiniRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        pipeline_ = new Pipeline(mini_pipeline("mini_run"));
        logs_ = new std::vector<RunLog>(pipeline_->build_all());
    }
    static void TearDownTestSuite() {
        delete logs_;
        delete pipeline_;
    }
    static Pipeline* pipeline_;
    static std::vector<RunLog>* logs_;
};

Pipeline* MiniRun::pipeline_ = nullptr;
std::vector<RunLog>* MiniRun::logs_ = nullptr;

TEST_F(MiniRun, EveryStageLeavesARunLog) {
    for (const char* c : {"scene-build", "sample-points", "render-masks", "simulate", "dataset-build", "train-vae",
                          "encode", "train-idgan", "train-tsgan"}) {
        const auto p = pipeline_->path(std::string("logs/") + c + ".json");
        ASSERT_TRUE(std::filesystem::exists(p)) << c;
        const auto j = read(p);
        EXPECT_EQ(j.at("command"), c);
        for (const char* k : {"inputs", "seeds", "durations", "metrics", "outputs"}) EXPECT_TRUE(j.contains(k)) << c << " " << k;
        EXPECT_EQ(j["seeds"]["master"], pipeline_->config().seed);
    }
    EXPECT_FALSE(std::filesystem::exists(pipeline_->path(".lock")));
}

TEST_F(MiniRun, PointsAreBalancedOverScenarioClasses) {
    const auto points = pipeline_->load_points();
    ASSERT_EQ(points.size(), 24u);
    std::array<int, kScenarioClasses> counts{};
    for (const auto& p : points) {
        EXPECT_EQ(p.scenario, scenario_class(p.point.normal, p.sky_ratio));
        ++counts[static_cast<std::size_t>(p.scenario)];
    }
    // selection used the coarse screen; the full-resolution label may move a point across the threshold
    for (int c : counts) EXPECT_GE(c, 1);
}

TEST_F(MiniRun, TrainingSplitCoversEveryClass) {
    const auto d = pipeline_->load_dataset();
    const auto points = pipeline_->load_points();
    std::set<int> classes;
    for (int p : d.train_points) classes.insert(points[static_cast<std::size_t>(p)].scenario);
    EXPECT_EQ(classes.size(), static_cast<std::size_t>(kScenarioClasses));
    EXPECT_EQ(d.stats.provenance, "train");
    EXPECT_EQ(d.records.size(), 24u * 3u * 2u * kWeeks);
}

TEST_F(MiniRun, EncodeFillsCodesFromTheCheckpoint) {
    const auto d = pipeline_->load_dataset();
    auto vae = pipeline_->load_vae();
    const auto& r = d.records.front();
    const auto code = vae.encode(d.masks.at({r.key.point, r.key.wwr_level})).mean;
    for (int i = 0; i < kCodeDim; ++i) EXPECT_FLOAT_EQ(r.image_code[i], code[i]);
    EXPECT_EQ(pipeline_->load_idgan().encoder_fingerprint, vae.fingerprint());
    EXPECT_EQ(pipeline_->load_tsgan().encoder_fingerprint, vae.fingerprint());
}

TEST_F(MiniRun, IdenticalConfigGivesIdenticalManifestAndMetrics) {
    auto twin = mini_pipeline("mini_run_twin");
    const auto again = twin.build_all();
    ASSERT_EQ(again.size(), logs_->size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        EXPECT_EQ(again[i].metrics, (*logs_)[i].metrics) << again[i].command;
    }
    EXPECT_EQ(slurp(twin.path("dataset/manifest.json")), slurp(pipeline_->path("dataset/manifest.json")));
}

TEST_F(MiniRun, GenerateWritesAnAnnualEnsembleCsv) {
    GenerateOptions o;
    o.point = pipeline_->load_points().front().point.id;
    o.ensemble = 10;
    const auto log = pipeline_->generate(o);
    std::ifstream in(log.outputs.at(0).get<std::string>());
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("hour,member_1,", 0), 0u);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 10);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, kHoursPerYear);
}

TEST_F(MiniRun, GenerateSelectedWeeks) {
    GenerateOptions o;
    o.point = pipeline_->load_points().back().point.id;
    o.weeks = "3,40";
    o.ensemble = 2;
    o.out = pipeline_->path("outputs/weeks.csv");
    pipeline_->generate(o);
    std::ifstream in(*o.out);
    int rows = -1;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 2 * kPatchLength);

    o.weeks = "52";
    EXPECT_THROW(pipeline_->generate(o), InputError);
    o.weeks = "all";
    o.point = "nowhere";
    EXPECT_THROW(pipeline_->generate(o), InputError);
}

TEST_F(MiniRun, EvaluateReportsEveryMetricFamily) {
    const auto log = pipeline_->evaluate();
    const auto& m = log.metrics;
    EXPECT_GE(m["range"]["min"].get<double>(), 0.0);
    EXPECT_LE(m["range"]["max"].get<double>(), 1.0);
    EXPECT_EQ(m["range"]["draws"], 10000);
    for (const char* k : {"hourly_jsd", "annual_jsd", "peak_hour_jsd", "ac_mae"}) {
        const double v = m["series"]["pooled"][k].get<double>();
        EXPECT_GE(v, 0.0) << k;
        EXPECT_TRUE(std::isfinite(v)) << k;
    }
    for (const char* k : {"trtr", "tsts", "trts", "tstr"}) EXPECT_TRUE(m["scenario_study"][k].contains("macro"));
    EXPECT_TRUE(std::filesystem::exists(pipeline_->path("reports/evaluation.csv")));
}

TEST_F(MiniRun, WwrStudyScoresEveryTestPoint) {
    const auto log = pipeline_->wwr_study();
    const auto d = pipeline_->load_dataset();
    EXPECT_EQ(log.metrics["per_point"]["idgan_high"].size(), d.test_points.size());
    EXPECT_EQ(log.metrics["sweep"].size(), 20u);
    const int dim = log.metrics["dimension"]["dim"].get<int>();
    EXPECT_GE(dim, 0);
    EXPECT_LT(dim, kCodeDim);
}

TEST_F(MiniRun, BenchPrintsOneRowPerStage) {
    const auto log = pipeline_->bench(3);
    const auto table = log.details["table"].get<std::string>();
    for (const char* s : {"mask render", "encode", "generate", "traverse"}) EXPECT_NE(table.find(s), std::string::npos);
    EXPECT_EQ(log.metrics["points"], 3);
}

TEST(Stages, OutOfOrderStageNamesThePrerequisite) {
    auto p = mini_pipeline("out_of_order");
    try {
        p.train_vae();
        FAIL() << "expected UsageError";
    } catch (const UsageError& e) {
        EXPECT_NE(std::string(e.what()).find("dataset-build"), std::string::npos);
    }
    EXPECT_FALSE(std::filesystem::exists(p.path(".lock")));
}

// ---- CLI ---------------------------------------------------------------------

namespace {

struct CliResult {
    int status;
    std::string err;
};

CliResult cli(const std::string& args) {
    const auto err = std::filesystem::temp_directory_path() / "urbansolar_cli_err.txt";
    const auto cmd = std::string(URBANSOLAR_CLI) + " " + args + " >/dev/null 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

}  // namespace

TEST(Cli, UnknownCommandPrintsUsageAndExitsTwo) {
    const auto r = cli("frobnicate");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("usage:"), std::string::npos);
    EXPECT_EQ(cli("").status, 2);
}

TEST(Cli, ValidationFailuresExitOne) {
    EXPECT_EQ(cli("scene-build").status, 1);
    EXPECT_EQ(cli("scene-build --config /no/such.json").status, 1);
    const auto dir = temp_dir("cli_config");
    auto j = default_config_json();
    j["sampling"].erase("spacing");
    std::ofstream(dir / "c.json") << j.dump();
    const auto r = cli("scene-build --config " + (dir / "c.json").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("sampling.spacing"), std::string::npos);
}

TEST(Cli, SceneBuildSucceeds) {
    const auto dir = temp_dir("cli_scene");
    auto j = default_config_json();
    j["run_dir"] = (dir / "run").string();
    std::ofstream(dir / "c.json") << j.dump();
    EXPECT_EQ(cli("scene-build --config " + (dir / "c.json").string()).status, 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "run/scene.geojson"));
    EXPECT_TRUE(std::filesystem::exists(dir / "run/logs/scene-build.json"));
}
