#include "urbansolar/service.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>

#include "pipeline_io.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/log.hpp"
#include "urbansolar/png_io.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

using nlohmann::json;

namespace {

struct BadRequest : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kMaxEnsemble = 1000;

int int_field(const json& j, const char* key, std::optional<int> fallback = std::nullopt) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw BadRequest(std::string("missing field '") + key + "'");
    }
    if (!j.at(key).is_number_integer()) throw BadRequest(std::string("field '") + key + "' must be an integer");
    return j.at(key).get<int>();
}

void check_range(int value, int lo, int hi, const char* key) {
    if (value < lo || value > hi) {
        throw BadRequest(std::string("field '") + key + "' must be in " + std::to_string(lo) + ".." + std::to_string(hi));
    }
}

std::uint64_t request_seed(const json& request, std::uint64_t master, const std::string& route) {
    if (request.contains("seed")) {
        if (!request.at("seed").is_number_unsigned()) throw BadRequest("field 'seed' must be a non-negative integer");
        return request.at("seed").get<std::uint64_t>();
    }
    // same request, same answer
    return derive_seed(master, route + request.dump());
}

WwrDimension wwr_from_json(const json& j) {
    WwrDimension d;
    d.dim = j.at("dim").get<int>();
    d.sign = j.at("sign").get<int>();
    d.margin = j.at("margin").get<double>();
    d.low_confidence = j.at("low_confidence").get<bool>();
    const auto shift = j.at("shift").get<std::vector<double>>();
    for (std::size_t i = 0; i < d.shift.size() && i < shift.size(); ++i) d.shift[i] = shift[i];
    return d;
}

std::string orientation_name(Orientation o) {
    switch (o) {
        case Orientation::North: return "N";
        case Orientation::East: return "E";
        case Orientation::South: return "S";
        case Orientation::West: return "W";
    }
    return "?";
}

}  // namespace

InferenceService::InferenceService(Dataset dataset, VaeModel vae, IdganModel idgan, TsganModel tsgan, std::uint64_t seed,
                                   std::optional<WwrDimension> wwr, json config_meta)
    : dataset_(std::make_unique<Dataset>(std::move(dataset))),
      vae_(std::make_unique<VaeModel>(std::move(vae))),
      idgan_(std::make_unique<IdganModel>(std::move(idgan))),
      tsgan_(std::make_unique<TsganModel>(std::move(tsgan))),
      seed_(seed),
      wwr_(wwr),
      config_meta_(std::move(config_meta)) {
    require_codes(*dataset_);
    vae_->net()->eval();
    vae_fp_ = vae_->fingerprint();
    idgan_fp_ = idgan_->fingerprint();
    tsgan_fp_ = tsgan_->fingerprint();
    consistent_ = idgan_->encoder_fingerprint == vae_fp_ && tsgan_->encoder_fingerprint == vae_fp_;
    fingerprint_ = sha256_text(vae_fp_ + ":" + idgan_fp_ + ":" + tsgan_fp_).substr(0, 16);
    if (!consistent_) log_warn("service: generator checkpoints were trained against a different encoder");
}

std::unique_ptr<InferenceService> InferenceService::open(const Pipeline& pipeline) {
    auto dataset = pipeline.load_dataset();
    auto vae = pipeline.load_vae();
    auto idgan = pipeline.load_idgan();
    auto tsgan = pipeline.load_tsgan();
    std::optional<WwrDimension> wwr;
    const auto report = pipeline.path("reports/wwr_study.json");
    if (std::filesystem::exists(report)) {
        wwr = wwr_from_json(read_json(report, "wwr-study").at("dimension"));
    } else if (dataset.wwr_levels.size() >= 3 && dataset.train_points.size() >= 10) {
        std::vector<WwrTriplet> triplets;
        const int high = static_cast<int>(dataset.wwr_levels.size()) - 1;
        for (int p : dataset.train_points) {
            triplets.push_back({vae.encode(dataset.masks.at({p, 0})).mean, vae.encode(dataset.masks.at({p, 1})).mean,
                                vae.encode(dataset.masks.at({p, high})).mean});
        }
        wwr = find_wwr_dimension(triplets);
    }
    const auto& c = pipeline.config();
    json meta = {{"config_sha256", config_sha256(c)},
                 {"dataset_manifest_sha256", sha256_file(pipeline.path("dataset/manifest.json"))},
                 {"traversal_range", c.evaluation.traversal_range},
                 {"traversal_steps", c.evaluation.traversal_steps},
                 {"ensemble", c.evaluation.ensemble}};
    return std::make_unique<InferenceService>(std::move(dataset), std::move(vae), std::move(idgan), std::move(tsgan),
                                              c.stage_seed("serve"), wwr, meta);
}

ServiceResponse InferenceService::handle(const std::string& method, const std::string& path,
                                         const std::string& body) const {
    ServiceResponse r;
    try {
        const bool get = method == "GET";
        const bool post = method == "POST";
        auto parse = [&] {
            json j;
            try {
                j = json::parse(body);
            } catch (const json::exception& e) {
                throw BadRequest(std::string("body is not valid JSON: ") + e.what());
            }
            if (!j.is_object()) throw BadRequest("body must be a JSON object");
            return j;
        };
        auto model_route = [&] {
            if (!consistent_) {
                r.status = 409;
                r.body = {{"error", "encoder and generator checkpoints do not match"},
                          {"encoder", vae_fp_},
                          {"idgan_encoder", idgan_->encoder_fingerprint},
                          {"tsgan_encoder", tsgan_->encoder_fingerprint}};
                return false;
            }
            return true;
        };
        const bool known = path == "/health" || path == "/points" || path == "/meta" || path == "/encode" ||
                           path == "/generate" || path == "/traverse";
        if (!known) {
            r.status = 404;
            r.body = {{"error", "no route " + path}};
        } else if ((path == "/health" || path == "/points" || path == "/meta") != get ||
                   (path == "/encode" || path == "/generate" || path == "/traverse") != post) {
            r.status = 405;
            r.body = {{"error", method + " not allowed on " + path}};
        } else if (path == "/meta") {
            r.body = meta();
        } else if (model_route()) {
            if (path == "/health") r.body = health();
            if (path == "/points") r.body = points();
            if (path == "/encode") r.body = encode(parse());
            if (path == "/generate") r.body = generate(parse());
            if (path == "/traverse") r.body = traverse(parse());
        }
    } catch (const BadRequest& e) {
        r = {400, {{"error", e.what()}}};
    } catch (const NotFound& e) {
        r = {404, {{"error", e.what()}}};
    } catch (const InputError& e) {
        r = {400, {{"error", e.what()}}};
    } catch (const DataError& e) {
        r = {400, {{"error", e.what()}}};
    } catch (const ShapeError& e) {
        r = {400, {{"error", e.what()}}};
    } catch (const json::exception& e) {
        r = {400, {{"error", std::string("malformed request: ") + e.what()}}};
    } catch (const std::exception& e) {
        const auto n = errors_.fetch_add(1);
        const auto stamp = static_cast<std::uint64_t>(std::chrono::system_clock::now().time_since_epoch().count());
        char id[17];
        std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(mix64(stamp ^ mix64(n))));
        log_warn(std::string("service error ") + id + " on " + method + " " + path + ": " + e.what());
        r = {500, {{"error", "internal error"}, {"error_id", id}}};
    }
    r.body["fingerprint"] = fingerprint_;
    return r;
}

json InferenceService::health() const { return {{"status", "ok"}}; }

json InferenceService::points() const {
    std::set<int> test(dataset_->test_points.begin(), dataset_->test_points.end());
    json list = json::array();
    for (std::size_t i = 0; i < dataset_->points.size(); ++i) {
        const auto& p = dataset_->points[i];
        const int scenario = scenario_class(p.point.normal, p.sky_ratio);
        list.push_back({{"id", p.point.id},
                        {"index", i},
                        {"position", {p.point.position.x, p.point.position.y, p.point.position.z}},
                        {"normal", {p.point.normal.x, p.point.normal.y, p.point.normal.z}},
                        {"sky_ratio", p.sky_ratio},
                        {"orientation", orientation_name(orientation_of(p.point.normal))},
                        {"obstruction", obstruction_of(p.sky_ratio) == Obstruction::High ? "high" : "low"},
                        {"scenario", scenario_name(scenario)},
                        {"split", test.contains(static_cast<int>(i)) ? "test" : "train"}});
    }
    json climates = json::array();
    for (const auto& c : dataset_->climates) climates.push_back(c.name);
    return {{"points", list}, {"wwr_levels", dataset_->wwr_levels}, {"climates", climates}};
}

json InferenceService::encode(const json& request) const {
    if (!request.contains("mask_png") || !request.at("mask_png").is_string()) {
        throw BadRequest("field 'mask_png' (base64 PNG) is required");
    }
    const auto bytes = base64_decode(request.at("mask_png").get<std::string>());
    const auto mask = cube_from_image(decode_png(bytes));
    const auto code = vae_->encode(mask);
    return {{"code", code.mean}, {"logvar", code.logvar}};
}

int InferenceService::point_index(const json& request) const {
    if (!request.contains("point_id") || !request.at("point_id").is_string()) {
        throw BadRequest("field 'point_id' is required");
    }
    const auto id = request.at("point_id").get<std::string>();
    for (std::size_t i = 0; i < dataset_->points.size(); ++i) {
        if (dataset_->points[i].point.id == id) return static_cast<int>(i);
    }
    throw NotFound("unknown point '" + id + "'");
}

Condition InferenceService::record_condition(int point, int wwr_level, int climate, int week,
                                             const ImageCode& code) const {
    const auto& r = dataset_->record({point, wwr_level, climate, week});
    return make_condition(r.attributes, code, tsgan_->stats);
}

json InferenceService::ensemble_json(std::span<const GeneratedPatch> draws, std::size_t first, int n) const {
    json members = json::array(), lo = json::array(), hi = json::array();
    for (int m = 0; m < n; ++m) {
        const auto& g = draws[first + static_cast<std::size_t>(m)];
        members.push_back(to_physical(g, tsgan_->stats.series_scale));
        lo.push_back(std::max(0.0, g.min_norm * tsgan_->stats.series_scale));
        hi.push_back(std::max(0.0, g.max_norm * tsgan_->stats.series_scale));
    }
    return {{"members", members}, {"min", lo}, {"max", hi}};
}

json InferenceService::generate(const json& request) const {
    const int n = int_field(request, "n", 10);
    check_range(n, 1, kMaxEnsemble, "n");
    Condition condition{};
    if (request.contains("condition")) {
        const auto& c = request.at("condition");
        if (!c.is_array() || c.size() != kConditionDim) {
            throw BadRequest("field 'condition' must hold " + std::to_string(kConditionDim) + " numbers");
        }
        for (std::size_t i = 0; i < kConditionDim; ++i) {
            if (!c[i].is_number()) throw BadRequest("field 'condition' must hold numbers");
            condition[i] = c[i].get<float>();
        }
    } else {
        const int p = point_index(request);
        const int week = int_field(request, "week");
        const int level = int_field(request, "wwr_level", 0);
        const int climate = int_field(request, "climate", 0);
        check_range(week, 0, kWeeks - 1, "week");
        check_range(level, 0, static_cast<int>(dataset_->wwr_levels.size()) - 1, "wwr_level");
        check_range(climate, 0, static_cast<int>(dataset_->climates.size()) - 1, "climate");
        const auto& r = dataset_->record({p, level, climate, week});
        condition = make_condition(r.attributes, r.image_code, tsgan_->stats);
    }
    const auto draws = tsgan_->sample(std::span(&condition, 1), n, request_seed(request, seed_, "/generate"));
    auto out = ensemble_json(draws, 0, n);
    out["unit"] = "W/m2";
    return out;
}

json InferenceService::traverse(const json& request) const {
    const int p = point_index(request);
    const int dim = int_field(request, "dim");
    check_range(dim, 0, kCodeDim - 1, "dim");
    if (!request.contains("values") || !request.at("values").is_array() || request.at("values").empty()) {
        throw BadRequest("field 'values' must be a non-empty array");
    }
    std::vector<float> values;
    for (const auto& v : request.at("values")) {
        if (!v.is_number()) throw BadRequest("field 'values' must hold numbers");
        values.push_back(v.get<float>());
    }
    if (values.size() > 200) throw BadRequest("at most 200 traversal values");
    const int level = int_field(request, "wwr_level", 0);
    const int climate = int_field(request, "climate", 0);
    const int n = int_field(request, "n", 10);
    check_range(level, 0, static_cast<int>(dataset_->wwr_levels.size()) - 1, "wwr_level");
    check_range(climate, 0, static_cast<int>(dataset_->climates.size()) - 1, "climate");
    check_range(n, 1, kMaxEnsemble, "n");
    const int week = request.contains("week")
                         ? int_field(request, "week")
                         : high_irradiance_week(dataset_->climates[static_cast<std::size_t>(climate)]);
    check_range(week, 0, kWeeks - 1, "week");

    const auto seed = request_seed(request, seed_, "/traverse");
    Rng rng(seed);
    std::vector<float> noise(static_cast<std::size_t>(idgan_->config().noise_dim));
    for (auto& v : noise) v = static_cast<float>(rng.normal());
    const auto& mask = dataset_->masks.at({p, level});
    const auto masks = urbansolar::traverse(*vae_, *idgan_, mask, dim, values, noise);

    const auto base = vae_->encode(mask).mean;
    std::vector<Condition> conditions;
    for (float v : values) {
        auto code = base;
        code[static_cast<std::size_t>(dim)] = v;
        conditions.push_back(record_condition(p, level, climate, week, code));
    }
    const auto draws = tsgan_->sample(conditions, n, derive_seed(seed, "ensembles"));
    json pngs = json::array(), ensembles = json::array();
    for (const auto& m : masks) pngs.push_back(base64_encode(encode_png(to_image(m))));
    for (std::size_t i = 0; i < values.size(); ++i) ensembles.push_back(ensemble_json(draws, i * static_cast<std::size_t>(n), n));
    return {{"point_id", dataset_->points[static_cast<std::size_t>(p)].point.id},
            {"dim", dim},
            {"values", values},
            {"week", week},
            {"original", base[static_cast<std::size_t>(dim)]},
            {"masks", pngs},
            {"ensembles", ensembles}};
}

json InferenceService::meta() const {
    json m = config_meta_;
    m["fingerprints"] = {{"encoder", vae_fp_},
                         {"idgan", idgan_fp_},
                         {"tsgan", tsgan_fp_},
                         {"idgan_encoder", idgan_->encoder_fingerprint},
                         {"tsgan_encoder", tsgan_->encoder_fingerprint}};
    m["consistent"] = consistent_;
    m["wwr_dimension"] = wwr_ ? wwr_->to_json() : json(nullptr);
    m["code_dim"] = kCodeDim;
    m["patch_length"] = kPatchLength;
    return m;
}

}  // namespace urbansolar
