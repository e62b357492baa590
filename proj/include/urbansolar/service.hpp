#pragma once

#include <atomic>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>

#include "urbansolar/pipeline.hpp"

namespace urbansolar {

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

/// Inference over immutable checkpoints. `handle` is the whole HTTP contract
/// and is safe to call from many threads; models are never updated after load.
///
///   GET  /health    {"status":"ok"}
///   GET  /points    sampled points with orientation, sky ratio and split
///   POST /encode    {"mask_png": base64} -> {code[32], logvar[32]}
///   POST /generate  {condition[47] | point_id + week [+ wwr_level, climate], n [, seed]}
///                   -> {members[n][119], min[n], max[n]} in W/m2
///   POST /traverse  {point_id, dim, values[] [, week, wwr_level, climate, n, seed]}
///                   -> {masks[] (base64 PNG), ensembles[][n][119]}
///   GET  /meta      checkpoint and config fingerprints, WWR dimension
///
/// Every body carries "fingerprint". Errors: 400 malformed request, 404
/// unknown point or route, 405 wrong method, 409 encoder/generator checkpoint
/// mismatch, 500 with an error id.
class InferenceService {
public:
    InferenceService(Dataset dataset, VaeModel vae, IdganModel idgan, TsganModel tsgan, std::uint64_t seed,
                     std::optional<WwrDimension> wwr, nlohmann::json config_meta);

    /// Loads everything from a run directory. The WWR dimension comes from the
    /// wwr-study report when present, else it is recomputed from training codes.
    static std::unique_ptr<InferenceService> open(const Pipeline& pipeline);

    ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

    std::string fingerprint() const { return fingerprint_; }
    bool consistent() const { return consistent_; }

private:
    nlohmann::json health() const;
    nlohmann::json points() const;
    nlohmann::json encode(const nlohmann::json& request) const;
    nlohmann::json generate(const nlohmann::json& request) const;
    nlohmann::json traverse(const nlohmann::json& request) const;
    nlohmann::json meta() const;

    int point_index(const nlohmann::json& request) const;
    Condition record_condition(int point, int wwr_level, int climate, int week, const ImageCode& code) const;
    nlohmann::json ensemble_json(std::span<const GeneratedPatch> draws, std::size_t first, int n) const;

    std::unique_ptr<Dataset> dataset_;
    std::unique_ptr<VaeModel> vae_;
    std::unique_ptr<IdganModel> idgan_;
    std::unique_ptr<TsganModel> tsgan_;
    std::uint64_t seed_;
    std::optional<WwrDimension> wwr_;
    nlohmann::json config_meta_;
    std::string vae_fp_, idgan_fp_, tsgan_fp_;
    std::string fingerprint_;
    bool consistent_ = true;
    mutable std::atomic<std::uint64_t> errors_{0};
};

/// HTTP front of an InferenceService.
class HttpServer {
public:
    HttpServer(const InferenceService& service, int threads);
    ~HttpServer();

    /// Port 0 picks a free port. Returns the bound port; UsageError on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called from another thread.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace urbansolar
