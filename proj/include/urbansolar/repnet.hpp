#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "urbansolar/dataset.hpp"
#include "urbansolar/mask.hpp"

namespace urbansolar {

/// Stride-2 convolutional encoder, mirrored transposed-convolution decoder.
/// `image` must be divisible by 2^channels.size().
struct VaeArch {
    std::vector<int> channels{16, 32, 32, 64, 64};
    int latent = kCodeDim;
    int image = CubeMask::kSize;
    int categories = kCategoryCount;

    void validate() const;
    nlohmann::json to_json() const;
    static VaeArch from_json(const nlohmann::json& j);
};

struct VaeConfig {
    double beta = 3.0;
    int batch = 32;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    int iterations = 0;
    std::uint64_t seed = 0;
    bool flip_augment = false;  ///< mirror masks left/right at random

    void validate() const;
    nlohmann::json to_json() const;
    static VaeConfig from_json(const nlohmann::json& j);
};

struct LatentCode {
    std::array<float, kCodeDim> mean{};
    std::array<float, kCodeDim> logvar{};
};

class BetaVaeImpl : public torch::nn::Module {
public:
    explicit BetaVaeImpl(const VaeArch& arch);

    /// x: [B, categories, image, image] one-hot -> (mean, log-variance).
    std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& x);
    /// z: [B, latent] -> per-pixel category logits.
    torch::Tensor decode_logits(const torch::Tensor& z);

    const VaeArch& arch() const { return arch_; }

private:
    VaeArch arch_;
    torch::nn::Sequential encoder_{nullptr};
    torch::nn::Linear mean_{nullptr};
    torch::nn::Linear logvar_{nullptr};
    torch::nn::Linear expand_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
    int side_ = 4;
};
TORCH_MODULE(BetaVae);

struct ElboTerms {
    torch::Tensor total;
    torch::Tensor reconstruction;  ///< summed over pixels, batch mean
    torch::Tensor kl;              ///< summed over dimensions, batch mean
};

/// Closed-form KL(N(mean, exp(logvar)) || N(0, I)) per sample.
torch::Tensor gaussian_kl(const torch::Tensor& mean, const torch::Tensor& logvar);

/// Categorical negative log-likelihood from per-pixel probabilities.
ElboTerms elbo_from_probs(const torch::Tensor& onehot, const torch::Tensor& probs, const torch::Tensor& mean,
                          const torch::Tensor& logvar, double beta);
ElboTerms elbo_from_logits(const torch::Tensor& onehot, const torch::Tensor& logits, const torch::Tensor& mean,
                           const torch::Tensor& logvar, double beta);

/// Full forward pass with caller-supplied reparameterization noise.
ElboTerms elbo_with_noise(BetaVae& net, const torch::Tensor& onehot, const torch::Tensor& noise, double beta);

/// [B, 4, 128, 128] float one-hot tensor.
torch::Tensor onehot_batch(std::span<const CubeMask> masks, bool flip = false);
torch::Tensor onehot_batch(std::span<const CubeMask* const> masks, std::span<const bool> flips);
CubeMask mirror(const CubeMask& mask);

/// Per-pixel argmax of a [4, H, W] probability or logit tensor.
CubeMask argmax_mask(const torch::Tensor& scores);

struct TrainLog {
    std::vector<double> loss;
    std::vector<double> reconstruction;
    std::vector<double> kl;
    double seconds = 0.0;
    nlohmann::json to_json(std::size_t stride = 1) const;
};

/// Trained (or freshly initialized) β-VAE with its metadata.
class VaeModel {
public:
    VaeModel(const VaeArch& arch, const VaeConfig& config);

    LatentCode encode(const CubeMask& mask);
    std::vector<LatentCode> encode(std::span<const CubeMask> masks);
    /// Deterministic mean/log-variance of a one-hot tensor; ShapeError on a bad shape.
    std::pair<torch::Tensor, torch::Tensor> encode_tensor(const torch::Tensor& onehot);
    /// [B, latent] -> [B, 4, H, W] probabilities; InputError on non-finite input.
    torch::Tensor decode_probs(const torch::Tensor& z);
    CubeMask decode(std::span<const float> z);
    CubeMask reconstruct(const CubeMask& mask);

    BetaVae& net() { return net_; }
    const VaeArch& arch() const { return arch_; }
    const VaeConfig& config() const { return config_; }
    std::string fingerprint() const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static VaeModel load(const std::filesystem::path& path);

private:
    VaeArch arch_;
    VaeConfig config_;
    BetaVae net_;
};

using ProgressFn = std::function<void(int iteration, double loss)>;

/// Adam on the ELBO over `corpus` (one-hot view of each mask). Batches are
/// drawn from a seeded stream; throws DivergenceError on a non-finite loss.
VaeModel train_vae(std::span<const CubeMask> corpus, const VaeArch& arch, const VaeConfig& config, TrainLog* log = nullptr,
                   const ProgressFn& progress = {});

/// Mean pixel accuracy of argmax(decode(encode(x).mean)) against x.
double reconstruction_accuracy(VaeModel& model, std::span<const CubeMask> masks);

}  // namespace urbansolar
