#pragma once

#include <torch/torch.h>

#include <optional>

#include "urbansolar/repnet.hpp"

namespace urbansolar {

inline constexpr int kNoiseDim = 4;

struct GanArch {
    std::vector<int> generator_channels{64, 64, 32, 32, 16};      ///< coarse to fine
    std::vector<int> discriminator_channels{16, 32, 32, 64, 64};  ///< fine to coarse
    int image = CubeMask::kSize;

    void validate() const;
    nlohmann::json to_json() const;
    static GanArch from_json(const nlohmann::json& j);
};

struct IdganConfig {
    double distill_weight = 0.01;
    int batch = 64;
    double learning_rate = 1e-4;
    double decay = 0.9;          ///< step size multiplier applied every `decay_every` iterations
    int decay_every = 10000;
    int noise_dim = kNoiseDim;
    int iterations = 0;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static IdganConfig from_json(const nlohmann::json& j);
};

/// Latent code plus noise -> image in [-1, 1] (tanh).
class GanGeneratorImpl : public torch::nn::Module {
public:
    GanGeneratorImpl(const GanArch& arch, int input_dim);
    torch::Tensor forward(const torch::Tensor& input);

private:
    GanArch arch_;
    torch::nn::Linear project_{nullptr};
    torch::nn::Sequential body_{nullptr};
    int side_ = 4;
};
TORCH_MODULE(GanGenerator);

/// Image in [-1, 1] -> real/fake logit.
class GanDiscriminatorImpl : public torch::nn::Module {
public:
    explicit GanDiscriminatorImpl(const GanArch& arch);
    torch::Tensor forward(const torch::Tensor& image);

private:
    torch::nn::Sequential body_{nullptr};
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(GanDiscriminator);

/// A β-VAE encoder whose parameters no longer take gradients.
class FrozenEncoder {
public:
    explicit FrozenEncoder(VaeModel& model);
    /// Throws UsageError if any parameter has been unfrozen since construction.
    void check() const;
    /// Mean and log-variance of a [B, 4, H, W] one-hot batch; gradients flow to the input.
    std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& onehot) const;
    std::string fingerprint() const { return fingerprint_; }
    VaeModel& model() const { return *model_; }

private:
    VaeModel* model_;
    std::string fingerprint_;
};

/// Gray levels in [0, 255] -> one-hot in channel order (sky, ground, opaque,
/// glazing). Forward pass is the hard nearest-palette quantization; the
/// backward pass uses a softmax over negative squared distances to the levels.
torch::Tensor straight_through_onehot(const torch::Tensor& gray, double temperature = 400.0);

/// [B, 1, H, W] in [-1, 1] <-> [0, 255].
torch::Tensor to_gray(const torch::Tensor& unit);
torch::Tensor from_gray(const torch::Tensor& gray);
torch::Tensor gray_batch(std::span<const CubeMask* const> masks, std::span<const bool> flips = {});

/// Per-sample log N(code; mean, exp(logvar)), summed over dimensions.
torch::Tensor gaussian_log_likelihood(const torch::Tensor& code, const torch::Tensor& mean, const torch::Tensor& logvar);

/// Batch mean of the log-likelihood of each conditioning code under the frozen
/// encoder's posterior on the generated image. Throws UsageError when the
/// encoder is not frozen.
torch::Tensor distillation_regularizer(const torch::Tensor& generated_unit, const torch::Tensor& codes,
                                       const FrozenEncoder& encoder);

struct AdversarialTerms {
    torch::Tensor discriminator;
    torch::Tensor generator;  ///< adversarial part minus weight * regularizer
    torch::Tensor regularizer;
};

/// Non-saturating losses from raw logits.
AdversarialTerms adversarial_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                                    const torch::Tensor& fake_logits_for_generator, const torch::Tensor& regularizer,
                                    double weight);

struct IdganLog {
    std::vector<double> discriminator_loss;
    std::vector<double> generator_loss;
    std::vector<double> regularizer;
    std::vector<double> discriminator_accuracy;  ///< on the training batch, real and fake pooled
    double seconds = 0.0;
    nlohmann::json to_json(std::size_t stride = 1) const;
};

class IdganModel {
public:
    IdganModel(const GanArch& arch, const IdganConfig& config);

    /// Single image in [0, 255], row-major 128x128. ShapeError on wrong dims,
    /// InputError on non-finite inputs.
    std::vector<float> generate_image(std::span<const float> code, std::span<const float> noise);
    /// [B, 32] codes, [B, 4] noise -> [B, 1, H, W] gray levels.
    torch::Tensor generate_gray(const torch::Tensor& codes, const torch::Tensor& noise);
    /// Discriminator probability that each [B, 1, H, W] gray image is real.
    torch::Tensor real_probability(const torch::Tensor& gray);

    GanGenerator& generator() { return generator_; }
    GanDiscriminator& discriminator() { return discriminator_; }
    const GanArch& arch() const { return arch_; }
    const IdganConfig& config() const { return config_; }
    std::string fingerprint() const;
    /// Fingerprint of the β-VAE the model was trained against ("" when untrained).
    std::string encoder_fingerprint;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static IdganModel load(const std::filesystem::path& path);

private:
    GanArch arch_;
    IdganConfig config_;
    GanGenerator generator_;
    GanDiscriminator discriminator_;
};

/// Alternating updates: discriminator on real masks vs. generated images,
/// generator on codes sampled from the frozen encoder's posterior of real
/// masks plus fresh noise.
IdganModel train_idgan(std::span<const CubeMask> corpus, const FrozenEncoder& encoder, const GanArch& arch,
                       const IdganConfig& config, IdganLog* log = nullptr, const ProgressFn& progress = {});

/// 20 equally spaced values over [-3, 3].
std::vector<float> default_sweep(int steps = 20, float lo = -3.0f, float hi = 3.0f);

/// Encode `mask`, overwrite dimension `dim` with each value and generate with
/// the same noise. Returns quantized masks. InputError for dim outside 0..31.
std::vector<CubeMask> traverse(VaeModel& encoder, IdganModel& generator, const CubeMask& mask, int dim,
                               std::span<const float> values, std::span<const float> noise);
/// Quantized generate_image of the mask's own code.
CubeMask regenerate(VaeModel& encoder, IdganModel& generator, const CubeMask& mask, std::span<const float> noise);

struct WwrTriplet {
    ImageCode zero{};
    ImageCode low{};
    ImageCode high{};
};

struct WwrDimension {
    int dim = 0;
    int sign = 1;                        ///< +1 when the coordinate grows with WWR
    std::array<double, kCodeDim> shift{};  ///< mean(high - zero) per dimension
    double margin = 0.0;                 ///< |shift| of the winner minus the runner-up
    bool low_confidence = false;
    nlohmann::json to_json() const;
};

/// Dimension with the largest absolute mean shift between high- and zero-WWR
/// codes; ties go to the lowest index and are flagged low-confidence. Throws
/// InsufficientDataError for fewer than 10 triplets.
WwrDimension find_wwr_dimension(std::span<const WwrTriplet> triplets);

}  // namespace urbansolar
