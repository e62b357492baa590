#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>

#include "urbansolar/dataset.hpp"
#include "urbansolar/repnet.hpp"

namespace urbansolar {

using Condition = std::array<float, kConditionDim>;

/// z-scored attributes followed by the image code.
Condition make_condition(const Attributes& raw_attributes, const ImageCode& code, const NormalizationStats& stats);
Condition make_condition(const NormalizedSample& sample);

struct TsganArch {
    int hidden = 64;          ///< LSTM width
    int aux_hidden = 64;
    int critic_hidden = 128;
    int aux_noise = 8;
    int step_noise = 4;
    bool hour_phase = true;   ///< feed sin/cos of the hour of day to every step

    void validate() const;
    nlohmann::json to_json() const;
    static TsganArch from_json(const nlohmann::json& j);
};

struct TsganConfig {
    double alpha = 1.0;            ///< weight of the auxiliary min/max objective
    double penalty = 10.0;         ///< gradient penalty of the series critic
    double aux_penalty = 10.0;     ///< gradient penalty of the min/max critic
    int batch = 100;
    double learning_rate = 1e-3;
    double beta1 = 0.5;
    int critic_steps = 3;
    int ensemble = 10;
    int iterations = 0;
    double data_fraction = 1.0;    ///< random share of training records used
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TsganConfig from_json(const nlohmann::json& j);
};

/// Condition plus noise -> (min, max) with min <= max by construction.
class AuxGeneratorImpl : public torch::nn::Module {
public:
    AuxGeneratorImpl(const TsganArch& arch);
    /// [B, 47], [B, aux_noise] -> [B, 2] as (min, max).
    torch::Tensor forward(const torch::Tensor& condition, const torch::Tensor& noise);

private:
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(AuxGenerator);

/// Recurrent generator of a unit-range 119-step patch.
class SeriesGeneratorImpl : public torch::nn::Module {
public:
    SeriesGeneratorImpl(const TsganArch& arch);
    /// [B, 47], [B, 2], [B, 119, step_noise] -> [B, 119] in [0, 1].
    torch::Tensor forward(const torch::Tensor& condition, const torch::Tensor& minmax, const torch::Tensor& noise);

private:
    TsganArch arch_;
    torch::nn::LSTM lstm_{nullptr};
    torch::nn::Linear head_{nullptr};
    torch::Tensor phase_;
};
TORCH_MODULE(SeriesGenerator);

/// MLP critic over a flat input vector.
class CriticImpl : public torch::nn::Module {
public:
    CriticImpl(int input, int hidden);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Critic);

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// E[(||grad critic(interp)||_2 - 1)^2] with interp = eps*real + (1-eps)*fake,
/// eps of shape [B, 1]. The graph is kept so the penalty can be trained.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               const torch::Tensor& eps);

struct WganTerms {
    torch::Tensor wasserstein;  ///< E[D(fake)] - E[D(real)]
    torch::Tensor penalty;
    torch::Tensor total;        ///< wasserstein + weight * penalty
};

WganTerms critic_loss(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                      const torch::Tensor& eps, double weight);
/// -E[D(fake)].
torch::Tensor generator_loss(const CriticFn& critic, const torch::Tensor& fake);

struct TsganLog {
    std::vector<double> critic_loss;
    std::vector<double> generator_loss;
    std::vector<double> wasserstein;      ///< E[D(real)] - E[D(fake)] of the series critic
    std::vector<double> aux_wasserstein;
    double seconds = 0.0;
    nlohmann::json to_json(std::size_t stride = 1) const;
};

struct GeneratedPatch {
    Patch unit{};  ///< [0, 1]
    float min_norm = 0.0f;
    float max_norm = 0.0f;
};

/// Rescales a unit patch by its own (min, max) times `scale`, clamped at 0.
Patch to_physical(const GeneratedPatch& g, double scale);

class TsganModel {
public:
    TsganModel(const TsganArch& arch, const TsganConfig& config);

    std::pair<float, float> aux_generate(const Condition& condition, std::span<const float> noise);
    Patch ts_generate(const Condition& condition, float min_norm, float max_norm, std::span<const float> noise);

    /// Batched normalized draws with noise from a seeded stream.
    std::vector<GeneratedPatch> sample(std::span<const Condition> conditions, int per_condition, std::uint64_t seed);

    /// n series in W/m2: unit patch rescaled by its own generated (min, max)
    /// and the training series scale, clamped at 0. UsageError without
    /// training statistics.
    std::vector<Patch> generate_ensemble(const Condition& condition, int n, std::uint64_t seed);
    /// 52 weekly conditions -> n members of 8760 hourly values.
    std::vector<std::vector<double>> generate_annual(std::span<const Condition> weekly, int n, std::uint64_t seed);

    AuxGenerator& aux() { return aux_; }
    SeriesGenerator& series() { return series_; }
    Critic& critic() { return critic_; }
    Critic& aux_critic() { return aux_critic_; }
    const TsganArch& arch() const { return arch_; }
    const TsganConfig& config() const { return config_; }
    std::string fingerprint() const;

    /// Normalization fitted on the training split; empty provenance = none.
    NormalizationStats stats;
    std::string encoder_fingerprint;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static TsganModel load(const std::filesystem::path& path);

    /// Every parameter, prefixed by sub-network.
    std::vector<std::pair<std::string, torch::Tensor>> state() const;

private:
    TsganArch arch_;
    TsganConfig config_;
    AuxGenerator aux_;
    SeriesGenerator series_;
    Critic critic_;
    Critic aux_critic_;
};

/// Joint WGAN-GP training of both generator/critic pairs. On a non-finite loss
/// the last finite parameters are written to `last_good` (when given) before
/// DivergenceError is thrown.
TsganModel train_tsgan(std::span<const NormalizedSample> train, const NormalizationStats& stats, const TsganArch& arch,
                       const TsganConfig& config, TsganLog* log = nullptr, const ProgressFn& progress = {},
                       const std::optional<std::filesystem::path>& last_good = std::nullopt);

}  // namespace urbansolar
