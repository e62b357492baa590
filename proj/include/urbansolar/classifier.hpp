#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include "urbansolar/fidelity.hpp"

namespace urbansolar {

struct ClassifierConfig {
    int hidden = 64;
    int epochs = 500;  ///< full-batch passes
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static ClassifierConfig from_json(const nlohmann::json& j);
};

/// Two-hidden-layer perceptron with a softmax head, trained on cross-entropy
/// over z-scored features (statistics from the training set).
class MlpClassifier {
public:
    MlpClassifier(const LabeledSet& train, int classes, const ClassifierConfig& config);
    std::vector<int> predict(const LabeledSet& test) const;
    /// Per-epoch training loss.
    const std::vector<double>& losses() const { return losses_; }

private:
    torch::Tensor features(const LabeledSet& set) const;

    mutable torch::nn::Sequential net_{nullptr};
    torch::Tensor mean_;
    torch::Tensor scale_;
    std::vector<double> losses_;
};

/// Adapter for scenario_study: fresh classifier per regime, same seed.
ClassifierRun mlp_run(int classes, const ClassifierConfig& config);

}  // namespace urbansolar
