#include "urbansolar/classifier.hpp"

#include "urbansolar/error.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

nlohmann::json ClassifierConfig::to_json() const {
    return {{"hidden", hidden}, {"epochs", epochs}, {"learning_rate", learning_rate}, {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (c.hidden <= 0 || c.epochs < 0 || !(c.learning_rate > 0.0)) throw ConfigError("invalid classifier settings");
    return c;
}

namespace {

torch::Tensor to_tensor(const LabeledSet& set) {
    if (set.features.empty()) throw InsufficientDataError("classifier needs at least one sample");
    const auto dim = set.features.front().size();
    auto t = torch::empty({static_cast<std::int64_t>(set.features.size()), static_cast<std::int64_t>(dim)});
    auto acc = t.accessor<float, 2>();
    for (std::size_t i = 0; i < set.features.size(); ++i) {
        if (set.features[i].size() != dim) throw ShapeError("feature vectors differ in length");
        for (std::size_t d = 0; d < dim; ++d) acc[static_cast<std::int64_t>(i)][static_cast<std::int64_t>(d)] = set.features[i][d];
    }
    return t;
}

}  // namespace

MlpClassifier::MlpClassifier(const LabeledSet& train, int classes, const ClassifierConfig& config) {
    if (train.labels.size() != train.features.size()) throw ShapeError("labels and features differ in count");
    const auto x_raw = to_tensor(train);
    mean_ = x_raw.mean(0);
    scale_ = x_raw.std(0, false).clamp_min(1e-6);
    const auto x = (x_raw - mean_) / scale_;
    const auto y = torch::tensor(std::vector<std::int64_t>(train.labels.begin(), train.labels.end()), torch::kLong);
    if (y.min().item<std::int64_t>() < 0 || y.max().item<std::int64_t>() >= classes) {
        throw InputError("class label outside 0.." + std::to_string(classes - 1));
    }

    namespace nn = torch::nn;
    torch::manual_seed(derive_seed(config.seed, "classifier"));
    net_ = nn::Sequential(nn::Linear(x.size(1), config.hidden), nn::ReLU(), nn::Linear(config.hidden, config.hidden),
                          nn::ReLU(), nn::Linear(config.hidden, classes));
    torch::optim::Adam opt(net_->parameters(), torch::optim::AdamOptions(config.learning_rate));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto loss = torch::nn::functional::cross_entropy(net_->forward(x), y);
        opt.zero_grad();
        loss.backward();
        opt.step();
        losses_.push_back(loss.item<double>());
    }
}

torch::Tensor MlpClassifier::features(const LabeledSet& set) const { return (to_tensor(set) - mean_) / scale_; }

std::vector<int> MlpClassifier::predict(const LabeledSet& test) const {
    torch::NoGradGuard guard;
    const auto probs = torch::softmax(net_->forward(features(test)), 1);
    const auto idx = probs.argmax(1).contiguous();
    std::vector<int> out(static_cast<std::size_t>(idx.size(0)));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(idx[static_cast<std::int64_t>(i)].item<std::int64_t>());
    return out;
}

ClassifierRun mlp_run(int classes, const ClassifierConfig& config) {
    return [classes, config](const LabeledSet& train, const LabeledSet& test) {
        return MlpClassifier(train, classes, config).predict(test);
    };
}

}  // namespace urbansolar
