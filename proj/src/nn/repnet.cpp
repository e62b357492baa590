#include "urbansolar/repnet.hpp"

#include <chrono>
#include <cmath>

#include "urbansolar/checkpoint.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/fidelity.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

void VaeArch::validate() const {
    if (channels.empty()) throw ConfigError("vae needs at least one convolution");
    if (latent <= 0 || categories <= 1) throw ConfigError("vae latent and category counts must be positive");
    const int factor = 1 << channels.size();
    if (image <= 0 || image % factor != 0 || image / factor < 1) {
        throw ConfigError("vae image size must be divisible by " + std::to_string(factor));
    }
    for (int c : channels) {
        if (c <= 0) throw ConfigError("vae channel counts must be positive");
    }
}

nlohmann::json VaeArch::to_json() const {
    return {{"channels", channels}, {"latent", latent}, {"image", image}, {"categories", categories}};
}

VaeArch VaeArch::from_json(const nlohmann::json& j) {
    VaeArch a;
    a.channels = j.at("channels").get<std::vector<int>>();
    a.latent = j.at("latent").get<int>();
    a.image = j.at("image").get<int>();
    a.categories = j.at("categories").get<int>();
    a.validate();
    return a;
}

void VaeConfig::validate() const {
    if (!(beta > 0.0)) throw ConfigError("vae beta must be positive");
    if (batch <= 0) throw ConfigError("vae batch must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("vae learning rate must be positive");
    if (iterations < 0) throw ConfigError("vae iterations must be non-negative");
}

nlohmann::json VaeConfig::to_json() const {
    return {{"beta", beta},       {"batch", batch}, {"learning_rate", learning_rate}, {"beta1", beta1},
            {"iterations", iterations}, {"seed", seed}, {"flip_augment", flip_augment}};
}

VaeConfig VaeConfig::from_json(const nlohmann::json& j) {
    VaeConfig c;
    c.beta = j.value("beta", c.beta);
    c.batch = j.value("batch", c.batch);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.iterations = j.value("iterations", c.iterations);
    c.seed = j.value("seed", c.seed);
    c.flip_augment = j.value("flip_augment", c.flip_augment);
    c.validate();
    return c;
}

BetaVaeImpl::BetaVaeImpl(const VaeArch& arch) : arch_(arch) {
    arch_.validate();
    namespace nn = torch::nn;
    encoder_ = nn::Sequential();
    int in = arch_.categories;
    for (int c : arch_.channels) {
        encoder_->push_back(nn::Conv2d(nn::Conv2dOptions(in, c, 4).stride(2).padding(1)));
        encoder_->push_back(nn::ReLU());
        in = c;
    }
    side_ = arch_.image >> arch_.channels.size();
    const int flat = arch_.channels.back() * side_ * side_;
    mean_ = nn::Linear(flat, arch_.latent);
    logvar_ = nn::Linear(flat, arch_.latent);
    expand_ = nn::Linear(arch_.latent, flat);

    decoder_ = nn::Sequential();
    for (std::size_t i = arch_.channels.size(); i-- > 0;) {
        const int out = i == 0 ? arch_.categories : arch_.channels[i - 1];
        decoder_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(arch_.channels[i], out, 4).stride(2).padding(1)));
        if (i != 0) decoder_->push_back(nn::ReLU());
    }
    register_module("encoder", encoder_);
    register_module("mean", mean_);
    register_module("logvar", logvar_);
    register_module("expand", expand_);
    register_module("decoder", decoder_);
}

std::pair<torch::Tensor, torch::Tensor> BetaVaeImpl::encode(const torch::Tensor& x) {
    auto h = encoder_->forward(x).flatten(1);
    return {mean_->forward(h), logvar_->forward(h)};
}

torch::Tensor BetaVaeImpl::decode_logits(const torch::Tensor& z) {
    auto h = torch::relu(expand_->forward(z)).view({-1, arch_.channels.back(), side_, side_});
    return decoder_->forward(h);
}

torch::Tensor gaussian_kl(const torch::Tensor& mean, const torch::Tensor& logvar) {
    return 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).sum(1);
}

namespace {

ElboTerms combine(const torch::Tensor& nll_per_sample, const torch::Tensor& mean, const torch::Tensor& logvar,
                  double beta) {
    ElboTerms t;
    t.reconstruction = nll_per_sample.mean();
    t.kl = gaussian_kl(mean, logvar).mean();
    t.total = t.reconstruction + beta * t.kl;
    return t;
}

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ShapeError("reconstruction shape does not match input shape");
}

}  // namespace

ElboTerms elbo_from_probs(const torch::Tensor& onehot, const torch::Tensor& probs, const torch::Tensor& mean,
                          const torch::Tensor& logvar, double beta) {
    check_same_shape(onehot, probs);
    // xlogy keeps 0*log(0) at 0 so an exact one-hot reconstruction costs nothing
    const auto nll = -torch::xlogy(onehot, probs).flatten(1).sum(1);
    return combine(nll, mean, logvar, beta);
}

ElboTerms elbo_from_logits(const torch::Tensor& onehot, const torch::Tensor& logits, const torch::Tensor& mean,
                           const torch::Tensor& logvar, double beta) {
    check_same_shape(onehot, logits);
    const auto nll = -(onehot * torch::log_softmax(logits, 1)).flatten(1).sum(1);
    return combine(nll, mean, logvar, beta);
}

ElboTerms elbo_with_noise(BetaVae& net, const torch::Tensor& onehot, const torch::Tensor& noise, double beta) {
    auto [mean, logvar] = net->encode(onehot);
    const auto z = mean + torch::exp(0.5 * logvar) * noise;
    return elbo_from_logits(onehot, net->decode_logits(z), mean, logvar, beta);
}

CubeMask mirror(const CubeMask& mask) {
    CubeMask out;
    for (int r = 0; r < CubeMask::kSize; ++r) {
        for (int c = 0; c < CubeMask::kSize; ++c) out.at(r, c) = mask.at(r, CubeMask::kSize - 1 - c);
    }
    return out;
}

torch::Tensor onehot_batch(std::span<const CubeMask* const> masks, std::span<const bool> flips) {
    constexpr int n = CubeMask::kSize;
    auto out = torch::zeros({static_cast<std::int64_t>(masks.size()), kCategoryCount, n, n});
    auto acc = out.accessor<float, 4>();
    for (std::size_t b = 0; b < masks.size(); ++b) {
        const bool flip = b < flips.size() && flips[b];
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const auto k = static_cast<int>(masks[b]->at(r, flip ? n - 1 - c : c));
                if (k >= kCategoryCount) throw DataError("mask contains an invalid category");
                acc[static_cast<std::int64_t>(b)][k][r][c] = 1.0F;
            }
        }
    }
    return out;
}

torch::Tensor onehot_batch(std::span<const CubeMask> masks, bool flip) {
    std::vector<const CubeMask*> ptrs;
    for (const auto& m : masks) ptrs.push_back(&m);
    std::unique_ptr<bool[]> flips(new bool[masks.size() + 1]);
    std::fill_n(flips.get(), masks.size(), flip);
    return onehot_batch(ptrs, std::span<const bool>(flips.get(), masks.size()));
}

CubeMask argmax_mask(const torch::Tensor& scores) {
    if (scores.dim() != 3 || scores.size(1) != CubeMask::kSize || scores.size(2) != CubeMask::kSize) {
        throw ShapeError("expected a [C, 128, 128] score tensor");
    }
    const auto idx = scores.argmax(0).to(torch::kInt64).contiguous();
    const auto* p = idx.data_ptr<std::int64_t>();
    CubeMask out;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = static_cast<Category>(p[i]);
    return out;
}

nlohmann::json TrainLog::to_json(std::size_t stride) const {
    stride = std::max<std::size_t>(stride, 1);
    nlohmann::json j;
    j["iterations"] = loss.size();
    j["seconds"] = seconds;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < loss.size(); i += stride) {
        nlohmann::json row{{"iteration", i}, {"loss", loss[i]}};
        if (i < reconstruction.size()) row["reconstruction"] = reconstruction[i];
        if (i < kl.size()) row["kl"] = kl[i];
        rows.push_back(row);
    }
    j["trace"] = rows;
    if (!loss.empty()) j["final_loss"] = loss.back();
    return j;
}

VaeModel::VaeModel(const VaeArch& arch, const VaeConfig& config) : arch_(arch), config_(config), net_(nullptr) {
    arch_.validate();
    config_.validate();
    torch::manual_seed(derive_seed(config_.seed, "vae-init"));
    net_ = BetaVae(arch_);
    net_->eval();
}

std::pair<torch::Tensor, torch::Tensor> VaeModel::encode_tensor(const torch::Tensor& onehot) {
    if (onehot.dim() != 4 || onehot.size(1) != arch_.categories || onehot.size(2) != arch_.image ||
        onehot.size(3) != arch_.image) {
        throw ShapeError("encoder expects [B, " + std::to_string(arch_.categories) + ", " + std::to_string(arch_.image) +
                         ", " + std::to_string(arch_.image) + "] input");
    }
    torch::NoGradGuard guard;
    return net_->encode(onehot);
}

LatentCode VaeModel::encode(const CubeMask& mask) { return encode(std::span(&mask, 1)).front(); }

std::vector<LatentCode> VaeModel::encode(std::span<const CubeMask> masks) {
    std::vector<LatentCode> out;
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < masks.size(); start += chunk) {
        const auto part = masks.subspan(start, std::min(chunk, masks.size() - start));
        auto [mean, logvar] = encode_tensor(onehot_batch(part));
        mean = mean.contiguous();
        logvar = logvar.contiguous();
        for (std::int64_t b = 0; b < mean.size(0); ++b) {
            LatentCode code;
            for (int d = 0; d < kCodeDim && d < arch_.latent; ++d) {
                code.mean[static_cast<std::size_t>(d)] = mean[b][d].item<float>();
                code.logvar[static_cast<std::size_t>(d)] = logvar[b][d].item<float>();
            }
            out.push_back(code);
        }
    }
    return out;
}

torch::Tensor VaeModel::decode_probs(const torch::Tensor& z) {
    if (z.dim() != 2 || z.size(1) != arch_.latent) {
        throw ShapeError("decoder expects [B, " + std::to_string(arch_.latent) + "] codes");
    }
    if (!torch::isfinite(z).all().item<bool>()) throw InputError("latent code must be finite");
    torch::NoGradGuard guard;
    return torch::softmax(net_->decode_logits(z.to(torch::kFloat32)), 1);
}

CubeMask VaeModel::decode(std::span<const float> z) {
    if (static_cast<int>(z.size()) != arch_.latent) throw ShapeError("latent code has the wrong dimension");
    auto t = torch::from_blob(const_cast<float*>(z.data()), {1, arch_.latent}, torch::kFloat32).clone();
    return argmax_mask(decode_probs(t)[0]);
}

CubeMask VaeModel::reconstruct(const CubeMask& mask) {
    auto [mean, logvar] = encode_tensor(onehot_batch(std::span(&mask, 1)));
    return argmax_mask(decode_probs(mean)[0]);
}

std::string VaeModel::fingerprint() const { return state_fingerprint(*net_); }

void VaeModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    Checkpoint ck;
    ck.header = extra.is_object() ? extra : nlohmann::json::object();
    ck.header["kind"] = "beta-vae";
    ck.header["arch"] = arch_.to_json();
    ck.header["config"] = config_.to_json();
    ck.tensors = named_state(*net_);
    save_checkpoint(path, ck);
}

VaeModel VaeModel::load(const std::filesystem::path& path) {
    const auto ck = load_checkpoint(path);
    if (ck.header.value("kind", "") != "beta-vae") throw CorruptionError(path.string() + " is not a beta-vae checkpoint");
    try {
        VaeModel model(VaeArch::from_json(ck.header.at("arch")), VaeConfig::from_json(ck.header.at("config")));
        load_state(*model.net_, ck.tensors);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("malformed beta-vae header: ") + e.what());
    }
}

VaeModel train_vae(std::span<const CubeMask> corpus, const VaeArch& arch, const VaeConfig& config, TrainLog* log,
                   const ProgressFn& progress) {
    VaeModel model(arch, config);
    if (config.iterations == 0) return model;
    if (corpus.empty()) throw InsufficientDataError("vae training needs at least one mask");
    if (arch.image != CubeMask::kSize || arch.categories != kCategoryCount) {
        throw ConfigError("vae training on cube masks needs a 128x128, 4-category architecture");
    }

    const auto start = std::chrono::steady_clock::now();
    auto& net = model.net();
    net->train();
    torch::optim::Adam opt(net->parameters(),
                           torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, 0.999}));
    Rng batches(config.seed, "vae-batches");
    torch::manual_seed(derive_seed(config.seed, "vae-noise"));

    const auto batch = static_cast<std::size_t>(config.batch);
    std::vector<const CubeMask*> picked(batch);
    std::unique_ptr<bool[]> flips(new bool[batch]);
    for (int it = 0; it < config.iterations; ++it) {
        for (std::size_t b = 0; b < batch; ++b) {
            picked[b] = &corpus[batches.below(corpus.size())];
            flips[b] = config.flip_augment && batches.uniform() < 0.5;
        }
        const auto x = onehot_batch(picked, std::span<const bool>(flips.get(), batch));
        const auto noise = torch::randn({static_cast<std::int64_t>(batch), arch.latent});
        const auto terms = elbo_with_noise(net, x, noise, config.beta);
        const double loss = terms.total.item<double>();
        if (!std::isfinite(loss)) {
            throw DivergenceError("vae loss became non-finite at iteration " + std::to_string(it) +
                                  " (reconstruction " + std::to_string(terms.reconstruction.item<double>()) + ", kl " +
                                  std::to_string(terms.kl.item<double>()) + ")");
        }
        opt.zero_grad();
        terms.total.backward();
        opt.step();
        if (log) {
            log->loss.push_back(loss);
            log->reconstruction.push_back(terms.reconstruction.item<double>());
            log->kl.push_back(terms.kl.item<double>());
        }
        if (progress) progress(it, loss);
    }
    net->eval();
    if (log) log->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return model;
}

double reconstruction_accuracy(VaeModel& model, std::span<const CubeMask> masks) {
    if (masks.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& m : masks) sum += pixel_accuracy(model.reconstruct(m), m);
    return sum / static_cast<double>(masks.size());
}

}  // namespace urbansolar
