#include "urbansolar/editgan.hpp"

#include <chrono>
#include <cmath>

#include "urbansolar/checkpoint.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/fidelity.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

namespace {

void check_stack(const std::vector<int>& channels, int image, const char* what) {
    if (channels.empty()) throw ConfigError(std::string(what) + " needs at least one layer");
    for (int c : channels) {
        if (c <= 0) throw ConfigError(std::string(what) + " channel counts must be positive");
    }
    const int factor = 1 << channels.size();
    if (image % factor != 0) throw ConfigError(std::string(what) + " image size must be divisible by " + std::to_string(factor));
}

std::vector<std::pair<std::string, torch::Tensor>> prefixed(const std::string& prefix, const torch::nn::Module& m) {
    auto state = named_state(m);
    for (auto& [name, t] : state) name = prefix + name;
    return state;
}

std::vector<std::pair<std::string, torch::Tensor>> strip(const std::string& prefix,
                                                         const std::vector<std::pair<std::string, torch::Tensor>>& all) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& [name, t] : all) {
        if (name.rfind(prefix, 0) == 0) out.emplace_back(name.substr(prefix.size()), t);
    }
    return out;
}

}  // namespace

void GanArch::validate() const {
    check_stack(generator_channels, image, "generator");
    check_stack(discriminator_channels, image, "discriminator");
}

nlohmann::json GanArch::to_json() const {
    return {{"generator_channels", generator_channels}, {"discriminator_channels", discriminator_channels}, {"image", image}};
}

GanArch GanArch::from_json(const nlohmann::json& j) {
    GanArch a;
    a.generator_channels = j.at("generator_channels").get<std::vector<int>>();
    a.discriminator_channels = j.at("discriminator_channels").get<std::vector<int>>();
    a.image = j.at("image").get<int>();
    a.validate();
    return a;
}

void IdganConfig::validate() const {
    if (!(distill_weight >= 0.0)) throw ConfigError("distillation weight must be non-negative");
    if (batch <= 0) throw ConfigError("id-gan batch must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("id-gan learning rate must be positive");
    if (!(decay > 0.0) || decay_every <= 0) throw ConfigError("id-gan step size schedule is invalid");
    if (noise_dim < 0) throw ConfigError("noise dimension must be non-negative");
    if (iterations < 0) throw ConfigError("id-gan iterations must be non-negative");
}

nlohmann::json IdganConfig::to_json() const {
    return {{"distill_weight", distill_weight}, {"batch", batch},           {"learning_rate", learning_rate},
            {"decay", decay},                   {"decay_every", decay_every}, {"noise_dim", noise_dim},
            {"iterations", iterations},         {"seed", seed}};
}

IdganConfig IdganConfig::from_json(const nlohmann::json& j) {
    IdganConfig c;
    c.distill_weight = j.value("distill_weight", c.distill_weight);
    c.batch = j.value("batch", c.batch);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay = j.value("decay", c.decay);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.noise_dim = j.value("noise_dim", c.noise_dim);
    c.iterations = j.value("iterations", c.iterations);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

GanGeneratorImpl::GanGeneratorImpl(const GanArch& arch, int input_dim) : arch_(arch) {
    namespace nn = torch::nn;
    const auto& ch = arch_.generator_channels;
    side_ = arch_.image >> ch.size();
    project_ = register_module("project", nn::Linear(input_dim, ch.front() * side_ * side_));
    body_ = nn::Sequential();
    for (std::size_t i = 0; i < ch.size(); ++i) {
        const int out = i + 1 < ch.size() ? ch[i + 1] : 1;
        body_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch[i], out, 4).stride(2).padding(1)));
        if (i + 1 < ch.size()) body_->push_back(nn::ReLU());
    }
    register_module("body", body_);
}

torch::Tensor GanGeneratorImpl::forward(const torch::Tensor& input) {
    auto h = torch::relu(project_->forward(input)).view({-1, arch_.generator_channels.front(), side_, side_});
    return torch::tanh(body_->forward(h));
}

GanDiscriminatorImpl::GanDiscriminatorImpl(const GanArch& arch) {
    namespace nn = torch::nn;
    body_ = nn::Sequential();
    int in = 1;
    for (int c : arch.discriminator_channels) {
        body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, c, 4).stride(2).padding(1)));
        body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
        in = c;
    }
    const int side = arch.image >> arch.discriminator_channels.size();
    head_ = nn::Linear(in * side * side, 1);
    register_module("body", body_);
    register_module("head", head_);
}

torch::Tensor GanDiscriminatorImpl::forward(const torch::Tensor& image) {
    return head_->forward(body_->forward(image).flatten(1)).squeeze(1);
}

FrozenEncoder::FrozenEncoder(VaeModel& model) : model_(&model) {
    for (auto& p : model.net()->parameters()) p.requires_grad_(false);
    model.net()->eval();
    fingerprint_ = model.fingerprint();
}

void FrozenEncoder::check() const {
    for (const auto& p : model_->net()->parameters()) {
        if (p.requires_grad()) throw UsageError("the distillation encoder must stay frozen");
    }
}

std::pair<torch::Tensor, torch::Tensor> FrozenEncoder::encode(const torch::Tensor& onehot) const {
    check();
    return model_->net()->encode(onehot);
}

torch::Tensor to_gray(const torch::Tensor& unit) { return (unit + 1.0) * 127.5; }
torch::Tensor from_gray(const torch::Tensor& gray) { return gray / 127.5 - 1.0; }

torch::Tensor gray_batch(std::span<const CubeMask* const> masks, std::span<const bool> flips) {
    constexpr int n = CubeMask::kSize;
    auto out = torch::empty({static_cast<std::int64_t>(masks.size()), 1, n, n});
    auto acc = out.accessor<float, 4>();
    for (std::size_t b = 0; b < masks.size(); ++b) {
        const bool flip = b < flips.size() && flips[b];
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                acc[static_cast<std::int64_t>(b)][0][r][c] = palette_level(masks[b]->at(r, flip ? n - 1 - c : c));
            }
        }
    }
    return out;
}

torch::Tensor straight_through_onehot(const torch::Tensor& gray, double temperature) {
    // channel order follows Category: sky, ground, opaque, glazing
    const auto levels = torch::tensor({255.0, 0.0, 85.0, 170.0}, gray.options()).view({1, 4, 1, 1});
    const auto soft = torch::softmax(-(gray - levels).pow(2) / temperature, 1);
    // same rounding as nearest_category: level index round-half-up, then to channel
    const auto level = torch::floor(gray.detach().clamp(0.0, 255.0) / 85.0 + 0.5).clamp(0, 3).to(torch::kLong);
    const auto lut = torch::tensor({1, 2, 3, 0}, torch::kLong);
    const auto channel = lut.index({level.squeeze(1)});
    const auto hard = torch::one_hot(channel, 4).permute({0, 3, 1, 2}).to(gray.dtype());
    return hard + soft - soft.detach();
}

torch::Tensor gaussian_log_likelihood(const torch::Tensor& code, const torch::Tensor& mean, const torch::Tensor& logvar) {
    const double log2pi = std::log(2.0 * M_PI);
    return (-0.5 * (log2pi + logvar + (code - mean).pow(2) / logvar.exp())).sum(1);
}

torch::Tensor distillation_regularizer(const torch::Tensor& generated_unit, const torch::Tensor& codes,
                                       const FrozenEncoder& encoder) {
    encoder.check();
    const auto onehot = straight_through_onehot(to_gray(generated_unit));
    auto [mean, logvar] = encoder.encode(onehot);
    return gaussian_log_likelihood(codes, mean, logvar).mean();
}

AdversarialTerms adversarial_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                                    const torch::Tensor& fake_logits_for_generator, const torch::Tensor& regularizer,
                                    double weight) {
    AdversarialTerms t;
    t.discriminator = torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
    t.regularizer = regularizer;
    t.generator = torch::softplus(-fake_logits_for_generator).mean();
    if (weight != 0.0) t.generator = t.generator - weight * regularizer;
    return t;
}

nlohmann::json IdganLog::to_json(std::size_t stride) const {
    stride = std::max<std::size_t>(stride, 1);
    nlohmann::json j;
    j["iterations"] = generator_loss.size();
    j["seconds"] = seconds;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < generator_loss.size(); i += stride) {
        rows.push_back({{"iteration", i},
                        {"discriminator_loss", discriminator_loss[i]},
                        {"generator_loss", generator_loss[i]},
                        {"regularizer", regularizer[i]},
                        {"discriminator_accuracy", discriminator_accuracy[i]}});
    }
    j["trace"] = rows;
    return j;
}

IdganModel::IdganModel(const GanArch& arch, const IdganConfig& config)
    : arch_(arch), config_(config), generator_(nullptr), discriminator_(nullptr) {
    arch_.validate();
    config_.validate();
    torch::manual_seed(derive_seed(config_.seed, "idgan-init"));
    generator_ = GanGenerator(arch_, kCodeDim + config_.noise_dim);
    discriminator_ = GanDiscriminator(arch_);
    generator_->eval();
    discriminator_->eval();
}

torch::Tensor IdganModel::generate_gray(const torch::Tensor& codes, const torch::Tensor& noise) {
    if (codes.dim() != 2 || codes.size(1) != kCodeDim || noise.dim() != 2 || noise.size(1) != config_.noise_dim ||
        codes.size(0) != noise.size(0)) {
        throw ShapeError("generator expects [B, " + std::to_string(kCodeDim) + "] codes and [B, " +
                         std::to_string(config_.noise_dim) + "] noise");
    }
    if (!torch::isfinite(codes).all().item<bool>() || !torch::isfinite(noise).all().item<bool>()) {
        throw InputError("generator inputs must be finite");
    }
    torch::NoGradGuard guard;
    return to_gray(generator_->forward(torch::cat({codes, noise}, 1).to(torch::kFloat32)));
}

std::vector<float> IdganModel::generate_image(std::span<const float> code, std::span<const float> noise) {
    if (static_cast<int>(code.size()) != kCodeDim || static_cast<int>(noise.size()) != config_.noise_dim) {
        throw ShapeError("generator input must be " + std::to_string(kCodeDim) + " code values and " +
                         std::to_string(config_.noise_dim) + " noise values");
    }
    const auto c = torch::from_blob(const_cast<float*>(code.data()), {1, kCodeDim}, torch::kFloat32);
    const auto s = torch::from_blob(const_cast<float*>(noise.data()), {1, config_.noise_dim}, torch::kFloat32);
    const auto gray = generate_gray(c, s).contiguous();
    return {gray.data_ptr<float>(), gray.data_ptr<float>() + gray.numel()};
}

torch::Tensor IdganModel::real_probability(const torch::Tensor& gray) {
    torch::NoGradGuard guard;
    return torch::sigmoid(discriminator_->forward(from_gray(gray)));
}

std::string IdganModel::fingerprint() const {
    auto all = prefixed("generator.", *generator_);
    const auto d = prefixed("discriminator.", *discriminator_);
    all.insert(all.end(), d.begin(), d.end());
    return Checkpoint{{}, all}.fingerprint();
}

void IdganModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    Checkpoint ck;
    ck.header = extra.is_object() ? extra : nlohmann::json::object();
    ck.header["kind"] = "id-gan";
    ck.header["arch"] = arch_.to_json();
    ck.header["config"] = config_.to_json();
    ck.header["encoder_fingerprint"] = encoder_fingerprint;
    ck.tensors = prefixed("generator.", *generator_);
    const auto d = prefixed("discriminator.", *discriminator_);
    ck.tensors.insert(ck.tensors.end(), d.begin(), d.end());
    save_checkpoint(path, ck);
}

IdganModel IdganModel::load(const std::filesystem::path& path) {
    const auto ck = load_checkpoint(path);
    if (ck.header.value("kind", "") != "id-gan") throw CorruptionError(path.string() + " is not an id-gan checkpoint");
    try {
        IdganModel model(GanArch::from_json(ck.header.at("arch")), IdganConfig::from_json(ck.header.at("config")));
        load_state(*model.generator_, strip("generator.", ck.tensors));
        load_state(*model.discriminator_, strip("discriminator.", ck.tensors));
        model.encoder_fingerprint = ck.header.value("encoder_fingerprint", "");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("malformed id-gan header: ") + e.what());
    }
}

IdganModel train_idgan(std::span<const CubeMask> corpus, const FrozenEncoder& encoder, const GanArch& arch,
                       const IdganConfig& config, IdganLog* log, const ProgressFn& progress) {
    IdganModel model(arch, config);
    model.encoder_fingerprint = encoder.fingerprint();
    if (config.iterations == 0) return model;
    if (corpus.empty()) throw InsufficientDataError("id-gan training needs at least one mask");
    if (arch.image != CubeMask::kSize) throw ConfigError("id-gan training on cube masks needs 128x128 images");
    encoder.check();

    const auto start = std::chrono::steady_clock::now();
    // posterior of every training mask under the frozen encoder
    torch::Tensor post_mean;
    torch::Tensor post_logvar;
    {
        std::vector<torch::Tensor> means;
        std::vector<torch::Tensor> logvars;
        for (std::size_t s = 0; s < corpus.size(); s += 64) {
            const auto part = corpus.subspan(s, std::min<std::size_t>(64, corpus.size() - s));
            auto [m, l] = encoder.model().encode_tensor(onehot_batch(part));
            means.push_back(m);
            logvars.push_back(l);
        }
        post_mean = torch::cat(means);
        post_logvar = torch::cat(logvars);
    }

    auto& gen = model.generator();
    auto& disc = model.discriminator();
    gen->train();
    disc->train();
    using torch::optim::RMSprop;
    using torch::optim::RMSpropOptions;
    RMSprop opt_g(gen->parameters(), RMSpropOptions(config.learning_rate));
    RMSprop opt_d(disc->parameters(), RMSpropOptions(config.learning_rate));
    Rng batches(config.seed, "idgan-batches");
    torch::manual_seed(derive_seed(config.seed, "idgan-noise"));

    const auto batch = static_cast<std::size_t>(config.batch);
    std::vector<const CubeMask*> real(batch);
    std::vector<std::int64_t> picks(batch);
    for (int it = 0; it < config.iterations; ++it) {
        const double lr = config.learning_rate * std::pow(config.decay, it / config.decay_every);
        for (auto* opt : {&opt_g, &opt_d}) {
            for (auto& group : opt->param_groups()) static_cast<RMSpropOptions&>(group.options()).lr(lr);
        }
        for (std::size_t b = 0; b < batch; ++b) {
            real[b] = &corpus[batches.below(corpus.size())];
            picks[b] = static_cast<std::int64_t>(batches.below(corpus.size()));
        }
        const auto x = from_gray(gray_batch(real));
        const auto idx = torch::tensor(picks, torch::kLong);
        const auto m = post_mean.index_select(0, idx);
        const auto l = post_logvar.index_select(0, idx);
        const auto codes = m + torch::exp(0.5 * l) * torch::randn_like(m);
        const auto noise = torch::randn({static_cast<std::int64_t>(batch), config.noise_dim});
        const auto input = torch::cat({codes, noise}, 1);

        // discriminator step
        const auto fake = gen->forward(input);
        const auto real_logits = disc->forward(x);
        const auto fake_logits = disc->forward(fake.detach());
        const auto d_loss = torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
        opt_d.zero_grad();
        d_loss.backward();
        opt_d.step();

        // generator step
        const auto regularizer =
            config.distill_weight > 0.0 ? distillation_regularizer(fake, codes, encoder) : torch::zeros({});
        const auto terms = adversarial_losses(real_logits.detach(), fake_logits.detach(), disc->forward(fake),
                                              regularizer, config.distill_weight);
        opt_g.zero_grad();
        terms.generator.backward();
        opt_g.step();

        const double dl = d_loss.item<double>();
        const double gl = terms.generator.item<double>();
        if (!std::isfinite(dl) || !std::isfinite(gl)) {
            throw DivergenceError("id-gan loss became non-finite at iteration " + std::to_string(it) +
                                  " (discriminator " + std::to_string(dl) + ", generator " + std::to_string(gl) + ")");
        }
        if (log) {
            const double correct = (real_logits > 0).sum().item<double>() + (fake_logits < 0).sum().item<double>();
            log->discriminator_loss.push_back(dl);
            log->generator_loss.push_back(gl);
            log->regularizer.push_back(regularizer.item<double>());
            log->discriminator_accuracy.push_back(correct / (2.0 * static_cast<double>(batch)));
        }
        if (progress) progress(it, gl);
    }
    gen->eval();
    disc->eval();
    if (log) log->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return model;
}

std::vector<float> default_sweep(int steps, float lo, float hi) {
    std::vector<float> out;
    for (int i = 0; i < steps; ++i) {
        out.push_back(steps == 1 ? lo : lo + (hi - lo) * static_cast<float>(i) / static_cast<float>(steps - 1));
    }
    return out;
}

std::vector<CubeMask> traverse(VaeModel& encoder, IdganModel& generator, const CubeMask& mask, int dim,
                               std::span<const float> values, std::span<const float> noise) {
    if (dim < 0 || dim >= kCodeDim) throw InputError("latent dimension " + std::to_string(dim) + " is outside 0..31");
    const auto code = encoder.encode(mask).mean;
    std::vector<CubeMask> out;
    for (float v : values) {
        auto edited = code;
        edited[static_cast<std::size_t>(dim)] = v;
        out.push_back(quantize(generator.generate_image(edited, noise)));
    }
    return out;
}

CubeMask regenerate(VaeModel& encoder, IdganModel& generator, const CubeMask& mask, std::span<const float> noise) {
    const auto code = encoder.encode(mask).mean;
    return quantize(generator.generate_image(code, noise));
}

nlohmann::json WwrDimension::to_json() const {
    return {{"dim", dim}, {"sign", sign}, {"shift", shift}, {"margin", margin}, {"low_confidence", low_confidence}};
}

WwrDimension find_wwr_dimension(std::span<const WwrTriplet> triplets) {
    if (triplets.size() < 10) {
        throw InsufficientDataError("need at least 10 WWR triplets, got " + std::to_string(triplets.size()));
    }
    WwrDimension out;
    for (const auto& t : triplets) {
        for (int d = 0; d < kCodeDim; ++d) out.shift[d] += static_cast<double>(t.high[d]) - t.zero[d];
    }
    for (auto& s : out.shift) s /= static_cast<double>(triplets.size());
    double best = -1.0;
    double runner = -1.0;
    for (int d = 0; d < kCodeDim; ++d) {
        const double a = std::abs(out.shift[d]);
        if (a > best) {
            runner = best;
            best = a;
            out.dim = d;
        } else if (a > runner) {
            runner = a;
        }
    }
    out.sign = out.shift[out.dim] < 0.0 ? -1 : 1;
    out.margin = best - runner;
    out.low_confidence = out.margin <= 1e-9 * std::max(1.0, best);
    return out;
}

}  // namespace urbansolar
