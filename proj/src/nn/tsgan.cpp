#include "urbansolar/tsgan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "urbansolar/checkpoint.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/rng.hpp"

namespace urbansolar {

namespace {

using State = std::vector<std::pair<std::string, torch::Tensor>>;

void append(State& out, const std::string& prefix, const torch::nn::Module& m) {
    for (auto& [name, t] : named_state(m)) out.emplace_back(prefix + name, t);
}

State strip(const std::string& prefix, const State& all) {
    State out;
    for (const auto& [name, t] : all) {
        if (name.rfind(prefix, 0) == 0) out.emplace_back(name.substr(prefix.size()), t);
    }
    return out;
}

torch::Tensor condition_tensor(std::span<const Condition> conditions) {
    auto t = torch::empty({static_cast<std::int64_t>(conditions.size()), kConditionDim});
    auto acc = t.accessor<float, 2>();
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        for (int d = 0; d < kConditionDim; ++d) acc[static_cast<std::int64_t>(i)][d] = conditions[i][d];
    }
    return t;
}

torch::Tensor normal_tensor(Rng& rng, std::vector<std::int64_t> shape) {
    auto t = torch::empty(shape);
    auto* p = t.data_ptr<float>();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

Condition make_condition(const Attributes& raw_attributes, const ImageCode& code, const NormalizationStats& stats) {
    const auto z = normalize_attributes(raw_attributes, stats);
    Condition c{};
    std::copy(z.begin(), z.end(), c.begin());
    std::copy(code.begin(), code.end(), c.begin() + kAttributeDim);
    return c;
}

Condition make_condition(const NormalizedSample& sample) {
    Condition c{};
    std::copy(sample.attributes.begin(), sample.attributes.end(), c.begin());
    std::copy(sample.image_code.begin(), sample.image_code.end(), c.begin() + kAttributeDim);
    return c;
}

void TsganArch::validate() const {
    if (hidden <= 0 || aux_hidden <= 0 || critic_hidden <= 0) throw ConfigError("tsgan layer widths must be positive");
    if (aux_noise < 0 || step_noise < 0) throw ConfigError("tsgan noise sizes must be non-negative");
}

nlohmann::json TsganArch::to_json() const {
    return {{"hidden", hidden},       {"aux_hidden", aux_hidden}, {"critic_hidden", critic_hidden},
            {"aux_noise", aux_noise}, {"step_noise", step_noise}, {"hour_phase", hour_phase}};
}

TsganArch TsganArch::from_json(const nlohmann::json& j) {
    TsganArch a;
    a.hidden = j.value("hidden", a.hidden);
    a.aux_hidden = j.value("aux_hidden", a.aux_hidden);
    a.critic_hidden = j.value("critic_hidden", a.critic_hidden);
    a.aux_noise = j.value("aux_noise", a.aux_noise);
    a.step_noise = j.value("step_noise", a.step_noise);
    a.hour_phase = j.value("hour_phase", a.hour_phase);
    a.validate();
    return a;
}

void TsganConfig::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("tsgan alpha must be non-negative");
    if (!(penalty > 0.0) || !(aux_penalty > 0.0)) throw ConfigError("gradient penalty weights must be positive");
    if (batch <= 0) throw ConfigError("tsgan batch must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("tsgan learning rate must be positive");
    if (critic_steps < 1) throw ConfigError("tsgan critic steps must be at least 1");
    if (ensemble < 1) throw ConfigError("ensemble size must be at least 1");
    if (iterations < 0) throw ConfigError("tsgan iterations must be non-negative");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw ConfigError("data fraction must be in (0, 1]");
}

nlohmann::json TsganConfig::to_json() const {
    return {{"alpha", alpha},
            {"penalty", penalty},
            {"aux_penalty", aux_penalty},
            {"batch", batch},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"critic_steps", critic_steps},
            {"ensemble", ensemble},
            {"iterations", iterations},
            {"data_fraction", data_fraction},
            {"seed", seed}};
}

TsganConfig TsganConfig::from_json(const nlohmann::json& j) {
    TsganConfig c;
    c.alpha = j.value("alpha", c.alpha);
    c.penalty = j.value("penalty", c.penalty);
    c.aux_penalty = j.value("aux_penalty", c.aux_penalty);
    c.batch = j.value("batch", c.batch);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.critic_steps = j.value("critic_steps", c.critic_steps);
    c.ensemble = j.value("ensemble", c.ensemble);
    c.iterations = j.value("iterations", c.iterations);
    c.data_fraction = j.value("data_fraction", c.data_fraction);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

AuxGeneratorImpl::AuxGeneratorImpl(const TsganArch& arch) {
    namespace nn = torch::nn;
    body_ = register_module("body", nn::Sequential(nn::Linear(kConditionDim + arch.aux_noise, arch.aux_hidden), nn::ReLU(),
                                                   nn::Linear(arch.aux_hidden, arch.aux_hidden), nn::ReLU(),
                                                   nn::Linear(arch.aux_hidden, 2)));
}

torch::Tensor AuxGeneratorImpl::forward(const torch::Tensor& condition, const torch::Tensor& noise) {
    const auto out = body_->forward(torch::cat({condition, noise}, 1));
    const auto mid = torch::sigmoid(out.select(1, 0));
    const auto half = torch::softplus(out.select(1, 1));
    return torch::stack({mid - half, mid + half}, 1);
}

SeriesGeneratorImpl::SeriesGeneratorImpl(const TsganArch& arch) : arch_(arch) {
    const int input = kConditionDim + 2 + arch.step_noise + (arch.hour_phase ? 2 : 0);
    lstm_ = register_module("lstm", torch::nn::LSTM(torch::nn::LSTMOptions(input, arch.hidden).batch_first(true)));
    head_ = register_module("head", torch::nn::Linear(arch.hidden, 1));
    phase_ = torch::empty({kPatchLength, 2});
    for (int t = 0; t < kPatchLength; ++t) {
        const double angle = 2.0 * std::numbers::pi * (t % kStepsPerDay) / kStepsPerDay;
        phase_[t][0] = std::sin(angle);
        phase_[t][1] = std::cos(angle);
    }
}

torch::Tensor SeriesGeneratorImpl::forward(const torch::Tensor& condition, const torch::Tensor& minmax,
                                           const torch::Tensor& noise) {
    const auto b = condition.size(0);
    std::vector<torch::Tensor> parts{torch::cat({condition, minmax}, 1).unsqueeze(1).expand({b, kPatchLength, -1}), noise};
    if (arch_.hour_phase) parts.push_back(phase_.to(condition.dtype()).unsqueeze(0).expand({b, kPatchLength, 2}));
    const auto out = std::get<0>(lstm_->forward(torch::cat(parts, 2)));
    return torch::sigmoid(head_->forward(out).squeeze(2));
}

CriticImpl::CriticImpl(int input, int hidden) {
    namespace nn = torch::nn;
    const auto leaky = nn::LeakyReLUOptions().negative_slope(0.2);
    body_ = register_module("body", nn::Sequential(nn::Linear(input, hidden), nn::LeakyReLU(leaky),
                                                   nn::Linear(hidden, hidden), nn::LeakyReLU(leaky),
                                                   nn::Linear(hidden, 1)));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& x) { return body_->forward(x).squeeze(1); }

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               const torch::Tensor& eps) {
    if (real.sizes() != fake.sizes()) throw ShapeError("real and fake critic inputs differ in shape");
    const auto interp = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(true);
    const auto out = critic(interp);
    const auto grad = torch::autograd::grad({out.sum()}, {interp}, {}, true, true)[0];
    const auto norm = torch::sqrt(grad.flatten(1).pow(2).sum(1) + 1e-12);
    return (norm - 1.0).pow(2).mean();
}

WganTerms critic_loss(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                      const torch::Tensor& eps, double weight) {
    WganTerms t;
    t.wasserstein = critic(fake).mean() - critic(real).mean();
    t.penalty = gradient_penalty(critic, real, fake, eps);
    t.total = weight == 0.0 ? t.wasserstein : t.wasserstein + weight * t.penalty;
    return t;
}

torch::Tensor generator_loss(const CriticFn& critic, const torch::Tensor& fake) { return -critic(fake).mean(); }

nlohmann::json TsganLog::to_json(std::size_t stride) const {
    stride = std::max<std::size_t>(stride, 1);
    nlohmann::json j;
    j["iterations"] = generator_loss.size();
    j["seconds"] = seconds;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < generator_loss.size(); i += stride) {
        rows.push_back({{"iteration", i},
                        {"critic_loss", critic_loss[i]},
                        {"generator_loss", generator_loss[i]},
                        {"wasserstein", wasserstein[i]},
                        {"aux_wasserstein", aux_wasserstein[i]}});
    }
    j["trace"] = rows;
    return j;
}

TsganModel::TsganModel(const TsganArch& arch, const TsganConfig& config)
    : arch_(arch), config_(config), aux_(nullptr), series_(nullptr), critic_(nullptr), aux_critic_(nullptr) {
    arch_.validate();
    config_.validate();
    torch::manual_seed(derive_seed(config_.seed, "tsgan-init"));
    aux_ = AuxGenerator(arch_);
    series_ = SeriesGenerator(arch_);
    critic_ = Critic(kPatchLength + 2 + kConditionDim, arch_.critic_hidden);
    aux_critic_ = Critic(2 + kConditionDim, arch_.critic_hidden);
}

std::pair<float, float> TsganModel::aux_generate(const Condition& condition, std::span<const float> noise) {
    if (static_cast<int>(noise.size()) != arch_.aux_noise) throw ShapeError("aux noise has the wrong dimension");
    torch::NoGradGuard guard;
    const auto c = condition_tensor(std::span(&condition, 1));
    const auto z = torch::from_blob(const_cast<float*>(noise.data()), {1, arch_.aux_noise}, torch::kFloat32);
    const auto mm = aux_->forward(c, z);
    return {mm[0][0].item<float>(), mm[0][1].item<float>()};
}

Patch TsganModel::ts_generate(const Condition& condition, float min_norm, float max_norm, std::span<const float> noise) {
    if (static_cast<int>(noise.size()) != kPatchLength * arch_.step_noise) {
        throw ShapeError("step noise must hold " + std::to_string(kPatchLength * arch_.step_noise) + " values");
    }
    torch::NoGradGuard guard;
    const auto c = condition_tensor(std::span(&condition, 1));
    const auto mm = torch::tensor({min_norm, max_norm}).view({1, 2});
    const auto z = torch::from_blob(const_cast<float*>(noise.data()), {1, kPatchLength, arch_.step_noise}, torch::kFloat32);
    const auto out = series_->forward(c, mm, z).contiguous();
    Patch p{};
    std::copy_n(out.data_ptr<float>(), kPatchLength, p.begin());
    return p;
}

std::vector<GeneratedPatch> TsganModel::sample(std::span<const Condition> conditions, int per_condition,
                                               std::uint64_t seed) {
    if (per_condition < 1) throw InputError("ensemble size must be at least 1");
    torch::NoGradGuard guard;
    const auto n = static_cast<std::int64_t>(conditions.size()) * per_condition;
    const auto c = condition_tensor(conditions).repeat_interleave(per_condition, 0);
    Rng rng(seed);
    const auto aux_noise = normal_tensor(rng, {n, arch_.aux_noise});
    const auto step_noise = normal_tensor(rng, {n, kPatchLength, arch_.step_noise});
    const auto mm = aux_->forward(c, aux_noise);
    const auto unit = series_->forward(c, mm, step_noise).contiguous();
    const auto mmc = mm.contiguous();
    std::vector<GeneratedPatch> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        auto& g = out[static_cast<std::size_t>(i)];
        std::copy_n(unit.data_ptr<float>() + i * kPatchLength, kPatchLength, g.unit.begin());
        g.min_norm = mmc.data_ptr<float>()[2 * i];
        g.max_norm = mmc.data_ptr<float>()[2 * i + 1];
    }
    return out;
}

Patch to_physical(const GeneratedPatch& g, double scale) {
    Patch p{};
    const double lo = g.min_norm * scale;
    const double hi = g.max_norm * scale;
    for (int t = 0; t < kPatchLength; ++t) p[t] = static_cast<float>(std::max(0.0, lo + g.unit[t] * (hi - lo)));
    return p;
}

std::vector<Patch> TsganModel::generate_ensemble(const Condition& condition, int n, std::uint64_t seed) {
    if (stats.provenance.empty()) throw UsageError("the model carries no normalization statistics");
    std::vector<Patch> out;
    for (const auto& g : sample(std::span(&condition, 1), n, seed)) out.push_back(to_physical(g, stats.series_scale));
    return out;
}

std::vector<std::vector<double>> TsganModel::generate_annual(std::span<const Condition> weekly, int n,
                                                             std::uint64_t seed) {
    if (weekly.size() != static_cast<std::size_t>(kWeeks)) throw InputError("annual generation needs 52 weekly conditions");
    if (stats.provenance.empty()) throw UsageError("the model carries no normalization statistics");
    const auto draws = sample(weekly, n, seed);
    std::vector<std::vector<double>> out;
    for (int m = 0; m < n; ++m) {
        std::vector<std::vector<double>> patches;
        for (int w = 0; w < kWeeks; ++w) {
            const auto p = to_physical(draws[static_cast<std::size_t>(w * n + m)], stats.series_scale);
            patches.emplace_back(p.begin(), p.end());
        }
        out.push_back(assemble_annual(patches));
    }
    return out;
}

State TsganModel::state() const {
    State all;
    append(all, "aux.", *aux_);
    append(all, "series.", *series_);
    append(all, "critic.", *critic_);
    append(all, "aux_critic.", *aux_critic_);
    return all;
}

std::string TsganModel::fingerprint() const { return Checkpoint{{}, state()}.fingerprint(); }

void TsganModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    Checkpoint ck;
    ck.header = extra.is_object() ? extra : nlohmann::json::object();
    ck.header["kind"] = "tsgan";
    ck.header["arch"] = arch_.to_json();
    ck.header["config"] = config_.to_json();
    ck.header["stats"] = stats.to_json();
    ck.header["encoder_fingerprint"] = encoder_fingerprint;
    ck.tensors = state();
    save_checkpoint(path, ck);
}

TsganModel TsganModel::load(const std::filesystem::path& path) {
    const auto ck = load_checkpoint(path);
    if (ck.header.value("kind", "") != "tsgan") throw CorruptionError(path.string() + " is not a tsgan checkpoint");
    try {
        TsganModel model(TsganArch::from_json(ck.header.at("arch")), TsganConfig::from_json(ck.header.at("config")));
        load_state(*model.aux_, strip("aux.", ck.tensors));
        load_state(*model.series_, strip("series.", ck.tensors));
        load_state(*model.critic_, strip("critic.", ck.tensors));
        load_state(*model.aux_critic_, strip("aux_critic.", ck.tensors));
        model.stats = NormalizationStats::from_json(ck.header.at("stats"));
        model.encoder_fingerprint = ck.header.value("encoder_fingerprint", "");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("malformed tsgan header: ") + e.what());
    }
}

TsganModel train_tsgan(std::span<const NormalizedSample> train, const NormalizationStats& stats, const TsganArch& arch,
                       const TsganConfig& config, TsganLog* log, const ProgressFn& progress,
                       const std::optional<std::filesystem::path>& last_good) {
    TsganModel model(arch, config);
    model.stats = stats;
    if (config.iterations == 0) return model;
    if (train.empty()) throw InsufficientDataError("tsgan training needs records");
    const auto start = std::chrono::steady_clock::now();

    // optional random subset of the training records
    std::vector<std::size_t> use(train.size());
    std::iota(use.begin(), use.end(), std::size_t{0});
    if (config.data_fraction < 1.0) {
        Rng pick(config.seed, "tsgan-subset");
        pick.shuffle(use.begin(), use.end());
        const auto keep = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(config.data_fraction * static_cast<double>(use.size()))));
        use.resize(keep);
        std::sort(use.begin(), use.end());
    }
    const auto n = static_cast<std::int64_t>(use.size());
    auto cond = torch::empty({n, kConditionDim});
    auto series = torch::empty({n, kPatchLength});
    auto minmax = torch::empty({n, 2});
    {
        auto c = cond.accessor<float, 2>();
        auto s = series.accessor<float, 2>();
        auto m = minmax.accessor<float, 2>();
        for (std::int64_t i = 0; i < n; ++i) {
            const auto& r = train[use[static_cast<std::size_t>(i)]];
            const auto cv = make_condition(r);
            for (int d = 0; d < kConditionDim; ++d) c[i][d] = cv[d];
            for (int t = 0; t < kPatchLength; ++t) s[i][t] = r.series[t];
            m[i][0] = r.min_norm;
            m[i][1] = r.max_norm;
        }
    }

    auto& aux = model.aux();
    auto& gen = model.series();
    auto& critic = model.critic();
    auto& aux_critic = model.aux_critic();
    std::vector<torch::Tensor> gen_params = aux->parameters();
    for (auto& p : gen->parameters()) gen_params.push_back(p);
    std::vector<torch::Tensor> critic_params = critic->parameters();
    for (auto& p : aux_critic->parameters()) critic_params.push_back(p);
    const auto adam = torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, 0.999});
    torch::optim::Adam opt_g(gen_params, adam);
    torch::optim::Adam opt_d(critic_params, adam);

    Rng batches(config.seed, "tsgan-batches");
    torch::manual_seed(derive_seed(config.seed, "tsgan-noise"));
    const auto b = static_cast<std::int64_t>(config.batch);
    const auto draw = [&] {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(b));
        for (auto& i : idx) i = static_cast<std::int64_t>(batches.below(static_cast<std::uint64_t>(n)));
        return torch::tensor(idx, torch::kLong);
    };
    const auto fake_batch = [&](const torch::Tensor& c) {
        const auto mm = aux->forward(c, torch::randn({b, arch.aux_noise}));
        const auto s = gen->forward(c, mm, torch::randn({b, kPatchLength, arch.step_noise}));
        return std::make_pair(s, mm);
    };
    const CriticFn main_fn = [&](const torch::Tensor& x) { return critic->forward(x); };
    const CriticFn aux_fn = [&](const torch::Tensor& x) { return aux_critic->forward(x); };

    State snapshot;
    for (int it = 0; it < config.iterations; ++it) {
        double d_loss = 0.0;
        double w_est = 0.0;
        double aux_w = 0.0;
        for (int k = 0; k < config.critic_steps; ++k) {
            const auto idx = draw();
            const auto c = cond.index_select(0, idx);
            const auto real = torch::cat({series.index_select(0, idx), minmax.index_select(0, idx), c}, 1);
            const auto real_aux = torch::cat({minmax.index_select(0, idx), c}, 1);
            torch::Tensor fake;
            torch::Tensor fake_aux;
            {
                torch::NoGradGuard guard;
                const auto [s, mm] = fake_batch(c);
                fake = torch::cat({s, mm, c}, 1);
                fake_aux = torch::cat({mm, c}, 1);
            }
            const auto main_terms = critic_loss(main_fn, real, fake, torch::rand({b, 1}), config.penalty);
            const auto aux_terms = critic_loss(aux_fn, real_aux, fake_aux, torch::rand({b, 1}), config.aux_penalty);
            const auto total = main_terms.total + config.alpha * aux_terms.total;
            opt_d.zero_grad();
            total.backward();
            opt_d.step();
            d_loss = total.item<double>();
            w_est = -main_terms.wasserstein.item<double>();
            aux_w = -aux_terms.wasserstein.item<double>();
        }
        const auto c = cond.index_select(0, draw());
        const auto [s, mm] = fake_batch(c);
        const auto g_loss = generator_loss(main_fn, torch::cat({s, mm, c}, 1)) +
                            config.alpha * generator_loss(aux_fn, torch::cat({mm, c}, 1));
        opt_g.zero_grad();
        g_loss.backward();
        opt_g.step();
        const double gl = g_loss.item<double>();

        if (!std::isfinite(d_loss) || !std::isfinite(gl)) {
            std::string where;
            if (last_good && !snapshot.empty()) {
                Checkpoint ck;
                ck.header = {{"kind", "tsgan"}, {"arch", arch.to_json()}, {"config", config.to_json()},
                             {"stats", stats.to_json()}, {"encoder_fingerprint", ""}, {"iteration", it - 1}};
                ck.tensors = snapshot;
                save_checkpoint(*last_good, ck);
                where = "; last finite parameters saved to " + last_good->string();
            }
            throw DivergenceError("tsgan loss became non-finite at iteration " + std::to_string(it) + where);
        }
        if (last_good) {
            snapshot.clear();
            torch::NoGradGuard guard;
            for (const auto& [name, t] : model.state()) snapshot.emplace_back(name, t.clone());
        }
        if (log) {
            log->critic_loss.push_back(d_loss);
            log->generator_loss.push_back(gl);
            log->wasserstein.push_back(w_est);
            log->aux_wasserstein.push_back(aux_w);
        }
        if (progress) progress(it, gl);
    }
    if (log) log->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return model;
}

}  // namespace urbansolar
