#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "urbansolar/editgan.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/fidelity.hpp"
#include "urbansolar/rng.hpp"

using namespace urbansolar;
using urbansolar::testing::toy_mask;

namespace {

VaeModel vae() {
    VaeConfig cfg;
    cfg.seed = 5;
    return VaeModel(VaeArch{}, cfg);
}

IdganModel gan(std::uint64_t seed = 1) {
    IdganConfig cfg;
    cfg.seed = seed;
    return IdganModel(GanArch{}, cfg);
}

std::vector<CubeMask> corpus(int n) {
    std::vector<CubeMask> out;
    for (int i = 0; i < n; ++i) out.push_back(toy_mask(48 + 4 * i, 8 + 5 * i, 60 + 3 * i, 16 + 2 * i));
    return out;
}

const std::vector<float> kNoise{0.1f, -0.4f, 0.7f, 0.0f};

}  // namespace

TEST(IdganGenerator, TakesThirtySixInputsAndStaysInPaletteRange) {
    auto g = gan();
    std::vector<float> code(32, 0.5f);
    const auto img = g.generate_image(code, kNoise);
    ASSERT_EQ(img.size(), 128u * 128u);
    for (float v : img) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 255.0f);
    }
    const auto gray = g.generate_gray(100.0 * torch::randn({3, 32}), 100.0 * torch::randn({3, 4}));
    EXPECT_GE(gray.min().item<float>(), 0.0f);
    EXPECT_LE(gray.max().item<float>(), 255.0f);
}

TEST(IdganGenerator, DeterministicForSameInputs) {
    auto g = gan();
    std::vector<float> code(32);
    for (int i = 0; i < 32; ++i) code[i] = 0.1f * static_cast<float>(i - 16);
    EXPECT_EQ(g.generate_image(code, kNoise), g.generate_image(code, kNoise));
    auto again = gan();
    EXPECT_EQ(again.generate_image(code, kNoise), g.generate_image(code, kNoise));
}

TEST(IdganGenerator, WrongDimensionsAreShapeErrors) {
    auto g = gan();
    EXPECT_THROW(g.generate_image(std::vector<float>(31), kNoise), ShapeError);
    EXPECT_THROW(g.generate_image(std::vector<float>(32), std::vector<float>(5)), ShapeError);
    EXPECT_THROW(g.generate_gray(torch::zeros({2, 32}), torch::zeros({3, 4})), ShapeError);
    std::vector<float> bad(32, 0.0f);
    bad[3] = NAN;
    EXPECT_THROW(g.generate_image(bad, kNoise), InputError);
}

TEST(StraightThrough, ForwardMatchesPaletteQuantization) {
    torch::manual_seed(3);
    auto gray = torch::rand({1, 1, 128, 128}) * 300.0 - 20.0;
    gray[0][0][0][0] = 42.5f;   // exact midpoint ground/opaque
    gray[0][0][0][1] = 212.5f;  // exact midpoint glazing/sky
    const auto onehot = straight_through_onehot(gray);
    const auto expected = quantize(std::span<const float>(gray.contiguous().data_ptr<float>(), 128 * 128));
    EXPECT_EQ(argmax_mask(onehot[0]), expected);
    EXPECT_LT((onehot.sum(1) - 1.0).abs().max().item<double>(), 1e-6);
}

TEST(StraightThrough, PassesGradientToGrayLevels) {
    auto gray = torch::full({1, 1, 4, 4}, 100.0, torch::requires_grad());
    const auto onehot = straight_through_onehot(gray);
    onehot.select(1, 3).sum().backward();  // glazing channel pulls toward 170
    EXPECT_GT(gray.grad().min().item<double>(), 0.0);
}

TEST(Distillation, MatchedCodeWithUnitVarianceGivesDensityConstant) {
    const auto code = torch::randn({3, 32}, torch::kFloat64);
    const auto ll = gaussian_log_likelihood(code, code, torch::zeros({3, 32}, torch::kFloat64));
    const double expected = -0.5 * 32.0 * std::log(2.0 * M_PI);
    for (int b = 0; b < 3; ++b) EXPECT_NEAR(ll[b].item<double>(), expected, 1e-12);
}

TEST(Distillation, DistantCodeScoresStrictlyLower) {
    const auto mean = torch::zeros({1, 32}, torch::kFloat64);
    const auto lv = torch::full({1, 32}, -1.0, torch::kFloat64);
    const auto near = gaussian_log_likelihood(mean, mean, lv).item<double>();
    const auto far = gaussian_log_likelihood(mean + 2.0, mean, lv).item<double>();
    EXPECT_LT(far, near);
}

TEST(Distillation, RegulariserMatchesManualEncoding) {
    auto model = vae();
    FrozenEncoder enc(model);
    auto g = gan();
    const auto codes = torch::randn({2, 32});
    const auto fake = g.generator()->forward(torch::cat({codes, torch::zeros({2, 4})}, 1));
    const auto reg = distillation_regularizer(fake, codes, enc).item<double>();
    const auto gray = to_gray(fake).detach().contiguous();
    std::vector<CubeMask> masks;
    for (int b = 0; b < 2; ++b) {
        masks.push_back(quantize(std::span<const float>(gray[b].contiguous().data_ptr<float>(), 128 * 128)));
    }
    auto [m, l] = model.encode_tensor(onehot_batch(masks));
    EXPECT_NEAR(reg, gaussian_log_likelihood(codes, m, l).mean().item<double>(), 1e-3 * std::abs(reg));
}

TEST(Distillation, UnfrozenEncoderIsAUsageError) {
    auto model = vae();
    FrozenEncoder enc(model);
    EXPECT_NO_THROW(enc.check());
    model.net()->parameters()[0].requires_grad_(true);
    EXPECT_THROW(enc.check(), UsageError);
    EXPECT_THROW(distillation_regularizer(torch::zeros({1, 1, 128, 128}), torch::zeros({1, 32}), enc), UsageError);
}

TEST(Adversarial, ZeroWeightLeavesPlainAdversarialLoss) {
    const auto real = torch::tensor({1.5, -0.2});
    const auto fake = torch::tensor({0.3, -2.0});
    const auto reg = torch::tensor(-123.0);
    const auto t = adversarial_losses(real, fake, fake, reg, 0.0);
    const double plain = 0.5 * (std::log1p(std::exp(-0.3)) + std::log1p(std::exp(2.0)));
    EXPECT_NEAR(t.generator.item<double>(), plain, 1e-6);
    const auto w = adversarial_losses(real, fake, fake, reg, 0.01);
    EXPECT_NEAR(w.generator.item<double>(), plain + 1.23, 1e-5);
    const double disc = 0.5 * (std::log1p(std::exp(-1.5)) + std::log1p(std::exp(0.2))) +
                        0.5 * (std::log1p(std::exp(0.3)) + std::log1p(std::exp(-2.0)));
    EXPECT_NEAR(t.discriminator.item<double>(), disc, 1e-6);
}

TEST(IdganTraining, ZeroBudgetAndSeedReproducibility) {
    auto model = vae();
    FrozenEncoder enc(model);
    IdganConfig cfg;
    cfg.seed = 4;
    const auto masks = corpus(4);
    EXPECT_EQ(train_idgan(masks, enc, GanArch{}, cfg).fingerprint(), gan(4).fingerprint());
    cfg.iterations = 2;
    cfg.batch = 3;
    IdganLog log;
    const auto a = train_idgan(masks, enc, GanArch{}, cfg, &log);
    const auto b = train_idgan(masks, enc, GanArch{}, cfg);
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    EXPECT_NE(a.fingerprint(), gan(4).fingerprint());
    EXPECT_EQ(a.encoder_fingerprint, model.fingerprint());
    ASSERT_EQ(log.regularizer.size(), 2u);
    EXPECT_TRUE(std::isfinite(log.regularizer[0]));
}

TEST(IdganCheckpoint, RoundTrip) {
    auto g = gan(7);
    g.encoder_fingerprint = "abc";
    const auto dir = urbansolar::testing::temp_dir("idgan_ck");
    g.save(dir / "g.ck");
    auto back = IdganModel::load(dir / "g.ck");
    EXPECT_EQ(back.fingerprint(), g.fingerprint());
    EXPECT_EQ(back.encoder_fingerprint, "abc");
    const std::vector<float> code(32, 0.3f);
    EXPECT_EQ(back.generate_image(code, kNoise), g.generate_image(code, kNoise));
    EXPECT_THROW(VaeModel::load(dir / "g.ck"), CorruptionError);
}

TEST(Traversal, IdentityValueReproducesBaseline) {
    auto model = vae();
    auto g = gan();
    const auto mask = toy_mask(60, 10, 80, 25);
    const auto code = model.encode(mask).mean;
    for (int dim : {0, 13, 31}) {
        const std::vector<float> values{code[dim]};
        const auto edits = traverse(model, g, mask, dim, values, kNoise);
        ASSERT_EQ(edits.size(), 1u);
        EXPECT_EQ(pixel_accuracy(edits[0], regenerate(model, g, mask, kNoise)), 1.0);
    }
}

TEST(Traversal, DefaultSweepHasTwentyStepsOverThreeSigma) {
    const auto v = default_sweep();
    ASSERT_EQ(v.size(), 20u);
    EXPECT_FLOAT_EQ(v.front(), -3.0f);
    EXPECT_FLOAT_EQ(v.back(), 3.0f);
    auto model = vae();
    auto g = gan();
    EXPECT_EQ(traverse(model, g, toy_mask(60, 10, 80, 25), 4, v, kNoise).size(), 20u);
    EXPECT_THROW(traverse(model, g, toy_mask(60, 10, 80, 25), 32, v, kNoise), InputError);
    EXPECT_THROW(traverse(model, g, toy_mask(60, 10, 80, 25), -1, v, kNoise), InputError);
}

TEST(WwrDimensionSearch, FindsConstructedShift) {
    std::vector<WwrTriplet> triplets(12);
    Rng rng(3);
    for (auto& t : triplets) {
        for (int d = 0; d < 32; ++d) {
            t.zero[d] = static_cast<float>(rng.normal());
            t.low[d] = t.zero[d] + 0.1f * static_cast<float>(rng.normal());
            t.high[d] = t.zero[d] + 0.1f * static_cast<float>(rng.normal());
        }
        t.high[7] = t.zero[7] + 2.0f;
        t.low[7] = t.zero[7] + 1.0f;
    }
    const auto found = find_wwr_dimension(triplets);
    EXPECT_EQ(found.dim, 7);
    EXPECT_EQ(found.sign, 1);
    EXPECT_NEAR(found.shift[7], 2.0, 1e-6);
    EXPECT_GT(found.margin, 1.0);
    EXPECT_FALSE(found.low_confidence);
    for (auto& t : triplets) t.high[7] = t.zero[7] - 2.0f;
    EXPECT_EQ(find_wwr_dimension(triplets).sign, -1);
}

TEST(WwrDimensionSearch, IdenticalCodesTieToLowestIndexWithFlag) {
    std::vector<WwrTriplet> triplets(10);
    const auto found = find_wwr_dimension(triplets);
    EXPECT_EQ(found.dim, 0);
    EXPECT_TRUE(found.low_confidence);
}

TEST(WwrDimensionSearch, TooFewTripletsIsInsufficientData) {
    std::vector<WwrTriplet> triplets(9);
    EXPECT_THROW(find_wwr_dimension(triplets), InsufficientDataError);
}
