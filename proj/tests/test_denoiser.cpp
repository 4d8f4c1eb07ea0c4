#include <gtest/gtest.h>

#include <cmath>

#include "revid/denoiser.hpp"

using namespace revid;

namespace {

DenoiserConfig toy_config() {
    DenoiserConfig c;
    c.hidden_channels = 16;
    c.channel_multipliers = {1, 2};
    c.attention_levels = {2};
    c.expression_injection_level = 2;
    c.timestep_embedding_dim = 32;
    c.high_res = 16;
    c.low_res = 8;
    c.exp_encoder_channels = 8;
    return c;
}

template <typename Real>
ConditioningBundle<Real> random_bundle(const DenoiserConfig& cfg, long n, Rng& rng,
                                       std::vector<int> ts) {
    ConditioningBundle<Real> b;
    b.noisy_frame = rng.normal_tensor<Real>({n, 3, cfg.high_res, cfg.high_res});
    b.identity_image = rng.normal_tensor<Real>({n, 3, cfg.high_res, cfg.high_res});
    b.low_res_frame = rng.normal_tensor<Real>({n, 3, cfg.low_res, cfg.low_res});
    b.previous_frame_noised = rng.normal_tensor<Real>({n, 3, cfg.high_res, cfg.high_res});
    b.timesteps = std::move(ts);
    return b;
}

} // namespace

TEST(DenoiserConfig, Validation) {
    DenoiserConfig c = toy_config();
    EXPECT_NO_THROW(c.validate());

    DenoiserConfig bad = toy_config();
    bad.in_channels = 6; // previous frame still on
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = toy_config();
    bad.use_previous_frame = false; // now 9 is wrong
    EXPECT_THROW(bad.validate(), ConfigError);
    bad.in_channels = 6;
    EXPECT_NO_THROW(bad.validate());

    bad = toy_config();
    bad.expression_injection_level = 1; // not an attention level
    EXPECT_THROW(bad.validate(), ConfigError);

    bad = toy_config();
    bad.high_res = 17; // not divisible by 2^(levels-1)
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Denoiser, OutputShapeMatchesNoisyFrame) {
    DenoiserConfig cfg = toy_config();
    ConditionalDenoiser<float> model(cfg, 10, 42);
    Rng rng(1);
    auto b = random_bundle<float>(cfg, 2, rng, {3, 7});
    Tensor<float> out = model.denoise_step(b);
    EXPECT_EQ(out.shape, b.noisy_frame.shape);
}

TEST(Denoiser, SixChannelAblationShapeContract) {
    DenoiserConfig cfg = toy_config();
    cfg.use_previous_frame = false;
    cfg.in_channels = 6;
    ConditionalDenoiser<float> model(cfg, 10, 42);
    Rng rng(2);
    auto b = random_bundle<float>(cfg, 1, rng, {5});
    Tensor<float> out = model.denoise_step(b);
    EXPECT_EQ(out.shape, b.noisy_frame.shape);
    // stem consumes 6 channels
    bool found = false;
    for (const auto& [name, p] : model.params().entries)
        if (name == "stem.w") {
            EXPECT_EQ(p->value.shape[1], 6);
            found = true;
        }
    EXPECT_TRUE(found);
}

// Downsampling chain computed from the config before building: at the
// default 192px / six-level configuration the injection grid at level 5
// is 192 / 2^4 = 12, at that level's width.
TEST(Denoiser, ExpressionEmbeddingGridAtDefaults) {
    DenoiserConfig cfg; // defaults: 192px, multipliers [1,1,2,2,4,8], level 5
    cfg.validate();
    const int expected_grid = cfg.high_res >> (cfg.expression_injection_level - 1);
    EXPECT_EQ(expected_grid, 12);

    ParamRegistry<float> reg;
    Rng rng(7);
    ExpressionEncoder<float> enc(reg, cfg, rng);
    Rng data_rng(8);
    auto x = nn::constant(data_rng.normal_tensor<float>({1, 3, 64, 64}));
    nn::NoGradGuard ng;
    auto emb = enc(x);
    EXPECT_EQ(emb->value.shape,
              (std::vector<long>{1, cfg.level_channels(5), expected_grid, expected_grid}));
}

TEST(Denoiser, EncodeExpressionDeterministic) {
    DenoiserConfig cfg = toy_config();
    ConditionalDenoiser<float> model(cfg, 10, 3);
    Rng rng(4);
    Tensor<float> frame = rng.normal_tensor<float>({1, 3, cfg.low_res, cfg.low_res});
    Tensor<float> a = model.encode_expression(frame);
    Tensor<float> b = model.encode_expression(frame);
    ASSERT_EQ(a.shape, b.shape);
    for (long i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);

    Tensor<float> wrong = rng.normal_tensor<float>({1, 3, 4, 4});
    EXPECT_THROW(model.encode_expression(wrong), ShapeError);
}

TEST(Denoiser, DeterministicEvaluation) {
    DenoiserConfig cfg = toy_config();
    ConditionalDenoiser<float> model(cfg, 10, 5);
    Rng rng(6);
    auto b = random_bundle<float>(cfg, 1, rng, {4});
    Tensor<float> o1 = model.denoise_step(b);
    Tensor<float> o2 = model.denoise_step(b);
    for (long i = 0; i < o1.numel(); ++i) EXPECT_EQ(o1[i], o2[i]);
    EXPECT_EQ(model.eval_count(), 2);
}

TEST(Denoiser, SameSeedSameWeights) {
    DenoiserConfig cfg = toy_config();
    ConditionalDenoiser<float> a(cfg, 10, 11);
    ConditionalDenoiser<float> b(cfg, 10, 11);
    ASSERT_EQ(a.params().entries.size(), b.params().entries.size());
    for (size_t i = 0; i < a.params().entries.size(); ++i) {
        const auto& [na, pa] = a.params().entries[i];
        const auto& [nb, pb] = b.params().entries[i];
        EXPECT_EQ(na, nb);
        for (long j = 0; j < pa->value.numel(); ++j) EXPECT_EQ(pa->value[j], pb->value[j]);
    }
}

TEST(Denoiser, ConditioningSensitivity) {
    DenoiserConfig cfg = toy_config();
    ConditionalDenoiser<float> model(cfg, 10, 12);
    Rng rng(13);
    auto b = random_bundle<float>(cfg, 1, rng, {2});
    Tensor<float> base = model.denoise_step(b);
    b.identity_image = rng.normal_tensor<float>({1, 3, cfg.high_res, cfg.high_res});
    Tensor<float> changed = model.denoise_step(b);
    float max_diff = 0;
    for (long i = 0; i < base.numel(); ++i)
        max_diff = std::max(max_diff, std::abs(base[i] - changed[i]));
    EXPECT_GT(max_diff, 0.0f);
}

TEST(Denoiser, ExpressionAblationRunsWithoutInjection) {
    DenoiserConfig cfg = toy_config();
    cfg.use_expression_encoder = false;
    ConditionalDenoiser<float> model(cfg, 10, 14);
    for (const auto& [name, p] : model.params().entries)
        EXPECT_EQ(name.rfind("exp.", 0), std::string::npos) << name;
    Rng rng(15);
    auto b = random_bundle<float>(cfg, 1, rng, {1});
    EXPECT_EQ(model.denoise_step(b).shape, b.noisy_frame.shape);
}

TEST(Denoiser, TimestepAndShapeErrors) {
    DenoiserConfig cfg = toy_config();
    ConditionalDenoiser<float> model(cfg, 10, 16);
    Rng rng(17);
    auto b = random_bundle<float>(cfg, 1, rng, {11});
    EXPECT_THROW(model.denoise_step(b), IndexError);
    b.timesteps = {0};
    EXPECT_THROW(model.denoise_step(b), IndexError);
    b.timesteps = {5};
    b.low_res_frame = rng.normal_tensor<float>({1, 3, 16, 16});
    EXPECT_THROW(model.denoise_step(b), ShapeError);
}

TEST(Denoiser, BundleNoisingFollowsFlag) {
    DenoiserConfig cfg = toy_config();
    Rng rng(18);
    Tensor<float> prev = rng.normal_tensor<float>({1, 3, cfg.high_res, cfg.high_res});
    CountedNoise z(99);
    auto b = make_bundle<float>(rng.normal_tensor<float>({1, 3, 16, 16}),
                                rng.normal_tensor<float>({1, 3, 16, 16}),
                                rng.normal_tensor<float>({1, 3, 8, 8}), prev, {1}, cfg, z);
    EXPECT_EQ(z.draws(), 1u);
    float diff = 0;
    for (long i = 0; i < prev.numel(); ++i)
        diff = std::max(diff, std::abs(b.previous_frame_noised[i] - prev[i]));
    EXPECT_GT(diff, 0.0f);

    cfg.noise_previous_frame = false;
    CountedNoise z2(99);
    auto b2 = make_bundle<float>(rng.normal_tensor<float>({1, 3, 16, 16}),
                                 rng.normal_tensor<float>({1, 3, 16, 16}),
                                 rng.normal_tensor<float>({1, 3, 8, 8}), prev, {1}, cfg, z2);
    EXPECT_EQ(z2.draws(), 0u);
    for (long i = 0; i < prev.numel(); ++i) EXPECT_EQ(b2.previous_frame_noised[i], prev[i]);
}

// Autodiff vs central finite differences through the whole model (UNet,
// attention with expression tokens, E_exp) at double precision.
TEST(Denoiser, GradientCheckOnMseLoss) {
    DenoiserConfig cfg;
    cfg.hidden_channels = 8;
    cfg.channel_multipliers = {1, 2};
    cfg.attention_levels = {2};
    cfg.expression_injection_level = 2;
    cfg.timestep_embedding_dim = 16;
    cfg.high_res = 8;
    cfg.low_res = 4;
    cfg.exp_encoder_channels = 4;
    ConditionalDenoiser<double> model(cfg, 10, 21);

    Rng rng(22);
    auto bundle = random_bundle<double>(cfg, 1, rng, {6});
    Tensor<double> target = rng.normal_tensor<double>({1, 3, cfg.high_res, cfg.high_res});

    auto loss_value = [&] {
        nn::NoGradGuard ng;
        return nn::mse_loss(model.forward(bundle), target)->value[0];
    };

    model.params().zero_grads();
    auto loss = nn::mse_loss(model.forward(bundle), target);
    nn::backward(loss);

    Rng pick(23);
    const double h = 1e-5;
    int checked = 0;
    while (checked < 10) {
        const auto& [name, p] =
            model.params().entries[static_cast<size_t>(pick.uniform_int(
                0, static_cast<long>(model.params().entries.size()) - 1))];
        const long i = pick.uniform_int(0, p->value.numel() - 1);
        const double saved = p->value[i];
        p->value[i] = saved + h;
        const double fp = loss_value();
        p->value[i] = saved - h;
        const double fm = loss_value();
        p->value[i] = saved;
        const double fd = (fp - fm) / (2 * h);
        const double ad = p->grad[i];
        const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
        EXPECT_LT(rel, 1e-3) << name << "[" << i << "]: fd=" << fd << " ad=" << ad;
        ++checked;
    }
}
