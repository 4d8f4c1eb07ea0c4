#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "revid/training.hpp"

using namespace revid;
using testutil::tiny_denoiser_config;
using testutil::tiny_train_config;
using testutil::toy_clip_samples;

TEST(TrainConfig, Validation) {
    TrainConfig t = tiny_train_config();
    EXPECT_NO_THROW(t.validate());
    t.learning_rate = 0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = tiny_train_config();
    t.ema_decay = 1.0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = tiny_train_config();
    t.batch_size = 0;
    EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Trainer, FreshLossFiniteAndPositive) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    auto samples = toy_clip_samples(4, 8, 4);
    double loss = tr.train_step({samples[0], samples[1]});
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_GT(loss, 0.0);
}

// ema' - ema = (1 - d)(w - ema) for each weight.
TEST(Ema, UpdateIdentity) {
    ParamRegistry<double> reg;
    Rng rng(3);
    reg.add("a", rng.normal_tensor<double>({4, 3}));
    reg.add("b", rng.normal_tensor<double>({5}));
    EmaWeights<double> ema(reg, 0.9);
    auto before = ema.shadow();
    for (auto& [name, p] : reg.entries)
        for (long i = 0; i < p->value.numel(); ++i) p->value[i] += rng.normal();
    ema.update(reg);
    for (size_t k = 0; k < reg.entries.size(); ++k) {
        const auto& w = reg.entries[k].second->value;
        for (long i = 0; i < w.numel(); ++i) {
            double lhs = ema.shadow()[k][i] - before[k][i];
            double rhs = (1.0 - 0.9) * (w[i] - before[k][i]);
            EXPECT_NEAR(lhs, rhs, 1e-12);
        }
    }
}

// With decay 1.0 the shadow ignores every update exactly.
TEST(Ema, DecayOneFreezesShadow) {
    ParamRegistry<float> reg;
    Rng rng(4);
    reg.add("w", rng.normal_tensor<float>({7}));
    EmaWeights<float> ema(reg, 1.0);
    auto init = ema.shadow();
    for (int it = 0; it < 3; ++it) {
        for (long i = 0; i < 7; ++i) reg.entries[0].second->value[i] += 1.0f;
        ema.update(reg);
    }
    for (long i = 0; i < 7; ++i) EXPECT_EQ(ema.shadow()[0][i], init[0][i]);
}

// Timesteps drawn through the per-step stream are uniform over [1, T]:
// each decile receives 10% +- 1% over 1e5 draws.
TEST(Trainer, TimestepSamplingUniform) {
    const int T = 1000;
    const long draws = 100000;
    std::vector<long> decile_counts(10, 0);
    for (long step = 0; step < draws; ++step) {
        Rng srng(seed_mix({7ULL, stream::kTrainStep, static_cast<std::uint64_t>(step)}));
        const long t = srng.uniform_int(1, T);
        decile_counts[static_cast<size_t>((t - 1) * 10 / T)]++;
    }
    for (long c : decile_counts) {
        EXPECT_GT(c, draws / 10 - draws / 100);
        EXPECT_LT(c, draws / 10 + draws / 100);
    }
}

// z is redrawn per step: consecutive steps on the identical sample see
// different previous-frame noisings.
TEST(Trainer, PreviousFrameNoiseFreshPerStep) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    auto samples = toy_clip_samples(2, 8, 4);
    std::vector<Tensor<float>> zs;
    tr.set_bundle_hook([&](const ConditioningBundle<float>& b, const Tensor<float>&) {
        Tensor<float> z(b.previous_frame_noised.shape);
        for (long i = 0; i < z.numel(); ++i)
            z[i] = b.previous_frame_noised[i] - samples[1].previous[i];
        zs.push_back(std::move(z));
    });
    tr.train_step({samples[1]});
    tr.train_step({samples[1]});
    ASSERT_EQ(zs.size(), 2u);
    float max_diff = 0;
    for (long i = 0; i < zs[0].numel(); ++i)
        max_diff = std::max(max_diff, std::abs(zs[0][i] - zs[1][i]));
    EXPECT_GT(max_diff, 0.0f);
}

TEST(Trainer, GradientReachesExpressionEncoder) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    auto samples = toy_clip_samples(2, 8, 4);
    tr.train_step({samples[0]});
    double exp_grad_norm = 0;
    for (const auto& [name, p] : tr.model().params().entries)
        if (name.rfind("exp.", 0) == 0)
            for (long i = 0; i < p->grad.numel(); ++i)
                exp_grad_norm += static_cast<double>(p->grad[i]) * p->grad[i];
    EXPECT_GT(exp_grad_norm, 0.0);
}

TEST(Trainer, SixChannelAblationTrains) {
    DenoiserConfig d = tiny_denoiser_config();
    d.use_previous_frame = false;
    d.in_channels = 6;
    Trainer<float> tr(d, tiny_train_config());
    auto samples = toy_clip_samples(2, 8, 4);
    EXPECT_TRUE(std::isfinite(tr.train_step({samples[0], samples[1]})));
    for (const auto& [name, p] : tr.model().params().entries)
        if (name == "stem.w") EXPECT_EQ(p->value.shape[1], 6);
}

TEST(Trainer, LossTrendsDownOnToyClip) {
    DenoiserConfig d = tiny_denoiser_config();
    TrainConfig t = tiny_train_config();
    t.max_steps = 300;
    t.learning_rate = 2e-3;
    Trainer<float> tr(d, t);
    MemoryDataset data(toy_clip_samples(4, 8, 4));
    std::vector<double> losses;
    tr.train(data, [&](long, double loss) { losses.push_back(loss); });
    ASSERT_EQ(losses.size(), 300u);
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    double early = median({losses.begin(), losses.begin() + 50});
    double late = median({losses.end() - 50, losses.end()});
    EXPECT_LT(late, early);
}

// 30 + resume(30) replays the same trajectory as 60 straight.
TEST(Trainer, ResumeReproducesTrajectory) {
    DenoiserConfig d = tiny_denoiser_config();
    TrainConfig t = tiny_train_config();
    t.max_steps = 60;
    MemoryDataset data(toy_clip_samples(4, 8, 4));

    Trainer<float> full(d, t);
    std::vector<double> full_losses;
    full.train(data, [&](long, double loss) { full_losses.push_back(loss); });

    TrainConfig t_half = t;
    t_half.max_steps = 30;
    Trainer<float> half(d, t_half);
    std::vector<double> split_losses;
    half.train(data, [&](long, double loss) { split_losses.push_back(loss); });
    Checkpoint<float> ck = half.snapshot();

    Trainer<float> resumed = Trainer<float>::from_checkpoint(ck);
    EXPECT_EQ(resumed.global_step(), 30);
    // widen the budget on the resumed leg
    Checkpoint<float> ck2 = ck;
    ck2.train_config.max_steps = 60;
    Trainer<float> resumed2 = Trainer<float>::from_checkpoint(ck2);
    resumed2.train(data, [&](long, double loss) { split_losses.push_back(loss); });

    ASSERT_EQ(split_losses.size(), full_losses.size());
    for (size_t i = 0; i < full_losses.size(); ++i)
        EXPECT_NEAR(split_losses[i], full_losses[i], 1e-6) << "step " << i + 1;
}

TEST(Trainer, EmptyInputsRejected) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    EXPECT_THROW(tr.train_step({}), InputError);
    MemoryDataset empty;
    EXPECT_THROW(tr.train(empty), ConfigError);
}

TEST(Trainer, NonFiniteLossAborts) {
    Trainer<float> tr(tiny_denoiser_config(), tiny_train_config());
    auto samples = toy_clip_samples(1, 8, 4);
    tr.model().params().entries[0].second->value[0] = std::nanf("");
    try {
        tr.train_step({samples[0]});
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}
