#pragma once

#include <cmath>
#include <vector>

#include "revid/training.hpp"

namespace testutil {

using revid::DenoiserConfig;
using revid::Tensor;
using revid::TrainConfig;
using revid::TrainingSample;

// Smallest config that still exercises attention + expression injection.
inline DenoiserConfig tiny_denoiser_config() {
    DenoiserConfig c;
    c.hidden_channels = 8;
    c.channel_multipliers = {1, 2};
    c.attention_levels = {2};
    c.expression_injection_level = 2;
    c.timestep_embedding_dim = 16;
    c.high_res = 8;
    c.low_res = 4;
    c.exp_encoder_channels = 4;
    return c;
}

inline TrainConfig tiny_train_config() {
    TrainConfig t;
    t.epochs = 1000000; // step budget decides
    t.max_steps = 10;
    t.learning_rate = 1e-3;
    t.batch_size = 2;
    t.ema_decay = 0.99;
    t.total_steps = 8;
    t.seed = 7;
    return t;
}

// Exact block-mean downsample for divisible ratios.
inline Tensor<float> block_mean(const Tensor<float>& img, long out) {
    const long H = img.shape[1];
    const long k = H / out;
    Tensor<float> low({3, out, out});
    for (long c = 0; c < 3; ++c)
        for (long y = 0; y < out; ++y)
            for (long x = 0; x < out; ++x) {
                float acc = 0;
                for (long dy = 0; dy < k; ++dy)
                    for (long dx = 0; dx < k; ++dx) acc += img.at(c, y * k + dy, x * k + dx);
                low.at(c, y, x) = acc / static_cast<float>(k * k);
            }
    return low;
}

// Deterministic smooth "clip": frame k is a phase-shifted sinusoid
// pattern, frame 0 doubling as the identity image.
inline std::vector<TrainingSample> toy_clip_samples(int n_frames, long high, long low) {
    auto frame_at = [&](int k) {
        Tensor<float> f({3, high, high});
        for (long c = 0; c < 3; ++c)
            for (long y = 0; y < high; ++y)
                for (long x = 0; x < high; ++x)
                    f.at(c, y, x) = 0.8f * std::sin(0.9f * static_cast<float>(x) +
                                                    0.4f * static_cast<float>(k) +
                                                    static_cast<float>(c)) *
                                    std::cos(0.7f * static_cast<float>(y));
        return f;
    };
    Tensor<float> identity = frame_at(0);
    std::vector<TrainingSample> out;
    for (int k = 0; k < n_frames; ++k) {
        TrainingSample s;
        s.target = frame_at(k);
        s.identity = identity;
        s.previous = k == 0 ? identity : frame_at(k - 1);
        s.low_res = block_mean(s.target, low);
        s.subject_id = "s0";
        s.expression_label = "happiness";
        s.frame_index = k + 1;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace testutil
