#pragma once

#include <cstdint>
#include <string>

#include "revid/errors.hpp"

namespace revid {

// Optimization hyperparameters and the diffusion horizon. Defaults match
// the full-scale recipe; toy runs override via max_steps and smaller T.
struct TrainConfig {
    int epochs = 400;
    long max_steps = 0; // 0: the epoch budget alone decides
    double learning_rate = 2e-5;
    int batch_size = 4;
    double ema_decay = 0.9999;
    int total_steps = 1000; // diffusion horizon T
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::uint64_t seed = 0;
    long checkpoint_interval = 10000; // steps; 0 disables periodic snapshots
    double grad_clip = 0.0;           // 0 disables clipping

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
        if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
        if (!(learning_rate > 0.0))
            throw ConfigError("learning_rate must be > 0, got " + std::to_string(learning_rate));
        if (batch_size < 1)
            throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
        if (!(ema_decay > 0.0 && ema_decay < 1.0))
            throw ConfigError("ema_decay must be in (0, 1), got " + std::to_string(ema_decay));
        if (total_steps < 1)
            throw ConfigError("total_steps must be >= 1, got " + std::to_string(total_steps));
        if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_end < beta_start)
            throw ConfigError("beta range invalid: beta_start=" + std::to_string(beta_start) +
                              " beta_end=" + std::to_string(beta_end));
        if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
        if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
    }
};

} // namespace revid
