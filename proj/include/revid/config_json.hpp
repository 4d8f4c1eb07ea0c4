#pragma once

#include <json.hpp>

#include "revid/denoiser.hpp"
#include "revid/training_config.hpp"

namespace revid {

inline void to_json(nlohmann::json& j, const DenoiserConfig& c) {
    j = nlohmann::json{{"in_channels", c.in_channels},
                       {"out_channels", c.out_channels},
                       {"hidden_channels", c.hidden_channels},
                       {"channel_multipliers", c.channel_multipliers},
                       {"res_blocks_per_level", c.res_blocks_per_level},
                       {"attention_levels", c.attention_levels},
                       {"expression_injection_level", c.expression_injection_level},
                       {"timestep_embedding_dim", c.timestep_embedding_dim},
                       {"use_expression_encoder", c.use_expression_encoder},
                       {"use_previous_frame", c.use_previous_frame},
                       {"noise_previous_frame", c.noise_previous_frame},
                       {"prev_noise_scale", c.prev_noise_scale},
                       {"high_res", c.high_res},
                       {"low_res", c.low_res},
                       {"exp_encoder_channels", c.exp_encoder_channels},
                       {"norm_groups", c.norm_groups}};
}

inline void from_json(const nlohmann::json& j, DenoiserConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("out_channels").get_to(c.out_channels);
    j.at("hidden_channels").get_to(c.hidden_channels);
    j.at("channel_multipliers").get_to(c.channel_multipliers);
    j.at("res_blocks_per_level").get_to(c.res_blocks_per_level);
    j.at("attention_levels").get_to(c.attention_levels);
    j.at("expression_injection_level").get_to(c.expression_injection_level);
    j.at("timestep_embedding_dim").get_to(c.timestep_embedding_dim);
    j.at("use_expression_encoder").get_to(c.use_expression_encoder);
    j.at("use_previous_frame").get_to(c.use_previous_frame);
    j.at("noise_previous_frame").get_to(c.noise_previous_frame);
    j.at("prev_noise_scale").get_to(c.prev_noise_scale);
    j.at("high_res").get_to(c.high_res);
    j.at("low_res").get_to(c.low_res);
    j.at("exp_encoder_channels").get_to(c.exp_encoder_channels);
    j.at("norm_groups").get_to(c.norm_groups);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"max_steps", c.max_steps},
                       {"learning_rate", c.learning_rate},
                       {"batch_size", c.batch_size},
                       {"ema_decay", c.ema_decay},
                       {"total_steps", c.total_steps},
                       {"beta_start", c.beta_start},
                       {"beta_end", c.beta_end},
                       {"seed", c.seed},
                       {"checkpoint_interval", c.checkpoint_interval},
                       {"grad_clip", c.grad_clip}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("max_steps").get_to(c.max_steps);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("batch_size").get_to(c.batch_size);
    j.at("ema_decay").get_to(c.ema_decay);
    j.at("total_steps").get_to(c.total_steps);
    j.at("beta_start").get_to(c.beta_start);
    j.at("beta_end").get_to(c.beta_end);
    j.at("seed").get_to(c.seed);
    j.at("checkpoint_interval").get_to(c.checkpoint_interval);
    j.at("grad_clip").get_to(c.grad_clip);
}

} // namespace revid
