#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "revid/errors.hpp"

namespace revid {

enum class ScheduleKind { linear };

// Precomputed beta / alpha / alpha_bar tables for a discrete diffusion
// chain. Timesteps are 1-based: beta_at(1) is the first transition.
// Tables are always double; image ops cast the scalars at the point of use.
struct NoiseSchedule {
    int total_steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    ScheduleKind kind = ScheduleKind::linear;

    std::vector<double> beta;      // beta_t
    std::vector<double> alpha;     // 1 - beta_t
    std::vector<double> alpha_bar; // prod_{s<=t} alpha_s

    void check_t(int t) const {
        if (t < 1 || t > total_steps)
            throw IndexError("timestep " + std::to_string(t) + " out of range [1, " +
                             std::to_string(total_steps) + "]");
    }

    double beta_at(int t) const { check_t(t); return beta[static_cast<size_t>(t - 1)]; }
    double alpha_at(int t) const { check_t(t); return alpha[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { check_t(t); return alpha_bar[static_cast<size_t>(t - 1)]; }

    // alpha_bar_{t-1} with the convention alpha_bar_0 = 1, so t = 1
    // training pairs degrade to (x_1, x_0).
    double alpha_bar_before(int t) const {
        check_t(t);
        return t == 1 ? 1.0 : alpha_bar[static_cast<size_t>(t - 2)];
    }
};

// Linear schedule with both endpoints included exactly.
inline NoiseSchedule build_schedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 1)
        throw ConfigError("total_steps must be >= 1, got " + std::to_string(total_steps));
    if (!(beta_start > 0.0))
        throw ConfigError("beta_start must be > 0, got " + std::to_string(beta_start));
    if (!(beta_end < 1.0))
        throw ConfigError("beta_end must be < 1, got " + std::to_string(beta_end));
    if (beta_end < beta_start)
        throw ConfigError("beta_end must be >= beta_start, got beta_start=" +
                          std::to_string(beta_start) + " beta_end=" + std::to_string(beta_end));

    NoiseSchedule s;
    s.total_steps = total_steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.kind = ScheduleKind::linear;
    s.beta.resize(static_cast<size_t>(total_steps));
    s.alpha.resize(static_cast<size_t>(total_steps));
    s.alpha_bar.resize(static_cast<size_t>(total_steps));

    double running = 1.0;
    for (int i = 0; i < total_steps; ++i) {
        double frac = total_steps == 1 ? 0.0 : static_cast<double>(i) / (total_steps - 1);
        double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<size_t>(i)] = b;
        s.alpha[static_cast<size_t>(i)] = 1.0 - b;
        running *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(i)] = running;
    }
    return s;
}

} // namespace revid
