#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revid/checkpoint.hpp"
#include "revid/denoiser.hpp"
#include "revid/diffusion.hpp"
#include "revid/rng.hpp"
#include "revid/video.hpp"

namespace revid {

// Reproducibility audit for the samplers: Gaussian draw counters per
// stream, denoiser evaluation count, and the hash of each previous-frame
// input so tests can prove the recurrence wiring.
struct InferenceTrace {
    std::vector<std::uint64_t> prev_input_hashes;
    std::uint64_t init_draws = 0;
    std::uint64_t z_draws = 0;
    long denoiser_evals = 0;
};

template <typename Real>
std::uint64_t tensor_hash(const Tensor<Real>& t) {
    return fnv1a64(t.ptr(), static_cast<size_t>(t.numel()) * sizeof(Real));
}

namespace detail {

inline std::vector<int> reverse_timesteps(int total, int stride) {
    if (stride < 1) throw ConfigError("stride must be >= 1, got " + std::to_string(stride));
    std::vector<int> ts;
    for (int t = total; t >= 1; t -= stride) ts.push_back(t);
    if (ts.back() != 1) ts.push_back(1);
    return ts;
}

template <typename Real>
Tensor<Real> batched_cast(const Tensor<float>& f) {
    Tensor<Real> out({1, f.shape[0], f.shape[1], f.shape[2]});
    for (long i = 0; i < f.numel(); ++i) out[i] = static_cast<Real>(f[i]);
    return out;
}

inline void check_frame(const Tensor<float>& f, long res, const char* what) {
    if (f.rank() != 3 || f.shape[0] != 3 || f.shape[1] != res || f.shape[2] != res)
        throw ShapeError(std::string(what) + ": expected (3," + std::to_string(res) + "," +
                         std::to_string(res) + "), got " + shape_str(f));
}

// Full reverse chain for one frame. x_T is drawn from the init stream;
// every reverse step builds a fresh bundle (and thus a fresh z) and the
// network output *is* the next state. The returned frame is clamped to
// [-1,1]; internal states are not.
template <typename Real>
Tensor<float> infer_frame_impl(const Tensor<float>& low_res, const Tensor<float>& identity,
                               const Tensor<float>& previous,
                               const ConditionalDenoiser<Real>& model,
                               const NoiseSchedule& schedule, CountedNoise& init_source,
                               CountedNoise& z_source, int stride) {
    const DenoiserConfig& cfg = model.config();
    check_frame(low_res, cfg.low_res, "low_res frame");
    check_frame(identity, cfg.high_res, "identity image");
    check_frame(previous, cfg.high_res, "previous frame");
    if (schedule.total_steps != model.total_steps())
        throw ConfigError("schedule horizon " + std::to_string(schedule.total_steps) +
                          " does not match model horizon " + std::to_string(model.total_steps()));

    Tensor<Real> identity_b = batched_cast<Real>(identity);
    Tensor<Real> low_b = batched_cast<Real>(low_res);
    Tensor<Real> previous_b = batched_cast<Real>(previous);

    Tensor<Real> x = init_source.draw<Real>({1, 3, cfg.high_res, cfg.high_res});
    for (int t : reverse_timesteps(schedule.total_steps, stride)) {
        ConditioningBundle<Real> bundle =
            make_bundle<Real>(std::move(x), identity_b, low_b, previous_b, {t}, cfg, z_source);
        x = model.denoise_step(bundle);
    }

    Tensor<float> out({3, cfg.high_res, cfg.high_res});
    for (long i = 0; i < out.numel(); ++i)
        out[i] = std::clamp(static_cast<float>(x[i]), -1.0f, 1.0f);
    return out;
}

template <typename Fn>
auto with_frame_context(long frame_index, Fn&& fn) {
    const std::string ctx = "frame " + std::to_string(frame_index) + ": ";
    try {
        return fn();
    } catch (const ShapeError& e) {
        throw ShapeError(ctx + e.what());
    } catch (const IndexError& e) {
        throw IndexError(ctx + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + e.what());
    } catch (const IoError& e) {
        throw IoError(ctx + e.what());
    }
}

} // namespace detail

// Single-frame reverse diffusion. Same seed, same inputs -> identical
// output within one process.
template <typename Real>
Tensor<float> infer_frame(const Tensor<float>& low_res, const Tensor<float>& identity,
                          const Tensor<float>& previous, const ConditionalDenoiser<Real>& model,
                          const NoiseSchedule& schedule, std::uint64_t seed, int stride = 1,
                          InferenceTrace* trace = nullptr) {
    CountedNoise init_source(seed_mix({seed, stream::kSampleInit}));
    CountedNoise z_source(seed_mix({seed, stream::kSampleZ}));
    const long evals_before = model.eval_count();
    Tensor<float> out = detail::infer_frame_impl(low_res, identity, previous, model, schedule,
                                                 init_source, z_source, stride);
    if (trace) {
        trace->init_draws += init_source.draws();
        trace->z_draws += z_source.draws();
        trace->denoiser_evals += model.eval_count() - evals_before;
    }
    return out;
}

// Recurrent video enhancement: the previous high-res frame starts as the
// identity image and is replaced by each frame's output, strictly in
// order. Output frame count equals input frame count.
template <typename Real>
VideoClip infer_video(const VideoClip& v_low, const Tensor<float>& identity,
                      const ConditionalDenoiser<Real>& model, const NoiseSchedule& schedule,
                      std::uint64_t seed, int stride = 1, InferenceTrace* trace = nullptr) {
    if (v_low.frames.empty()) throw InputError("infer_video: empty input clip");
    v_low.validate();

    CountedNoise init_source(seed_mix({seed, stream::kSampleInit}));
    CountedNoise z_source(seed_mix({seed, stream::kSampleZ}));
    const long evals_before = model.eval_count();

    VideoClip out;
    out.fps = v_low.fps;
    Tensor<float> previous = identity;
    for (long n = 0; n < v_low.frame_count(); ++n) {
        if (trace) trace->prev_input_hashes.push_back(tensor_hash(previous));
        Tensor<float> frame = detail::with_frame_context(n + 1, [&] {
            return detail::infer_frame_impl(v_low.frames[static_cast<size_t>(n)], identity,
                                            previous, model, schedule, init_source, z_source,
                                            stride);
        });
        out.frames.push_back(frame);
        previous = std::move(frame);
    }
    if (trace) {
        trace->init_draws += init_source.draws();
        trace->z_draws += z_source.draws();
        trace->denoiser_evals += model.eval_count() - evals_before;
    }
    return out;
}

// Checkpoint-level conveniences; EMA weights are the default at inference.
template <typename Real>
Tensor<float> infer_frame(const Tensor<float>& low_res, const Tensor<float>& identity,
                          const Tensor<float>& previous, const Checkpoint<Real>& ck,
                          std::uint64_t seed, bool use_ema = true, int stride = 1) {
    ConditionalDenoiser<Real> model = build_denoiser(ck, use_ema);
    return infer_frame(low_res, identity, previous, model, ck.schedule(), seed, stride);
}

template <typename Real>
VideoClip infer_video(const VideoClip& v_low, const Tensor<float>& identity,
                      const Checkpoint<Real>& ck, std::uint64_t seed, bool use_ema = true,
                      int stride = 1) {
    ConditionalDenoiser<Real> model = build_denoiser(ck, use_ema);
    return infer_video(v_low, identity, model, ck.schedule(), seed, stride);
}

} // namespace revid
