#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "revid/nn_ops.hpp"
#include "revid/rng.hpp"

namespace revid {

using nn::Var;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Network shape and the ablation switches. Levels are 1-based; level L runs
// at resolution high_res / 2^(L-1) with hidden_channels * multiplier[L-1]
// feature channels.
struct DenoiserConfig {
    int in_channels = 9;
    int out_channels = 3;
    int hidden_channels = 128;
    std::vector<int> channel_multipliers = {1, 1, 2, 2, 4, 8};
    int res_blocks_per_level = 1;
    std::vector<int> attention_levels = {5};
    int expression_injection_level = 5;
    int timestep_embedding_dim = 512;
    bool use_expression_encoder = true;
    bool use_previous_frame = true;
    bool noise_previous_frame = true;
    double prev_noise_scale = 1.0;
    int high_res = 192;
    int low_res = 64;
    int exp_encoder_channels = 64;
    int norm_groups = 8;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int expected_in_channels() const { return use_previous_frame ? 9 : 6; }
    int level_channels(int level) const {
        return hidden_channels * channel_multipliers[static_cast<size_t>(level - 1)];
    }
    int level_resolution(int level) const { return high_res >> (level - 1); }
    bool has_attention(int level) const {
        return std::find(attention_levels.begin(), attention_levels.end(), level) !=
               attention_levels.end();
    }

    void validate() const {
        if (hidden_channels <= 0 || hidden_channels % 2 != 0)
            throw ConfigError("hidden_channels must be positive and even, got " +
                              std::to_string(hidden_channels));
        if (channel_multipliers.empty())
            throw ConfigError("channel_multipliers must be non-empty");
        for (int m : channel_multipliers)
            if (m <= 0) throw ConfigError("channel_multipliers entries must be positive");
        if (in_channels != expected_in_channels())
            throw ConfigError("in_channels must be " + std::to_string(expected_in_channels()) +
                              " when use_previous_frame=" +
                              (use_previous_frame ? std::string("on") : std::string("off")) +
                              ", got " + std::to_string(in_channels));
        if (res_blocks_per_level < 1)
            throw ConfigError("res_blocks_per_level must be >= 1");
        if (timestep_embedding_dim <= 0)
            throw ConfigError("timestep_embedding_dim must be positive");
        for (int a : attention_levels)
            if (a < 1 || a > levels())
                throw ConfigError("attention_levels entry " + std::to_string(a) +
                                  " outside [1, " + std::to_string(levels()) + "]");
        if (use_expression_encoder && !has_attention(expression_injection_level))
            throw ConfigError("expression_injection_level " +
                              std::to_string(expression_injection_level) +
                              " must be one of attention_levels");
        const int div = 1 << (levels() - 1);
        if (high_res <= 0 || high_res % div != 0)
            throw ConfigError("high_res must be divisible by 2^(levels-1)=" +
                              std::to_string(div) + ", got " + std::to_string(high_res));
        if (low_res <= 0) throw ConfigError("low_res must be positive");
        for (int l = 1; l <= levels(); ++l)
            if (level_channels(l) % norm_groups != 0)
                throw ConfigError("norm_groups " + std::to_string(norm_groups) +
                                  " must divide channels at level " + std::to_string(l) +
                                  " (" + std::to_string(level_channels(l)) + ")");
        if (exp_encoder_channels <= 0)
            throw ConfigError("exp_encoder_channels must be positive");
        if (prev_noise_scale < 0.0)
            throw ConfigError("prev_noise_scale must be >= 0");
    }
};

// Per-frame guidance set fed to one denoiser evaluation. Batched along the
// leading dimension; timesteps are per sample and 1-based.
template <typename Real>
struct ConditioningBundle {
    Tensor<Real> noisy_frame;           // (N,3,H,W)
    Tensor<Real> identity_image;        // (N,3,H,W)
    Tensor<Real> low_res_frame;         // (N,3,l,l)
    Tensor<Real> previous_frame_noised; // (N,3,H,W); verbatim when noising is off
    std::vector<int> timesteps;
};

// Applies the z-noising of the previous frame (or passes it through when
// the ablation flag disables it). The z draw comes from the counted source
// so reproducibility audits can see it.
template <typename Real>
ConditioningBundle<Real> make_bundle(Tensor<Real> noisy, Tensor<Real> identity,
                                     Tensor<Real> low_res, const Tensor<Real>& previous,
                                     std::vector<int> timesteps, const DenoiserConfig& cfg,
                                     CountedNoise& z_source) {
    ConditioningBundle<Real> b;
    b.noisy_frame = std::move(noisy);
    b.identity_image = std::move(identity);
    b.low_res_frame = std::move(low_res);
    if (cfg.noise_previous_frame) {
        Tensor<Real> z = z_source.draw<Real>(previous.shape);
        b.previous_frame_noised = Tensor<Real>(previous.shape);
        const Real s = static_cast<Real>(cfg.prev_noise_scale);
        for (long i = 0; i < previous.numel(); ++i)
            b.previous_frame_noised[i] = previous[i] + s * z[i];
    } else {
        b.previous_frame_noised = previous;
    }
    b.timesteps = std::move(timesteps);
    return b;
}

// ---------------------------------------------------------------------------
// parameters and layers
// ---------------------------------------------------------------------------

template <typename Real>
struct ParamRegistry {
    std::vector<std::pair<std::string, Var<Real>>> entries;

    Var<Real> add(std::string name, Tensor<Real> init) {
        auto p = nn::make_param(std::move(init));
        entries.emplace_back(std::move(name), p);
        return p;
    }
    void zero_grads() {
        for (auto& [name, p] : entries) p->zero_grad();
    }
    long total_size() const {
        long n = 0;
        for (const auto& [name, p] : entries) n += p->value.numel();
        return n;
    }
};

namespace detail {

template <typename Real>
Tensor<Real> he_normal(Rng& rng, std::vector<long> shape, long fan_in) {
    Tensor<Real> t = rng.normal_tensor<Real>(std::move(shape));
    const Real s = static_cast<Real>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (long i = 0; i < t.numel(); ++i) t[i] *= s;
    return t;
}

} // namespace detail

template <typename Real>
struct Conv2dLayer {
    Var<Real> w, b;
    long stride = 1, pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(ParamRegistry<Real>& reg, const std::string& name, long cin, long cout, long k,
                long stride_, long pad_, Rng& rng, bool zero_init = false,
                double init_scale = 1.0)
        : stride(stride_), pad(pad_) {
        Tensor<Real> wt = zero_init ? Tensor<Real>({cout, cin, k, k})
                                    : detail::he_normal<Real>(rng, {cout, cin, k, k}, cin * k * k);
        if (!zero_init && init_scale != 1.0)
            for (long i = 0; i < wt.numel(); ++i) wt[i] *= static_cast<Real>(init_scale);
        w = reg.add(name + ".w", std::move(wt));
        b = reg.add(name + ".b", Tensor<Real>({cout}));
    }
    Var<Real> operator()(const Var<Real>& x) const { return nn::conv2d(x, w, b, stride, pad); }
};

template <typename Real>
struct LinearLayer {
    Var<Real> w, b;

    LinearLayer() = default;
    LinearLayer(ParamRegistry<Real>& reg, const std::string& name, long in, long out, Rng& rng,
                bool zero_init = false) {
        Tensor<Real> wt =
            zero_init ? Tensor<Real>({out, in}) : detail::he_normal<Real>(rng, {out, in}, in);
        w = reg.add(name + ".w", std::move(wt));
        b = reg.add(name + ".b", Tensor<Real>({out}));
    }
    Var<Real> operator()(const Var<Real>& x) const { return nn::linear(x, w, b); }
};

template <typename Real>
struct GroupNormLayer {
    Var<Real> gamma, beta;
    long groups = 8;

    GroupNormLayer() = default;
    GroupNormLayer(ParamRegistry<Real>& reg, const std::string& name, long channels, long groups_)
        : groups(groups_) {
        Tensor<Real> g({channels});
        g.fill(Real(1));
        gamma = reg.add(name + ".gamma", std::move(g));
        beta = reg.add(name + ".beta", Tensor<Real>({channels}));
    }
    Var<Real> operator()(const Var<Real>& x) const { return nn::group_norm(x, gamma, beta, groups); }
};

// GN -> SiLU -> conv -> (+ timestep bias) -> GN -> SiLU -> conv, with a 1x1
// skip when the channel count changes. Second conv is zero-initialized.
template <typename Real>
struct ResBlock {
    GroupNormLayer<Real> gn1, gn2;
    Conv2dLayer<Real> conv1, conv2;
    LinearLayer<Real> temb_proj;
    std::optional<Conv2dLayer<Real>> skip;

    ResBlock() = default;
    ResBlock(ParamRegistry<Real>& reg, const std::string& name, long cin, long cout, long temb_dim,
             long groups, Rng& rng) {
        gn1 = GroupNormLayer<Real>(reg, name + ".gn1", cin, groups);
        conv1 = Conv2dLayer<Real>(reg, name + ".conv1", cin, cout, 3, 1, 1, rng);
        temb_proj = LinearLayer<Real>(reg, name + ".temb", temb_dim, cout, rng);
        gn2 = GroupNormLayer<Real>(reg, name + ".gn2", cout, groups);
        conv2 = Conv2dLayer<Real>(reg, name + ".conv2", cout, cout, 3, 1, 1, rng, true);
        if (cin != cout) skip = Conv2dLayer<Real>(reg, name + ".skip", cin, cout, 1, 1, 0, rng);
    }

    Var<Real> operator()(const Var<Real>& x, const Var<Real>& temb) const {
        auto h = conv1(nn::silu(gn1(x)));
        h = nn::add_channel_bias(h, temb_proj(nn::silu(temb)));
        h = conv2(nn::silu(gn2(h)));
        return nn::add(h, skip ? (*skip)(x) : x);
    }
};

// Single-head self-attention over spatial tokens. When expression tokens
// are supplied they are stacked with the image tokens so both attend to
// each other; only the image positions feed the output projection.
template <typename Real>
struct AttentionBlock {
    GroupNormLayer<Real> gn;
    LinearLayer<Real> q, k, v, proj;
    long channels = 0;

    AttentionBlock() = default;
    AttentionBlock(ParamRegistry<Real>& reg, const std::string& name, long channels_, long groups,
                   Rng& rng)
        : channels(channels_) {
        gn = GroupNormLayer<Real>(reg, name + ".gn", channels_, groups);
        q = LinearLayer<Real>(reg, name + ".q", channels_, channels_, rng);
        k = LinearLayer<Real>(reg, name + ".k", channels_, channels_, rng);
        v = LinearLayer<Real>(reg, name + ".v", channels_, channels_, rng);
        // small random rather than zero: expression tokens have no residual
        // bypass, so a zero projection would cut their gradients entirely
        proj = LinearLayer<Real>(reg, name + ".proj", channels_, channels_, rng, false);
        for (long i = 0; i < proj.w->value.numel(); ++i)
            proj.w->value[i] *= static_cast<Real>(1e-2);
    }

    Var<Real> operator()(const Var<Real>& x, const std::optional<Var<Real>>& exp_tokens) const {
        const long H = x->value.shape[2], W = x->value.shape[3];
        const long hw = H * W;
        auto img = nn::nchw_to_tokens(gn(x));
        auto all = exp_tokens ? nn::concat_tokens(img, *exp_tokens) : img;
        auto att = nn::softmax_lastdim(
            nn::scale(nn::bmm_nt(q(all), k(all)),
                      static_cast<Real>(1.0 / std::sqrt(static_cast<double>(channels)))));
        auto o = nn::bmm(att, v(all));
        if (exp_tokens) o = nn::slice_tokens(o, 0, hw);
        return nn::add(nn::tokens_to_nchw(proj(o), H, W), x);
    }
};

// ---------------------------------------------------------------------------
// expression encoder
// ---------------------------------------------------------------------------

// Strided conv stack from the low-res expression frame down to the UNet
// grid at the injection level, then a 1x1 lift to that level's width and
// an exact-grid average pool for non power-of-two targets.
template <typename Real>
struct ExpressionEncoder {
    Conv2dLayer<Real> stem;
    std::vector<Conv2dLayer<Real>> downs;
    Conv2dLayer<Real> to_width;
    long grid = 0;

    ExpressionEncoder() = default;
    ExpressionEncoder(ParamRegistry<Real>& reg, const DenoiserConfig& cfg, Rng& rng) {
        const long width = cfg.level_channels(cfg.expression_injection_level);
        grid = cfg.level_resolution(cfg.expression_injection_level);
        long c = cfg.exp_encoder_channels;
        stem = Conv2dLayer<Real>(reg, "exp.stem", 3, c, 3, 1, 1, rng);
        long cur = cfg.low_res;
        int idx = 0;
        while (cur / 2 >= grid && cur % 2 == 0 && idx < 6) {
            const long cnext = std::min<long>(2 * c, width);
            downs.push_back(Conv2dLayer<Real>(reg, "exp.down" + std::to_string(idx), c, cnext, 3,
                                              2, 1, rng));
            c = cnext;
            cur /= 2;
            ++idx;
        }
        to_width = Conv2dLayer<Real>(reg, "exp.to_width", c, width, 1, 1, 0, rng);
    }

    // (N,3,l,l) -> (N, width, grid, grid)
    Var<Real> operator()(const Var<Real>& x) const {
        auto h = nn::silu(stem(x));
        for (const auto& d : downs) h = nn::silu(d(h));
        h = to_width(h);
        if (h->value.shape[2] != grid || h->value.shape[3] != grid)
            h = nn::adaptive_avg_pool2d(h, grid, grid);
        return h;
    }
};

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> sinusoidal_embedding(const std::vector<int>& timesteps, long dim) {
    const long n = static_cast<long>(timesteps.size());
    const long half = dim / 2;
    Tensor<Real> out({n, dim});
    for (long i = 0; i < n; ++i) {
        const double t = static_cast<double>(timesteps[static_cast<size_t>(i)]);
        for (long j = 0; j < half; ++j) {
            const double freq =
                std::exp(-std::log(10000.0) * static_cast<double>(j) /
                         static_cast<double>(std::max<long>(half - 1, 1)));
            out[i * dim + j] = static_cast<Real>(std::sin(t * freq));
            out[i * dim + half + j] = static_cast<Real>(std::cos(t * freq));
        }
    }
    return out;
}

template <typename Real>
struct DenoisingUNet {
    struct EncLevel {
        std::vector<ResBlock<Real>> blocks;
        std::optional<AttentionBlock<Real>> attn;
        std::optional<Conv2dLayer<Real>> down;
    };
    struct DecLevel {
        std::vector<ResBlock<Real>> blocks;
        std::optional<AttentionBlock<Real>> attn;
        std::optional<Conv2dLayer<Real>> up;
    };

    DenoiserConfig cfg;
    LinearLayer<Real> temb_fc1, temb_fc2;
    Conv2dLayer<Real> stem;
    std::vector<EncLevel> enc;
    ResBlock<Real> mid;
    std::vector<DecLevel> dec;
    GroupNormLayer<Real> out_gn;
    Conv2dLayer<Real> out_conv;

    DenoisingUNet() = default;
    DenoisingUNet(ParamRegistry<Real>& reg, const DenoiserConfig& cfg_, Rng& rng) : cfg(cfg_) {
        const long L = cfg.levels();
        const long temb_dim = cfg.timestep_embedding_dim;
        temb_fc1 = LinearLayer<Real>(reg, "temb.fc1", cfg.hidden_channels, temb_dim, rng);
        temb_fc2 = LinearLayer<Real>(reg, "temb.fc2", temb_dim, temb_dim, rng);
        stem = Conv2dLayer<Real>(reg, "stem", cfg.in_channels, cfg.level_channels(1), 3, 1, 1, rng);

        long ch = cfg.level_channels(1);
        enc.resize(static_cast<size_t>(L));
        for (long i = 0; i < L; ++i) {
            const long cout = cfg.level_channels(static_cast<int>(i) + 1);
            auto& lvl = enc[static_cast<size_t>(i)];
            for (int r = 0; r < cfg.res_blocks_per_level; ++r) {
                const long cin = r == 0 ? ch : cout;
                lvl.blocks.emplace_back(reg, "enc" + std::to_string(i) + ".res" + std::to_string(r),
                                        cin, cout, temb_dim, cfg.norm_groups, rng);
            }
            ch = cout;
            if (cfg.has_attention(static_cast<int>(i) + 1))
                lvl.attn = AttentionBlock<Real>(reg, "enc" + std::to_string(i) + ".attn", ch,
                                                cfg.norm_groups, rng);
            if (i + 1 < L)
                lvl.down = Conv2dLayer<Real>(reg, "enc" + std::to_string(i) + ".down", ch, ch, 3,
                                             2, 1, rng);
        }

        mid = ResBlock<Real>(reg, "mid.res", ch, ch, temb_dim, cfg.norm_groups, rng);

        dec.resize(static_cast<size_t>(L));
        for (long i = L - 1; i >= 0; --i) {
            const long cout = cfg.level_channels(static_cast<int>(i) + 1);
            auto& lvl = dec[static_cast<size_t>(i)];
            for (int r = 0; r < cfg.res_blocks_per_level; ++r) {
                const long cin = r == 0 ? ch + cout : cout; // concat with the level skip
                lvl.blocks.emplace_back(reg, "dec" + std::to_string(i) + ".res" + std::to_string(r),
                                        cin, cout, temb_dim, cfg.norm_groups, rng);
            }
            ch = cout;
            if (cfg.has_attention(static_cast<int>(i) + 1))
                lvl.attn = AttentionBlock<Real>(reg, "dec" + std::to_string(i) + ".attn", ch,
                                                cfg.norm_groups, rng);
            if (i > 0)
                lvl.up = Conv2dLayer<Real>(reg, "dec" + std::to_string(i) + ".up", ch, ch, 3, 1, 1,
                                           rng);
        }

        // Small but nonzero init: a fresh network starts near zero output
        // yet still responds to every conditioning input.
        out_gn = GroupNormLayer<Real>(reg, "out.gn", ch, cfg.norm_groups);
        out_conv =
            Conv2dLayer<Real>(reg, "out.conv", ch, cfg.out_channels, 3, 1, 1, rng, false, 1e-2);
    }

    Var<Real> operator()(const Var<Real>& x, const std::vector<int>& timesteps,
                         const std::optional<Var<Real>>& exp_feat) const {
        const long L = cfg.levels();
        std::optional<Var<Real>> exp_tokens;
        if (exp_feat) exp_tokens = nn::nchw_to_tokens(*exp_feat);

        auto temb0 = nn::constant(sinusoidal_embedding<Real>(timesteps, cfg.hidden_channels));
        auto temb = temb_fc2(nn::silu(temb_fc1(temb0)));

        auto h = stem(x);
        std::vector<Var<Real>> skips;
        skips.reserve(static_cast<size_t>(L));
        for (long i = 0; i < L; ++i) {
            const auto& lvl = enc[static_cast<size_t>(i)];
            for (const auto& blk : lvl.blocks) h = blk(h, temb);
            if (lvl.attn) {
                const bool inject = static_cast<int>(i) + 1 == cfg.expression_injection_level;
                h = (*lvl.attn)(h, inject ? exp_tokens : std::nullopt);
            }
            skips.push_back(h);
            if (lvl.down) h = (*lvl.down)(h);
        }

        h = mid(h, temb);

        for (long i = L - 1; i >= 0; --i) {
            const auto& lvl = dec[static_cast<size_t>(i)];
            h = nn::concat_channels(h, skips[static_cast<size_t>(i)]);
            for (const auto& blk : lvl.blocks) h = blk(h, temb);
            if (lvl.attn) {
                const bool inject = static_cast<int>(i) + 1 == cfg.expression_injection_level;
                h = (*lvl.attn)(h, inject ? exp_tokens : std::nullopt);
            }
            if (lvl.up) h = (*lvl.up)(nn::upsample_nearest2(h));
        }

        return out_conv(nn::silu(out_gn(h)));
    }
};

// ---------------------------------------------------------------------------
// conditional denoiser (UNet + expression encoder)
// ---------------------------------------------------------------------------

template <typename Real>
class ConditionalDenoiser {
  public:
    ConditionalDenoiser(DenoiserConfig cfg, int total_steps, std::uint64_t init_seed)
        : cfg_(std::move(cfg)), total_steps_(total_steps) {
        cfg_.validate();
        if (total_steps_ < 1)
            throw ConfigError("total_steps must be >= 1, got " + std::to_string(total_steps_));
        Rng rng(seed_mix({init_seed, stream::kInit}));
        unet_ = DenoisingUNet<Real>(params_, cfg_, rng);
        if (cfg_.use_expression_encoder)
            e_exp_.emplace(params_, cfg_, rng);
    }

    ConditionalDenoiser(const ConditionalDenoiser&) = delete;
    ConditionalDenoiser& operator=(const ConditionalDenoiser&) = delete;
    ConditionalDenoiser(ConditionalDenoiser&&) = default;

    const DenoiserConfig& config() const { return cfg_; }
    int total_steps() const { return total_steps_; }
    ParamRegistry<Real>& params() { return params_; }
    const ParamRegistry<Real>& params() const { return params_; }
    long eval_count() const { return eval_count_; }

    // Training-path forward: returns the prediction of x_{t-1} as a graph
    // variable so the loss can backpropagate into the weights.
    Var<Real> forward(const ConditioningBundle<Real>& bundle) const {
        validate_bundle(bundle);
        Tensor<Real> input = assemble_input(bundle);
        std::optional<Var<Real>> exp_feat;
        if (cfg_.use_expression_encoder)
            exp_feat = (*e_exp_)(nn::constant(bundle.low_res_frame));
        return unet_(nn::constant(std::move(input)), bundle.timesteps, exp_feat);
    }

    // Inference-path evaluation: no tape, returns the raw prediction.
    Tensor<Real> denoise_step(const ConditioningBundle<Real>& bundle) const {
        nn::NoGradGuard ng;
        ++eval_count_;
        return forward(bundle)->value;
    }

    // Expression embedding for one batch of low-res frames: (N,3,l,l) ->
    // (N, width, grid, grid). Pure function of the input and the weights.
    Tensor<Real> encode_expression(const Tensor<Real>& low_res) const {
        if (!cfg_.use_expression_encoder)
            throw ConfigError("encode_expression: use_expression_encoder is off");
        check_image(low_res, cfg_.low_res, "low_res_frame");
        nn::NoGradGuard ng;
        return (*e_exp_)(nn::constant(low_res))->value;
    }

  private:
    static void check_image(const Tensor<Real>& t, long res, const char* what) {
        if (t.rank() != 4 || t.shape[1] != 3 || t.shape[2] != res || t.shape[3] != res)
            throw ShapeError(std::string(what) + ": expected (N,3," + std::to_string(res) + "," +
                             std::to_string(res) + "), got " + shape_str(t));
    }

    void validate_bundle(const ConditioningBundle<Real>& b) const {
        check_image(b.noisy_frame, cfg_.high_res, "noisy_frame");
        check_image(b.identity_image, cfg_.high_res, "identity_image");
        check_image(b.low_res_frame, cfg_.low_res, "low_res_frame");
        if (cfg_.use_previous_frame)
            check_image(b.previous_frame_noised, cfg_.high_res, "previous_frame_noised");
        const long n = b.noisy_frame.shape[0];
        if (b.identity_image.shape[0] != n || b.low_res_frame.shape[0] != n ||
            (cfg_.use_previous_frame && b.previous_frame_noised.shape[0] != n))
            throw ShapeError("bundle: inconsistent batch sizes");
        if (static_cast<long>(b.timesteps.size()) != n)
            throw ShapeError("bundle: timesteps size " + std::to_string(b.timesteps.size()) +
                             " != batch " + std::to_string(n));
        for (int t : b.timesteps)
            if (t < 1 || t > total_steps_)
                throw IndexError("timestep " + std::to_string(t) + " out of range [1, " +
                                 std::to_string(total_steps_) + "]");
    }

    Tensor<Real> assemble_input(const ConditioningBundle<Real>& b) const {
        const long n = b.noisy_frame.shape[0];
        const long hw = static_cast<long>(cfg_.high_res) * cfg_.high_res;
        const long cin = cfg_.in_channels;
        Tensor<Real> input({n, cin, cfg_.high_res, cfg_.high_res});
        for (long i = 0; i < n; ++i) {
            Real* dst = input.ptr() + i * cin * hw;
            std::copy_n(b.noisy_frame.ptr() + i * 3 * hw, 3 * hw, dst);
            std::copy_n(b.identity_image.ptr() + i * 3 * hw, 3 * hw, dst + 3 * hw);
            if (cfg_.use_previous_frame)
                std::copy_n(b.previous_frame_noised.ptr() + i * 3 * hw, 3 * hw, dst + 6 * hw);
        }
        return input;
    }

    DenoiserConfig cfg_;
    int total_steps_ = 0;
    ParamRegistry<Real> params_;
    DenoisingUNet<Real> unet_;
    std::optional<ExpressionEncoder<Real>> e_exp_;
    mutable long eval_count_ = 0;
};

} // namespace revid
