#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "revid/checkpoint.hpp"
#include "revid/diffusion.hpp"
#include "revid/denoiser.hpp"
#include "revid/optimizer.hpp"
#include "revid/rng.hpp"
#include "revid/training_config.hpp"

namespace revid {

// One (f_low, I_Id, f_high, f_high_prev) tuple. previous is the identity
// image for the first frame of a clip, matching inference initialization.
struct TrainingSample {
    Tensor<float> low_res;  // (3,l,l)
    Tensor<float> identity; // (3,H,H)
    Tensor<float> target;   // (3,H,H), the clean frame f_high^n
    Tensor<float> previous; // (3,H,H), the real previous frame
    std::string subject_id;
    std::string expression_label;
    int frame_index = 1; // 1-based within the clip
};

// Random-access sample source; the trainer shuffles indices per epoch.
class SampleDataset {
  public:
    virtual ~SampleDataset() = default;
    virtual long size() const = 0;
    virtual TrainingSample get(long index) const = 0;
};

class MemoryDataset : public SampleDataset {
  public:
    MemoryDataset() = default;
    explicit MemoryDataset(std::vector<TrainingSample> samples) : samples_(std::move(samples)) {}
    void add(TrainingSample s) { samples_.push_back(std::move(s)); }
    long size() const override { return static_cast<long>(samples_.size()); }
    TrainingSample get(long index) const override { return samples_[static_cast<size_t>(index)]; }

  private:
    std::vector<TrainingSample> samples_;
};

// Paired-noisy-frame regression trainer: per step, each sample gets a
// uniform timestep and a shared noise draw; the network regresses the
// less-noisy frame under MSE; Adam updates the weights and the EMA shadow
// follows. All stochastic draws derive from (seed, step), so a resumed
// run replays the identical trajectory.
template <typename Real>
class Trainer {
  public:
    using StepHook = std::function<void(long step, double loss)>;
    using BundleHook =
        std::function<void(const ConditioningBundle<Real>&, const Tensor<Real>& target)>;

    Trainer(const DenoiserConfig& dcfg, const TrainConfig& tcfg)
        : dcfg_(dcfg), tcfg_(tcfg),
          model_(dcfg, tcfg.total_steps, tcfg.seed),
          schedule_(build_schedule(tcfg.total_steps, tcfg.beta_start, tcfg.beta_end)),
          opt_(model_.params(), tcfg.learning_rate),
          ema_(model_.params(), tcfg.ema_decay) {
        tcfg_.validate();
    }

    static Trainer from_checkpoint(const Checkpoint<Real>& ck) {
        Trainer t(ck.denoiser_config, ck.train_config);
        auto& entries = t.model_.params().entries;
        if (ck.weights.size() != entries.size())
            throw IoError("checkpoint does not match model parameter count");
        for (size_t i = 0; i < entries.size(); ++i) entries[i].second->value = ck.weights[i].second;
        std::vector<Tensor<Real>> m, v;
        for (const auto& [n, tns] : ck.adam_m) m.push_back(tns);
        for (const auto& [n, tns] : ck.adam_v) v.push_back(tns);
        t.opt_.restore(std::move(m), std::move(v), ck.adam_steps);
        auto& shadow = t.ema_.shadow();
        if (ck.ema.size() != shadow.size()) throw IoError("checkpoint EMA does not match model");
        for (size_t i = 0; i < shadow.size(); ++i) shadow[i] = ck.ema[i].second;
        t.global_step_ = ck.global_step;
        return t;
    }

    Checkpoint<Real> snapshot() const {
        Checkpoint<Real> ck;
        ck.denoiser_config = dcfg_;
        ck.train_config = tcfg_;
        ck.global_step = global_step_;
        ck.adam_steps = opt_.steps();
        for (const auto& [name, p] : model_.params().entries) ck.weights.emplace_back(name, p->value);
        for (size_t i = 0; i < model_.params().entries.size(); ++i) {
            const auto& name = model_.params().entries[i].first;
            ck.ema.emplace_back(name, ema_.shadow()[i]);
            ck.adam_m.emplace_back(name, opt_.moment1()[i]);
            ck.adam_v.emplace_back(name, opt_.moment2()[i]);
        }
        return ck;
    }

    // One optimizer step on an explicit batch. Throws NumericalError with
    // the step index and drawn timesteps if the loss is not finite.
    double train_step(const std::vector<TrainingSample>& batch) {
        if (batch.empty()) throw InputError("train_step: empty batch");
        const long n = static_cast<long>(batch.size());
        const long H = dcfg_.high_res, l = dcfg_.low_res;

        Rng srng(seed_mix({tcfg_.seed, stream::kTrainStep, static_cast<std::uint64_t>(global_step_)}));
        std::vector<int> ts(static_cast<size_t>(n));
        for (auto& t : ts) t = static_cast<int>(srng.uniform_int(1, tcfg_.total_steps));

        Tensor<Real> noisy({n, 3, H, H}), target({n, 3, H, H});
        Tensor<Real> identity({n, 3, H, H}), low({n, 3, l, l}), previous({n, 3, H, H});
        const long img = 3 * H * H, img_low = 3 * l * l;
        for (long i = 0; i < n; ++i) {
            const TrainingSample& s = batch[static_cast<size_t>(i)];
            check_sample(s);
            Tensor<Real> x0 = s.target.template cast<Real>();
            Tensor<Real> eps = srng.normal_tensor<Real>({3, H, H});
            auto [xt, xtm1] = diffuse_pair(x0, ts[static_cast<size_t>(i)], eps, schedule_);
            std::copy_n(xt.ptr(), img, noisy.ptr() + i * img);
            std::copy_n(xtm1.ptr(), img, target.ptr() + i * img);
            copy_cast(s.identity, identity.ptr() + i * img);
            copy_cast(s.low_res, low.ptr() + i * img_low);
            copy_cast(s.previous, previous.ptr() + i * img);
        }

        CountedNoise z_source(seed_mix({tcfg_.seed, stream::kTrainStep,
                                        static_cast<std::uint64_t>(global_step_), stream::kSampleZ}));
        ConditioningBundle<Real> bundle = make_bundle(std::move(noisy), std::move(identity),
                                                      std::move(low), previous, ts, dcfg_, z_source);
        if (bundle_hook_) bundle_hook_(bundle, target);

        model_.params().zero_grads();
        auto loss = nn::mse_loss(model_.forward(bundle), target);
        const double loss_value = static_cast<double>(loss->value[0]);
        if (!std::isfinite(loss_value)) {
            std::string tlist;
            for (int t : ts) tlist += std::to_string(t) + " ";
            throw NumericalError("non-finite loss at step " + std::to_string(global_step_ + 1) +
                                 " (timesteps " + tlist + ")");
        }
        nn::backward(loss);
        if (tcfg_.grad_clip > 0.0) clip_grad_norm(model_.params(), tcfg_.grad_clip);
        opt_.step(model_.params());
        ema_.update(model_.params());
        ++global_step_;
        return loss_value;
    }

    // Shuffled-epoch loop honoring the epoch budget and max_steps cap.
    // The hook sees 1-based step indices.
    void train(const SampleDataset& data, const StepHook& hook = {}) {
        if (data.size() == 0) throw ConfigError("dataset is empty");
        const long total = planned_steps(data.size());
        while (global_step_ < total) {
            std::vector<TrainingSample> batch = next_batch(data);
            const double loss = train_step(batch);
            if (hook) hook(global_step_, loss);
        }
    }

    long planned_steps(long dataset_size) const {
        const long B = std::min<long>(tcfg_.batch_size, dataset_size);
        const long steps_per_epoch = std::max<long>(1, dataset_size / B);
        long total = static_cast<long>(tcfg_.epochs) * steps_per_epoch;
        if (tcfg_.max_steps > 0) total = std::min(total, tcfg_.max_steps);
        return total;
    }

    // The shuffled batch the loop would take at the current step.
    std::vector<TrainingSample> next_batch(const SampleDataset& data) const {
        const long K = data.size();
        const long B = std::min<long>(tcfg_.batch_size, K);
        const long steps_per_epoch = std::max<long>(1, K / B);
        const long epoch = global_step_ / steps_per_epoch;
        const long pos = global_step_ % steps_per_epoch;
        Rng shuffle_rng(seed_mix({tcfg_.seed, stream::kShuffle, static_cast<std::uint64_t>(epoch)}));
        auto perm = shuffle_rng.permutation(K);
        std::vector<TrainingSample> batch;
        batch.reserve(static_cast<size_t>(B));
        for (long j = 0; j < B; ++j)
            batch.push_back(data.get(perm[static_cast<size_t>((pos * B + j) % K)]));
        return batch;
    }

    ConditionalDenoiser<Real>& model() { return model_; }
    const ConditionalDenoiser<Real>& model() const { return model_; }
    EmaWeights<Real>& ema() { return ema_; }
    AdamOptimizer<Real>& optimizer() { return opt_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    long global_step() const { return global_step_; }
    const TrainConfig& train_config() const { return tcfg_; }
    void set_bundle_hook(BundleHook hook) { bundle_hook_ = std::move(hook); }

  private:
    void check_sample(const TrainingSample& s) const {
        auto want_high = std::vector<long>{3, dcfg_.high_res, dcfg_.high_res};
        auto want_low = std::vector<long>{3, dcfg_.low_res, dcfg_.low_res};
        if (s.target.shape != want_high || s.identity.shape != want_high ||
            s.previous.shape != want_high)
            throw ShapeError("training sample: high-res images must be (3," +
                             std::to_string(dcfg_.high_res) + "," + std::to_string(dcfg_.high_res) +
                             ")");
        if (s.low_res.shape != want_low)
            throw ShapeError("training sample: low-res image must be (3," +
                             std::to_string(dcfg_.low_res) + "," + std::to_string(dcfg_.low_res) +
                             ")");
    }

    void copy_cast(const Tensor<float>& src, Real* dst) const {
        for (long i = 0; i < src.numel(); ++i) dst[i] = static_cast<Real>(src[i]);
    }

    DenoiserConfig dcfg_;
    TrainConfig tcfg_;
    ConditionalDenoiser<Real> model_;
    NoiseSchedule schedule_;
    AdamOptimizer<Real> opt_;
    EmaWeights<Real> ema_;
    long global_step_ = 0;
    BundleHook bundle_hook_;
};

} // namespace revid
