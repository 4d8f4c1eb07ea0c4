#pragma once

#include <cmath>
#include <vector>

#include "revid/denoiser.hpp"

namespace revid {

// Adam with bias correction over a parameter registry. Moment buffers are
// kept in registry order; they serialize into checkpoints so a resumed run
// continues the exact trajectory.
template <typename Real>
class AdamOptimizer {
  public:
    AdamOptimizer(const ParamRegistry<Real>& params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (!(lr > 0.0)) throw ConfigError("learning_rate must be > 0");
        for (const auto& [name, p] : params.entries) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void step(ParamRegistry<Real>& params) {
        if (params.entries.size() != m_.size())
            throw InputError("optimizer state does not match parameter registry");
        ++t_;
        const Real bc1 = static_cast<Real>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
        const Real bc2 = static_cast<Real>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
        const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
        const Real lr = static_cast<Real>(lr_), eps = static_cast<Real>(eps_);
        for (size_t k = 0; k < params.entries.size(); ++k) {
            auto& p = params.entries[k].second;
            p->ensure_grad();
            Tensor<Real>& m = m_[k];
            Tensor<Real>& v = v_[k];
            for (long i = 0; i < p->value.numel(); ++i) {
                const Real g = p->grad[i];
                m[i] = b1 * m[i] + (Real(1) - b1) * g;
                v[i] = b2 * v[i] + (Real(1) - b2) * g * g;
                const Real mhat = m[i] / bc1;
                const Real vhat = v[i] / bc2;
                p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    long steps() const { return t_; }

    std::vector<Tensor<Real>>& moment1() { return m_; }
    std::vector<Tensor<Real>>& moment2() { return v_; }
    const std::vector<Tensor<Real>>& moment1() const { return m_; }
    const std::vector<Tensor<Real>>& moment2() const { return v_; }
    void restore(std::vector<Tensor<Real>> m, std::vector<Tensor<Real>> v, long steps) {
        if (m.size() != m_.size() || v.size() != v_.size())
            throw IoError("optimizer state does not match parameter registry");
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = steps;
    }

  private:
    std::vector<Tensor<Real>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

// Exponential moving average shadow of the weights:
//   shadow <- decay * shadow + (1 - decay) * w
// Shadows are plain tensors, never part of the autodiff graph.
template <typename Real>
class EmaWeights {
  public:
    EmaWeights(const ParamRegistry<Real>& params, double decay) : decay_(decay) {
        if (!(decay > 0.0) || decay > 1.0)
            throw ConfigError("ema_decay must be in (0, 1], got " + std::to_string(decay));
        for (const auto& [name, p] : params.entries) shadow_.push_back(p->value);
    }

    void update(const ParamRegistry<Real>& params) {
        const Real d = static_cast<Real>(decay_);
        for (size_t k = 0; k < shadow_.size(); ++k) {
            const auto& w = params.entries[k].second->value;
            Tensor<Real>& s = shadow_[k];
            for (long i = 0; i < s.numel(); ++i) s[i] = d * s[i] + (Real(1) - d) * w[i];
        }
    }

    void copy_to(ParamRegistry<Real>& params) const {
        if (shadow_.size() != params.entries.size())
            throw IoError("EMA shadow does not match parameter registry");
        for (size_t k = 0; k < shadow_.size(); ++k) {
            auto& p = params.entries[k].second;
            if (!p->value.same_shape(shadow_[k]))
                throw IoError("EMA shadow shape mismatch at index " + std::to_string(k));
            p->value = shadow_[k];
        }
    }

    double decay() const { return decay_; }
    std::vector<Tensor<Real>>& shadow() { return shadow_; }
    const std::vector<Tensor<Real>>& shadow() const { return shadow_; }

  private:
    double decay_;
    std::vector<Tensor<Real>> shadow_;
};

// Global L2 gradient clipping; returns the pre-clip norm.
template <typename Real>
double clip_grad_norm(ParamRegistry<Real>& params, double max_norm) {
    double sq = 0;
    for (auto& [name, p] : params.entries) {
        p->ensure_grad();
        for (long i = 0; i < p->grad.numel(); ++i)
            sq += static_cast<double>(p->grad[i]) * static_cast<double>(p->grad[i]);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const Real s = static_cast<Real>(max_norm / norm);
        for (auto& [name, p] : params.entries)
            for (long i = 0; i < p->grad.numel(); ++i) p->grad[i] *= s;
    }
    return norm;
}

} // namespace revid
