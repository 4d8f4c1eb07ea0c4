#pragma once

#include <cmath>
#include <utility>

#include "revid/schedule.hpp"
#include "revid/tensor.hpp"

namespace revid {

// Closed-form marginal sample: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
// The caller supplies the Gaussian draw so results stay reproducible.
template <typename Real>
Tensor<Real> forward_diffuse(const Tensor<Real>& x0, int t, const Tensor<Real>& noise,
                             const NoiseSchedule& sched) {
    sched.check_t(t);
    require_same_shape(x0, noise, "forward_diffuse");
    const double ab = sched.alpha_bar_at(t);
    const Real a = static_cast<Real>(std::sqrt(ab));
    const Real b = static_cast<Real>(std::sqrt(1.0 - ab));
    Tensor<Real> out(x0.shape);
    for (long i = 0; i < x0.numel(); ++i) out[i] = a * x0[i] + b * noise[i];
    return out;
}

// Training target pair (x_t, x_{t-1}) sharing a single noise draw.
// With alpha_bar_0 = 1 the second element at t = 1 is x0 itself.
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> diffuse_pair(const Tensor<Real>& x0, int t,
                                                   const Tensor<Real>& noise,
                                                   const NoiseSchedule& sched) {
    sched.check_t(t);
    require_same_shape(x0, noise, "diffuse_pair");
    const double ab = sched.alpha_bar_at(t);
    const double ab_prev = sched.alpha_bar_before(t);
    const Real a_t = static_cast<Real>(std::sqrt(ab));
    const Real b_t = static_cast<Real>(std::sqrt(1.0 - ab));
    const Real a_p = static_cast<Real>(std::sqrt(ab_prev));
    const Real b_p = static_cast<Real>(std::sqrt(1.0 - ab_prev));
    Tensor<Real> xt(x0.shape), xtm1(x0.shape);
    for (long i = 0; i < x0.numel(); ++i) {
        xt[i] = a_t * x0[i] + b_t * noise[i];
        xtm1[i] = a_p * x0[i] + b_p * noise[i];
    }
    return {std::move(xt), std::move(xtm1)};
}

template <typename Real>
struct PosteriorParams {
    Tensor<Real> mean;
    double variance = 0.0;
};

// Gaussian posterior q(x_{t-1} | x_t, x0) in the standard DDPM closed form:
//   mean = sqrt(abar_{t-1}) beta_t / (1-abar_t) * x0
//        + sqrt(alpha_t) (1-abar_{t-1}) / (1-abar_t) * x_t
//   var  = (1-abar_{t-1}) / (1-abar_t) * beta_t
template <typename Real>
PosteriorParams<Real> posterior_params(const Tensor<Real>& x0, const Tensor<Real>& xt, int t,
                                       const NoiseSchedule& sched) {
    sched.check_t(t);
    require_same_shape(x0, xt, "posterior_params");
    const double ab = sched.alpha_bar_at(t);
    const double ab_prev = sched.alpha_bar_before(t);
    const double beta_t = sched.beta_at(t);
    const double alpha_t = sched.alpha_at(t);
    const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab);
    const double ct = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab);

    PosteriorParams<Real> p;
    p.mean = Tensor<Real>(x0.shape);
    for (long i = 0; i < x0.numel(); ++i)
        p.mean[i] = static_cast<Real>(c0 * x0[i] + ct * xt[i]);
    p.variance = (1.0 - ab_prev) / (1.0 - ab) * beta_t;
    return p;
}

} // namespace revid
