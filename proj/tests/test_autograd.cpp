#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "revid/nn_ops.hpp"
#include "revid/rng.hpp"

using namespace revid;
using namespace revid::nn;

namespace {

Var<double> randn_param(Rng& rng, std::vector<long> shape) {
    return make_param(rng.normal_tensor<double>(std::move(shape)));
}

// Central finite differences on every coordinate of every param vs the
// autodiff gradient of a scalar loss.
void expect_grads_match(const std::function<Var<double>()>& build_loss,
                        const std::vector<Var<double>>& params, double h = 1e-6,
                        double tol = 1e-6) {
    for (const auto& p : params) p->zero_grad();
    Var<double> loss = build_loss();
    backward(loss);
    for (const auto& p : params) {
        for (long i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value[i];
            double fp, fm;
            {
                NoGradGuard ng;
                p->value[i] = saved + h;
                fp = build_loss()->value[0];
                p->value[i] = saved - h;
                fm = build_loss()->value[0];
                p->value[i] = saved;
            }
            const double fd = (fp - fm) / (2 * h);
            const double ad = p->grad[i];
            const double err = std::abs(fd - ad);
            EXPECT_LT(err, tol * std::max(std::abs(fd), std::abs(ad)) + 1e-9)
                << "coord " << i << ": fd=" << fd << " ad=" << ad;
        }
    }
}

Tensor<double> zeros(std::vector<long> shape) { return Tensor<double>(std::move(shape)); }

} // namespace

TEST(Autograd, AddMulScaleSilu) {
    Rng rng(1);
    auto a = randn_param(rng, {3, 4});
    auto b = randn_param(rng, {3, 4});
    expect_grads_match(
        [&] { return mse_loss(silu(scale(mul(add(a, b), b), 0.7)), zeros({3, 4})); }, {a, b});
}

TEST(Autograd, MeanAll) {
    Rng rng(2);
    auto a = randn_param(rng, {5});
    expect_grads_match([&] { return mean_all(mul(a, a)); }, {a});
}

TEST(Autograd, LinearRank2AndRank3) {
    Rng rng(3);
    auto x = randn_param(rng, {4, 6});
    auto w = randn_param(rng, {5, 6});
    auto b = randn_param(rng, {5});
    expect_grads_match([&] { return mse_loss(linear(x, w, b), zeros({4, 5})); }, {x, w, b});

    auto x3 = randn_param(rng, {2, 3, 6});
    expect_grads_match([&] { return mse_loss(linear(x3, w, b), zeros({2, 3, 5})); }, {x3, w, b});
}

TEST(Autograd, Conv2dStride1Pad1) {
    Rng rng(4);
    auto x = randn_param(rng, {2, 3, 5, 5});
    auto w = randn_param(rng, {4, 3, 3, 3});
    auto b = randn_param(rng, {4});
    expect_grads_match([&] { return mse_loss(conv2d(x, w, b, 1, 1), zeros({2, 4, 5, 5})); },
                       {x, w, b}, 1e-5, 1e-5);
}

TEST(Autograd, Conv2dStride2) {
    Rng rng(5);
    auto x = randn_param(rng, {1, 2, 6, 6});
    auto w = randn_param(rng, {3, 2, 3, 3});
    auto b = randn_param(rng, {3});
    expect_grads_match([&] { return mse_loss(conv2d(x, w, b, 2, 1), zeros({1, 3, 3, 3})); },
                       {x, w, b}, 1e-5, 1e-5);
}

TEST(Autograd, Conv2d1x1) {
    Rng rng(6);
    auto x = randn_param(rng, {2, 4, 3, 3});
    auto w = randn_param(rng, {2, 4, 1, 1});
    auto b = randn_param(rng, {2});
    expect_grads_match([&] { return mse_loss(conv2d(x, w, b, 1, 0), zeros({2, 2, 3, 3})); },
                       {x, w, b}, 1e-5, 1e-5);
}

TEST(Autograd, GroupNorm) {
    Rng rng(7);
    auto x = randn_param(rng, {2, 4, 3, 3});
    auto gamma = randn_param(rng, {4});
    auto beta = randn_param(rng, {4});
    expect_grads_match(
        [&] { return mse_loss(group_norm(x, gamma, beta, 2), zeros({2, 4, 3, 3})); },
        {x, gamma, beta}, 1e-5, 2e-5);
}

TEST(Autograd, AddChannelBias) {
    Rng rng(8);
    auto x = randn_param(rng, {2, 3, 4, 4});
    auto t = randn_param(rng, {2, 3});
    expect_grads_match([&] { return mse_loss(add_channel_bias(x, t), zeros({2, 3, 4, 4})); },
                       {x, t});
}

TEST(Autograd, ConcatAndSlice) {
    Rng rng(9);
    auto a = randn_param(rng, {2, 2, 3, 3});
    auto b = randn_param(rng, {2, 3, 3, 3});
    expect_grads_match([&] { return mse_loss(concat_channels(a, b), zeros({2, 5, 3, 3})); },
                       {a, b});

    auto ta = randn_param(rng, {2, 3, 4});
    auto tb = randn_param(rng, {2, 2, 4});
    expect_grads_match(
        [&] { return mse_loss(slice_tokens(concat_tokens(ta, tb), 1, 3), zeros({2, 3, 4})); },
        {ta, tb});
}

TEST(Autograd, TokenLayoutRoundTrip) {
    Rng rng(10);
    auto x = randn_param(rng, {2, 3, 2, 4});
    auto tokens = nchw_to_tokens(x);
    EXPECT_EQ(tokens->value.shape, (std::vector<long>{2, 8, 3}));
    auto back = tokens_to_nchw(tokens, 2, 4);
    for (long i = 0; i < x->value.numel(); ++i) EXPECT_EQ(back->value[i], x->value[i]);
    expect_grads_match([&] { return mse_loss(tokens_to_nchw(nchw_to_tokens(x), 2, 4),
                                             zeros({2, 3, 2, 4})); },
                       {x});
}

TEST(Autograd, BatchedMatmul) {
    Rng rng(11);
    auto a = randn_param(rng, {2, 3, 4});
    auto b = randn_param(rng, {2, 4, 5});
    expect_grads_match([&] { return mse_loss(bmm(a, b), zeros({2, 3, 5})); }, {a, b});

    auto c = randn_param(rng, {2, 5, 4});
    expect_grads_match([&] { return mse_loss(bmm_nt(a, c), zeros({2, 3, 5})); }, {a, c});
}

TEST(Autograd, Softmax) {
    Rng rng(12);
    auto x = randn_param(rng, {3, 5});
    Tensor<double> target({3, 5});
    rng.fill_normal(target);
    expect_grads_match([&] { return mse_loss(softmax_lastdim(x), target); }, {x});

    auto p = softmax_lastdim(x);
    for (long r = 0; r < 3; ++r) {
        double s = 0;
        for (long i = 0; i < 5; ++i) s += p->value[r * 5 + i];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Autograd, UpsampleNearest) {
    Rng rng(13);
    auto x = randn_param(rng, {1, 2, 3, 3});
    auto y = upsample_nearest2(x);
    EXPECT_EQ(y->value.shape, (std::vector<long>{1, 2, 6, 6}));
    EXPECT_EQ(y->value.at(0, 0, 1, 1), x->value.at(0, 0, 0, 0));
    expect_grads_match([&] { return mse_loss(upsample_nearest2(x), zeros({1, 2, 6, 6})); }, {x});
}

TEST(Autograd, AdaptiveAvgPool) {
    Rng rng(14);
    auto x = randn_param(rng, {1, 2, 6, 6});
    auto y = adaptive_avg_pool2d(x, 3, 3);
    EXPECT_EQ(y->value.shape, (std::vector<long>{1, 2, 3, 3}));
    expect_grads_match([&] { return mse_loss(adaptive_avg_pool2d(x, 3, 3), zeros({1, 2, 3, 3})); },
                       {x});
    // non-divisible target grid
    auto x2 = randn_param(rng, {1, 1, 5, 7});
    expect_grads_match(
        [&] { return mse_loss(adaptive_avg_pool2d(x2, 3, 4), zeros({1, 1, 3, 4})); }, {x2});
}

// A small attention-shaped composite: every op that appears in the real
// attention block chained together.
TEST(Autograd, AttentionComposite) {
    Rng rng(15);
    const long C = 4, HW = 6, Te = 2;
    auto x = randn_param(rng, {2, C, 2, 3});
    auto exp_tokens = randn_param(rng, {2, Te, C});
    auto wq = randn_param(rng, {C, C});
    auto wk = randn_param(rng, {C, C});
    auto wv = randn_param(rng, {C, C});
    auto bz = make_param(zeros({C}));
    auto build = [&] {
        auto img = nchw_to_tokens(x);
        auto all = concat_tokens(img, exp_tokens);
        auto q = linear(all, wq, bz);
        auto k = linear(all, wk, bz);
        auto v = linear(all, wv, bz);
        auto att = softmax_lastdim(scale(bmm_nt(q, k), 1.0 / std::sqrt(double(C))));
        auto o = bmm(att, v);
        auto img_o = slice_tokens(o, 0, HW);
        auto y = add(tokens_to_nchw(img_o, 2, 3), x);
        return mse_loss(y, zeros({2, C, 2, 3}));
    };
    expect_grads_match(build, {x, exp_tokens, wq, wk, wv, bz}, 1e-5, 1e-5);
}

TEST(Autograd, DeterministicForward) {
    Rng rng(16);
    auto x = randn_param(rng, {2, 3, 8, 8});
    auto w = randn_param(rng, {4, 3, 3, 3});
    auto b = randn_param(rng, {4});
    auto y1 = conv2d(x, w, b, 1, 1);
    auto y2 = conv2d(x, w, b, 1, 1);
    for (long i = 0; i < y1->value.numel(); ++i) EXPECT_EQ(y1->value[i], y2->value[i]);
}

TEST(Autograd, NoGradModeBuildsNoGraph) {
    Rng rng(17);
    auto x = randn_param(rng, {2, 2});
    NoGradGuard ng;
    auto y = mul(x, x);
    EXPECT_FALSE(y->requires_grad);
    EXPECT_TRUE(y->parents.empty());
}

TEST(Autograd, GradAccumulatesAcrossUses) {
    // x used twice in the graph: gradients from both paths must sum.
    Tensor<double> v({1});
    v[0] = 3.0;
    auto x = make_param(v);
    auto y = mul(x, x); // x^2, dy/dx = 2x = 6
    backward(mean_all(y));
    EXPECT_NEAR(x->grad[0], 6.0, 1e-12);
}

TEST(Autograd, ShapeErrors) {
    Rng rng(18);
    auto a = randn_param(rng, {2, 3});
    auto b = randn_param(rng, {3, 2});
    EXPECT_THROW(add(a, b), ShapeError);
    auto x = randn_param(rng, {1, 3, 4, 4});
    auto w = randn_param(rng, {2, 4, 3, 3});
    auto bias = randn_param(rng, {2});
    EXPECT_THROW(conv2d(x, w, bias, 1, 1), ShapeError);
}
