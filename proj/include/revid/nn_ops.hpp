#pragma once

#include <cmath>
#include <vector>

#include "revid/autograd.hpp"

namespace revid::nn {

namespace detail {

template <typename Real>
void im2col(const Real* x, long C, long H, long W, long kh, long kw, long stride, long pad,
            long Ho, long Wo, Real* col) {
    const long P = Ho * Wo;
    for (long c = 0; c < C; ++c) {
        for (long ki = 0; ki < kh; ++ki) {
            for (long kj = 0; kj < kw; ++kj) {
                Real* dst = col + ((c * kh + ki) * kw + kj) * P;
                for (long oy = 0; oy < Ho; ++oy) {
                    const long iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) {
                        for (long ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = Real(0);
                        continue;
                    }
                    const Real* src = x + (c * H + iy) * W;
                    for (long ox = 0; ox < Wo; ++ox) {
                        const long ix = ox * stride - pad + kj;
                        dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : Real(0);
                    }
                }
            }
        }
    }
}

template <typename Real>
void col2im_accumulate(const Real* col, long C, long H, long W, long kh, long kw, long stride,
                       long pad, long Ho, long Wo, Real* x) {
    const long P = Ho * Wo;
    for (long c = 0; c < C; ++c) {
        for (long ki = 0; ki < kh; ++ki) {
            for (long kj = 0; kj < kw; ++kj) {
                const Real* src = col + ((c * kh + ki) * kw + kj) * P;
                for (long oy = 0; oy < Ho; ++oy) {
                    const long iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    Real* dst = x + (c * H + iy) * W;
                    for (long ox = 0; ox < Wo; ++ox) {
                        const long ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

// 2D convolution, NCHW x (Cout,Cin,kh,kw) -> NCHW. im2col + GEMM; the
// column buffer is recomputed in the backward pass instead of stored.
template <typename Real>
Var<Real> conv2d(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b, long stride = 1,
                 long pad = 0) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (xs.size() != 4 || ws.size() != 4)
        throw ShapeError("conv2d: expected 4-d input and weight, got " + shape_str(x->value) +
                         " and " + shape_str(w->value));
    if (xs[1] != ws[1])
        throw ShapeError("conv2d: input channels " + std::to_string(xs[1]) +
                         " != weight channels " + std::to_string(ws[1]));
    const long N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const long Cout = ws[0], kh = ws[2], kw = ws[3];
    const long Ho = (H + 2 * pad - kh) / stride + 1;
    const long Wo = (W + 2 * pad - kw) / stride + 1;
    const long K = Cin * kh * kw, P = Ho * Wo;

    Tensor<Real> out({N, Cout, Ho, Wo});
    std::vector<Real> col(static_cast<size_t>(K * P));
    ConstMatMap<Real> wmat(w->value.ptr(), Cout, K);
    for (long n = 0; n < N; ++n) {
        detail::im2col(x->value.ptr() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                       col.data());
        ConstMatMap<Real> cmat(col.data(), K, P);
        MatMap<Real> omat(out.ptr() + n * Cout * P, Cout, P);
        omat.noalias() = wmat * cmat;
        for (long c = 0; c < Cout; ++c) omat.row(c).array() += b->value[c];
    }

    return make_op<Real>(std::move(out), {x, w, b},
                         [x, w, b, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K,
                          P](Node<Real>& o) {
        std::vector<Real> col(static_cast<size_t>(K * P));
        std::vector<Real> dcol(static_cast<size_t>(K * P));
        if (w->requires_grad) w->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        if (x->requires_grad) x->ensure_grad();
        ConstMatMap<Real> wmat(w->value.ptr(), Cout, K);
        for (long n = 0; n < N; ++n) {
            ConstMatMap<Real> gmat(o.grad.ptr() + n * Cout * P, Cout, P);
            if (w->requires_grad || x->requires_grad)
                detail::im2col(x->value.ptr() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad,
                               Ho, Wo, col.data());
            if (w->requires_grad) {
                ConstMatMap<Real> cmat(col.data(), K, P);
                MatMap<Real> gw(w->grad.ptr(), Cout, K);
                gw.noalias() += gmat * cmat.transpose();
            }
            if (b->requires_grad)
                for (long c = 0; c < Cout; ++c) b->grad[c] += gmat.row(c).sum();
            if (x->requires_grad) {
                MatMap<Real> dcmat(dcol.data(), K, P);
                dcmat.noalias() = wmat.transpose() * gmat;
                detail::col2im_accumulate(dcol.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                                          x->grad.ptr() + n * Cin * H * W);
            }
        }
    });
}

// Affine map on the last dimension: (..., D) x (O, D) -> (..., O).
template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    const long D = xs.back();
    if (ws.size() != 2 || ws[1] != D)
        throw ShapeError("linear: weight " + shape_str(w->value) + " does not match input " +
                         shape_str(x->value));
    const long O = ws[0];
    const long rows = x->value.numel() / D;

    std::vector<long> out_shape(xs.begin(), xs.end() - 1);
    out_shape.push_back(O);
    Tensor<Real> out(out_shape);
    {
        ConstMatMap<Real> xm(x->value.ptr(), rows, D);
        ConstMatMap<Real> wm(w->value.ptr(), O, D);
        MatMap<Real> om(out.ptr(), rows, O);
        om.noalias() = xm * wm.transpose();
        om.rowwise() += ConstMatMap<Real>(b->value.ptr(), 1, O).row(0);
    }
    return make_op<Real>(std::move(out), {x, w, b}, [x, w, b, rows, D, O](Node<Real>& o) {
        ConstMatMap<Real> gm(o.grad.ptr(), rows, O);
        if (x->requires_grad) {
            x->ensure_grad();
            MatMap<Real> gx(x->grad.ptr(), rows, D);
            ConstMatMap<Real> wm(w->value.ptr(), O, D);
            gx.noalias() += gm * wm;
        }
        if (w->requires_grad) {
            w->ensure_grad();
            MatMap<Real> gw(w->grad.ptr(), O, D);
            ConstMatMap<Real> xm(x->value.ptr(), rows, D);
            gw.noalias() += gm.transpose() * xm;
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long r = 0; r < rows; ++r)
                for (long c = 0; c < O; ++c) b->grad[c] += gm(r, c);
        }
    });
}

// GroupNorm over (C/G, H, W) statistics per sample per group.
template <typename Real>
Var<Real> group_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta,
                     long groups, Real eps = Real(1e-5)) {
    const auto& xs = x->value.shape;
    if (xs.size() != 4) throw ShapeError("group_norm: expected NCHW, got " + shape_str(x->value));
    const long N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    if (C % groups != 0)
        throw ShapeError("group_norm: channels " + std::to_string(C) + " not divisible by " +
                         std::to_string(groups) + " groups");
    const long cg = C / groups;
    const long m = cg * HW;

    Tensor<Real> out(xs);
    std::vector<Real> mean(static_cast<size_t>(N * groups)), inv_s(static_cast<size_t>(N * groups));
    for (long n = 0; n < N; ++n) {
        for (long g = 0; g < groups; ++g) {
            const Real* px = x->value.ptr() + (n * C + g * cg) * HW;
            Real mu = 0;
            for (long i = 0; i < m; ++i) mu += px[i];
            mu /= static_cast<Real>(m);
            Real var = 0;
            for (long i = 0; i < m; ++i) {
                Real d = px[i] - mu;
                var += d * d;
            }
            var /= static_cast<Real>(m);
            const Real is = Real(1) / std::sqrt(var + eps);
            mean[static_cast<size_t>(n * groups + g)] = mu;
            inv_s[static_cast<size_t>(n * groups + g)] = is;
            Real* py = out.ptr() + (n * C + g * cg) * HW;
            for (long c = 0; c < cg; ++c) {
                const Real ga = gamma->value[g * cg + c], be = beta->value[g * cg + c];
                for (long i = 0; i < HW; ++i)
                    py[c * HW + i] = (px[c * HW + i] - mu) * is * ga + be;
            }
        }
    }

    return make_op<Real>(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, N, C, HW, groups, cg, m, mean = std::move(mean),
                          inv_s = std::move(inv_s)](Node<Real>& o) {
        if (x->requires_grad) x->ensure_grad();
        if (gamma->requires_grad) gamma->ensure_grad();
        if (beta->requires_grad) beta->ensure_grad();
        std::vector<Real> xhat(static_cast<size_t>(m)), dxhat(static_cast<size_t>(m));
        for (long n = 0; n < N; ++n) {
            for (long g = 0; g < groups; ++g) {
                const Real mu = mean[static_cast<size_t>(n * groups + g)];
                const Real is = inv_s[static_cast<size_t>(n * groups + g)];
                const Real* px = x->value.ptr() + (n * C + g * cg) * HW;
                const Real* pg = o.grad.ptr() + (n * C + g * cg) * HW;
                Real s1 = 0, s2 = 0;
                for (long c = 0; c < cg; ++c) {
                    const Real ga = gamma->value[g * cg + c];
                    for (long i = 0; i < HW; ++i) {
                        const long k = c * HW + i;
                        xhat[static_cast<size_t>(k)] = (px[k] - mu) * is;
                        dxhat[static_cast<size_t>(k)] = pg[k] * ga;
                        s1 += dxhat[static_cast<size_t>(k)];
                        s2 += dxhat[static_cast<size_t>(k)] * xhat[static_cast<size_t>(k)];
                    }
                }
                if (gamma->requires_grad || beta->requires_grad) {
                    for (long c = 0; c < cg; ++c) {
                        Real gg = 0, gb = 0;
                        for (long i = 0; i < HW; ++i) {
                            const long k = c * HW + i;
                            gg += pg[k] * xhat[static_cast<size_t>(k)];
                            gb += pg[k];
                        }
                        if (gamma->requires_grad) gamma->grad[g * cg + c] += gg;
                        if (beta->requires_grad) beta->grad[g * cg + c] += gb;
                    }
                }
                if (x->requires_grad) {
                    Real* gx = x->grad.ptr() + (n * C + g * cg) * HW;
                    const Real inv_m = Real(1) / static_cast<Real>(m);
                    for (long k = 0; k < m; ++k)
                        gx[k] += is * (dxhat[static_cast<size_t>(k)] - s1 * inv_m -
                                       xhat[static_cast<size_t>(k)] * s2 * inv_m);
                }
            }
        }
    });
}

// x (N,C,H,W) + t (N,C) broadcast over spatial dims.
template <typename Real>
Var<Real> add_channel_bias(const Var<Real>& x, const Var<Real>& t) {
    const auto& xs = x->value.shape;
    if (xs.size() != 4 || t->value.shape.size() != 2 || t->value.shape[0] != xs[0] ||
        t->value.shape[1] != xs[1])
        throw ShapeError("add_channel_bias: " + shape_str(x->value) + " vs " +
                         shape_str(t->value));
    const long N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    Tensor<Real> out(xs);
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const Real bias = t->value[n * C + c];
            const Real* px = x->value.ptr() + (n * C + c) * HW;
            Real* py = out.ptr() + (n * C + c) * HW;
            for (long i = 0; i < HW; ++i) py[i] = px[i] + bias;
        }
    return make_op<Real>(std::move(out), {x, t}, [x, t, N, C, HW](Node<Real>& o) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (long i = 0; i < o.grad.numel(); ++i) x->grad[i] += o.grad[i];
        }
        if (t->requires_grad) {
            t->ensure_grad();
            for (long n = 0; n < N; ++n)
                for (long c = 0; c < C; ++c) {
                    const Real* pg = o.grad.ptr() + (n * C + c) * HW;
                    Real acc = 0;
                    for (long i = 0; i < HW; ++i) acc += pg[i];
                    t->grad[n * C + c] += acc;
                }
        }
    });
}

template <typename Real>
Var<Real> concat_channels(const Var<Real>& a, const Var<Real>& b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw ShapeError("concat_channels: " + shape_str(a->value) + " vs " +
                         shape_str(b->value));
    const long N = as[0], Ca = as[1], Cb = bs[1], HW = as[2] * as[3];
    Tensor<Real> out({N, Ca + Cb, as[2], as[3]});
    for (long n = 0; n < N; ++n) {
        std::copy_n(a->value.ptr() + n * Ca * HW, Ca * HW, out.ptr() + n * (Ca + Cb) * HW);
        std::copy_n(b->value.ptr() + n * Cb * HW, Cb * HW,
                    out.ptr() + n * (Ca + Cb) * HW + Ca * HW);
    }
    return make_op<Real>(std::move(out), {a, b}, [a, b, N, Ca, Cb, HW](Node<Real>& o) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (long n = 0; n < N; ++n) {
                const Real* pg = o.grad.ptr() + n * (Ca + Cb) * HW;
                Real* ga = a->grad.ptr() + n * Ca * HW;
                for (long i = 0; i < Ca * HW; ++i) ga[i] += pg[i];
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long n = 0; n < N; ++n) {
                const Real* pg = o.grad.ptr() + n * (Ca + Cb) * HW + Ca * HW;
                Real* gb = b->grad.ptr() + n * Cb * HW;
                for (long i = 0; i < Cb * HW; ++i) gb[i] += pg[i];
            }
        }
    });
}

// (N,C,H,W) -> (N, H*W, C) token layout for attention.
template <typename Real>
Var<Real> nchw_to_tokens(const Var<Real>& x) {
    const auto& xs = x->value.shape;
    if (xs.size() != 4) throw ShapeError("nchw_to_tokens: expected NCHW, got " + shape_str(x->value));
    const long N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    Tensor<Real> out({N, HW, C});
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const Real* px = x->value.ptr() + (n * C + c) * HW;
            Real* py = out.ptr() + n * HW * C + c;
            for (long i = 0; i < HW; ++i) py[i * C] = px[i];
        }
    return make_op<Real>(std::move(out), {x}, [x, N, C, HW](Node<Real>& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (long n = 0; n < N; ++n)
            for (long c = 0; c < C; ++c) {
                Real* gx = x->grad.ptr() + (n * C + c) * HW;
                const Real* pg = o.grad.ptr() + n * HW * C + c;
                for (long i = 0; i < HW; ++i) gx[i] += pg[i * C];
            }
    });
}

template <typename Real>
Var<Real> tokens_to_nchw(const Var<Real>& x, long H, long W) {
    const auto& xs = x->value.shape;
    if (xs.size() != 3 || xs[1] != H * W)
        throw ShapeError("tokens_to_nchw: expected (N," + std::to_string(H * W) + ",C), got " +
                         shape_str(x->value));
    const long N = xs[0], HW = xs[1], C = xs[2];
    Tensor<Real> out({N, C, H, W});
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            Real* py = out.ptr() + (n * C + c) * HW;
            const Real* px = x->value.ptr() + n * HW * C + c;
            for (long i = 0; i < HW; ++i) py[i] = px[i * C];
        }
    return make_op<Real>(std::move(out), {x}, [x, N, C, HW](Node<Real>& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (long n = 0; n < N; ++n)
            for (long c = 0; c < C; ++c) {
                const Real* pg = o.grad.ptr() + (n * C + c) * HW;
                Real* gx = x->grad.ptr() + n * HW * C + c;
                for (long i = 0; i < HW; ++i) gx[i * C] += pg[i];
            }
    });
}

template <typename Real>
Var<Real> concat_tokens(const Var<Real>& a, const Var<Real>& b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[2])
        throw ShapeError("concat_tokens: " + shape_str(a->value) + " vs " + shape_str(b->value));
    const long N = as[0], Ta = as[1], Tb = bs[1], C = as[2];
    Tensor<Real> out({N, Ta + Tb, C});
    for (long n = 0; n < N; ++n) {
        std::copy_n(a->value.ptr() + n * Ta * C, Ta * C, out.ptr() + n * (Ta + Tb) * C);
        std::copy_n(b->value.ptr() + n * Tb * C, Tb * C, out.ptr() + n * (Ta + Tb) * C + Ta * C);
    }
    return make_op<Real>(std::move(out), {a, b}, [a, b, N, Ta, Tb, C](Node<Real>& o) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (long n = 0; n < N; ++n) {
                const Real* pg = o.grad.ptr() + n * (Ta + Tb) * C;
                Real* ga = a->grad.ptr() + n * Ta * C;
                for (long i = 0; i < Ta * C; ++i) ga[i] += pg[i];
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long n = 0; n < N; ++n) {
                const Real* pg = o.grad.ptr() + n * (Ta + Tb) * C + Ta * C;
                Real* gb = b->grad.ptr() + n * Tb * C;
                for (long i = 0; i < Tb * C; ++i) gb[i] += pg[i];
            }
        }
    });
}

template <typename Real>
Var<Real> slice_tokens(const Var<Real>& x, long start, long len) {
    const auto& xs = x->value.shape;
    if (xs.size() != 3 || start < 0 || start + len > xs[1])
        throw ShapeError("slice_tokens: invalid slice [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") of " + shape_str(x->value));
    const long N = xs[0], T = xs[1], C = xs[2];
    Tensor<Real> out({N, len, C});
    for (long n = 0; n < N; ++n)
        std::copy_n(x->value.ptr() + (n * T + start) * C, len * C, out.ptr() + n * len * C);
    return make_op<Real>(std::move(out), {x}, [x, N, T, C, start, len](Node<Real>& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (long n = 0; n < N; ++n) {
            const Real* pg = o.grad.ptr() + n * len * C;
            Real* gx = x->grad.ptr() + (n * T + start) * C;
            for (long i = 0; i < len * C; ++i) gx[i] += pg[i];
        }
    });
}

// Batched matmul (N,M,K) x (N,K,P) -> (N,M,P).
template <typename Real>
Var<Real> bmm(const Var<Real>& a, const Var<Real>& b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
        throw ShapeError("bmm: " + shape_str(a->value) + " x " + shape_str(b->value));
    const long N = as[0], M = as[1], K = as[2], P = bs[2];
    Tensor<Real> out({N, M, P});
    for (long n = 0; n < N; ++n) {
        ConstMatMap<Real> am(a->value.ptr() + n * M * K, M, K);
        ConstMatMap<Real> bm(b->value.ptr() + n * K * P, K, P);
        MatMap<Real> om(out.ptr() + n * M * P, M, P);
        om.noalias() = am * bm;
    }
    return make_op<Real>(std::move(out), {a, b}, [a, b, N, M, K, P](Node<Real>& o) {
        for (long n = 0; n < N; ++n) {
            ConstMatMap<Real> gm(o.grad.ptr() + n * M * P, M, P);
            if (a->requires_grad) {
                a->ensure_grad();
                ConstMatMap<Real> bm(b->value.ptr() + n * K * P, K, P);
                MatMap<Real> ga(a->grad.ptr() + n * M * K, M, K);
                ga.noalias() += gm * bm.transpose();
            }
            if (b->requires_grad) {
                b->ensure_grad();
                ConstMatMap<Real> am(a->value.ptr() + n * M * K, M, K);
                MatMap<Real> gb(b->grad.ptr() + n * K * P, K, P);
                gb.noalias() += am.transpose() * gm;
            }
        }
    });
}

// Batched matmul against the transpose: (N,M,K) x (N,P,K) -> (N,M,P).
template <typename Real>
Var<Real> bmm_nt(const Var<Real>& a, const Var<Real>& b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[2])
        throw ShapeError("bmm_nt: " + shape_str(a->value) + " x " + shape_str(b->value));
    const long N = as[0], M = as[1], K = as[2], P = bs[1];
    Tensor<Real> out({N, M, P});
    for (long n = 0; n < N; ++n) {
        ConstMatMap<Real> am(a->value.ptr() + n * M * K, M, K);
        ConstMatMap<Real> bm(b->value.ptr() + n * P * K, P, K);
        MatMap<Real> om(out.ptr() + n * M * P, M, P);
        om.noalias() = am * bm.transpose();
    }
    return make_op<Real>(std::move(out), {a, b}, [a, b, N, M, K, P](Node<Real>& o) {
        for (long n = 0; n < N; ++n) {
            ConstMatMap<Real> gm(o.grad.ptr() + n * M * P, M, P);
            if (a->requires_grad) {
                a->ensure_grad();
                ConstMatMap<Real> bm(b->value.ptr() + n * P * K, P, K);
                MatMap<Real> ga(a->grad.ptr() + n * M * K, M, K);
                ga.noalias() += gm * bm;
            }
            if (b->requires_grad) {
                b->ensure_grad();
                ConstMatMap<Real> am(a->value.ptr() + n * M * K, M, K);
                MatMap<Real> gb(b->grad.ptr() + n * P * K, P, K);
                gb.noalias() += gm.transpose() * am;
            }
        }
    });
}

template <typename Real>
Var<Real> softmax_lastdim(const Var<Real>& x) {
    const long L = x->value.shape.back();
    const long rows = x->value.numel() / L;
    Tensor<Real> out(x->value.shape);
    for (long r = 0; r < rows; ++r) {
        const Real* px = x->value.ptr() + r * L;
        Real* py = out.ptr() + r * L;
        Real mx = px[0];
        for (long i = 1; i < L; ++i) mx = std::max(mx, px[i]);
        Real z = 0;
        for (long i = 0; i < L; ++i) {
            py[i] = std::exp(px[i] - mx);
            z += py[i];
        }
        const Real inv = Real(1) / z;
        for (long i = 0; i < L; ++i) py[i] *= inv;
    }
    return make_op<Real>(std::move(out), {x}, [x, rows, L](Node<Real>& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (long r = 0; r < rows; ++r) {
            const Real* p = o.value.ptr() + r * L;
            const Real* g = o.grad.ptr() + r * L;
            Real dot = 0;
            for (long i = 0; i < L; ++i) dot += p[i] * g[i];
            Real* gx = x->grad.ptr() + r * L;
            for (long i = 0; i < L; ++i) gx[i] += p[i] * (g[i] - dot);
        }
    });
}

template <typename Real>
Var<Real> upsample_nearest2(const Var<Real>& x) {
    const auto& xs = x->value.shape;
    if (xs.size() != 4) throw ShapeError("upsample_nearest2: expected NCHW");
    const long N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor<Real> out({N, C, 2 * H, 2 * W});
    for (long nc = 0; nc < N * C; ++nc) {
        const Real* px = x->value.ptr() + nc * H * W;
        Real* py = out.ptr() + nc * 4 * H * W;
        for (long y = 0; y < H; ++y)
            for (long xq = 0; xq < W; ++xq) {
                const Real v = px[y * W + xq];
                py[(2 * y) * 2 * W + 2 * xq] = v;
                py[(2 * y) * 2 * W + 2 * xq + 1] = v;
                py[(2 * y + 1) * 2 * W + 2 * xq] = v;
                py[(2 * y + 1) * 2 * W + 2 * xq + 1] = v;
            }
    }
    return make_op<Real>(std::move(out), {x}, [x, N, C, H, W](Node<Real>& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (long nc = 0; nc < N * C; ++nc) {
            Real* gx = x->grad.ptr() + nc * H * W;
            const Real* pg = o.grad.ptr() + nc * 4 * H * W;
            for (long y = 0; y < H; ++y)
                for (long xq = 0; xq < W; ++xq)
                    gx[y * W + xq] += pg[(2 * y) * 2 * W + 2 * xq] +
                                      pg[(2 * y) * 2 * W + 2 * xq + 1] +
                                      pg[(2 * y + 1) * 2 * W + 2 * xq] +
                                      pg[(2 * y + 1) * 2 * W + 2 * xq + 1];
        }
    });
}

// Adaptive average pooling to an exact output grid (torch window rule).
template <typename Real>
Var<Real> adaptive_avg_pool2d(const Var<Real>& x, long oh, long ow) {
    const auto& xs = x->value.shape;
    if (xs.size() != 4) throw ShapeError("adaptive_avg_pool2d: expected NCHW");
    const long N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    auto win = [](long i, long in, long out) {
        const long lo = (i * in) / out;
        const long hi = ((i + 1) * in + out - 1) / out;
        return std::pair<long, long>(lo, hi);
    };
    Tensor<Real> out({N, C, oh, ow});
    for (long nc = 0; nc < N * C; ++nc) {
        const Real* px = x->value.ptr() + nc * H * W;
        Real* py = out.ptr() + nc * oh * ow;
        for (long oy = 0; oy < oh; ++oy) {
            auto [y0, y1] = win(oy, H, oh);
            for (long ox = 0; ox < ow; ++ox) {
                auto [x0, x1] = win(ox, W, ow);
                Real acc = 0;
                for (long y = y0; y < y1; ++y)
                    for (long xq = x0; xq < x1; ++xq) acc += px[y * W + xq];
                py[oy * ow + ox] = acc / static_cast<Real>((y1 - y0) * (x1 - x0));
            }
        }
    }
    return make_op<Real>(std::move(out), {x}, [x, N, C, H, W, oh, ow](Node<Real>& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        auto win = [](long i, long in, long out) {
            const long lo = (i * in) / out;
            const long hi = ((i + 1) * in + out - 1) / out;
            return std::pair<long, long>(lo, hi);
        };
        for (long nc = 0; nc < N * C; ++nc) {
            Real* gx = x->grad.ptr() + nc * H * W;
            const Real* pg = o.grad.ptr() + nc * oh * ow;
            for (long oy = 0; oy < oh; ++oy) {
                auto [y0, y1] = win(oy, H, oh);
                for (long ox = 0; ox < ow; ++ox) {
                    auto [x0, x1] = win(ox, W, ow);
                    const Real g = pg[oy * ow + ox] / static_cast<Real>((y1 - y0) * (x1 - x0));
                    for (long y = y0; y < y1; ++y)
                        for (long xq = x0; xq < x1; ++xq) gx[y * W + xq] += g;
                }
            }
        }
    });
}

} // namespace revid::nn
