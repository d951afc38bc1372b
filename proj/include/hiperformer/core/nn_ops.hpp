#pragma once

#include "hiperformer/core/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hipf {

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, i64 m, i64 k, i64 n) {
#pragma omp parallel for if (m * n * k > 65536) schedule(static)
    for (i64 i = 0; i < m; ++i) {
        T* crow = C + i * n;
        const T* arow = A + i * k;
        for (i64 p = 0; p < k; ++p) {
            T a = arow[p];
            const T* brow = B + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, i64 m, i64 k, i64 n) {
#pragma omp parallel for if (m * n * k > 65536) schedule(static)
    for (i64 i = 0; i < m; ++i) {
        const T* arow = A + i * k;
        T* crow = C + i * n;
        for (i64 j = 0; j < n; ++j) {
            const T* brow = B + j * k;
            T acc = T(0);
            for (i64 p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, i64 m, i64 k, i64 n) {
#pragma omp parallel for if (m * n * k > 65536) schedule(static)
    for (i64 i = 0; i < m; ++i) {
        T* crow = C + i * n;
        for (i64 p = 0; p < k; ++p) {
            T a = A[p * m + i];
            const T* brow = B + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

}  // namespace detail

// Batched matrix product. Both operands must share leading (batch) dims,
// or one of them may be unbatched (rank 2) and is then broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() >= 2 && b.rank() >= 2, "matmul: rank must be >= 2");
    i64 m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
    i64 k2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    require(k == k2, "matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(k2));
    i64 abatch = a.size() / (m * k), bbatch = b.size() / (k * n);
    require(abatch == bbatch || abatch == 1 || bbatch == 1, "matmul: batch dims incompatible");
    i64 batch = std::max(abatch, bbatch);

    Shape os;
    const Tensor<T>& lead = (a.rank() >= b.rank()) ? a : b;
    for (int i = 0; i < lead.rank() - 2; ++i) os.push_back(lead.dim(i));
    os.push_back(m);
    os.push_back(n);

    Tensor<T> out = Tensor<T>::zeros(os);
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (i64 t = 0; t < batch; ++t)
        detail::gemm_nn(av.data() + (abatch == 1 ? 0 : t * m * k),
                        bv.data() + (bbatch == 1 ? 0 : t * k * n),
                        ov.data() + t * m * n, m, k, n);
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record(out, {a, b}, [an, bn, on, m, k, n, batch, abatch, bbatch] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (i64 t = 0; t < batch; ++t)
                detail::gemm_nt(on->grad.data() + t * m * n,
                                bn->data.data() + (bbatch == 1 ? 0 : t * k * n),
                                an->grad.data() + (abatch == 1 ? 0 : t * m * k), m, n, k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (i64 t = 0; t < batch; ++t)
                detail::gemm_tn(an->data.data() + (abatch == 1 ? 0 : t * m * k),
                                on->grad.data() + t * m * n,
                                bn->grad.data() + (bbatch == 1 ? 0 : t * k * n), k, m, n);
        }
    });
    return out;
}

// x[..., in] * W[out, in]^T + b[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require(w.rank() == 2, "linear: weight must be [out,in]");
    i64 in = w.dim(1), outf = w.dim(0);
    require(x.dim(x.rank() - 1) == in, "linear: feature dim mismatch");
    i64 rows = x.size() / in;
    Shape os = x.shape();
    os.back() = outf;
    Tensor<T> out = Tensor<T>::zeros(os);
    const auto &xv = x.data(), &wv = w.data();
    auto& ov = out.data();
    detail::gemm_nt(xv.data(), wv.data(), ov.data(), rows, in, outf);
    bool has_bias = b.defined();
    if (has_bias) {
        require(b.rank() == 1 && b.dim(0) == outf, "linear: bias shape");
        const auto& bv = b.data();
        for (i64 r = 0; r < rows; ++r)
            for (i64 j = 0; j < outf; ++j) ov[static_cast<std::size_t>(r * outf + j)] += bv[static_cast<std::size_t>(j)];
    }
    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bnode = has_bias ? b.node() : nullptr;
    std::vector<Tensor<T>> parents{x, w};
    if (has_bias) parents.push_back(b);
    detail::record(out, parents, [xn, wn, bnode, on, rows, in, outf] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            detail::gemm_nn(on->grad.data(), wn->data.data(), xn->grad.data(), rows, outf, in);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            detail::gemm_tn(on->grad.data(), xn->data.data(), wn->grad.data(), outf, rows, in);
        }
        if (bnode && bnode->requires_grad) {
            bnode->ensure_grad();
            for (i64 r = 0; r < rows; ++r)
                for (i64 j = 0; j < outf; ++j) bnode->grad[static_cast<std::size_t>(j)] += on->grad[static_cast<std::size_t>(r * outf + j)];
        }
    });
    return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w) {
    return linear(x, w, Tensor<T>{});
}

// ---- convolution ----

struct ConvSpec {
    i64 stride = 1;
    i64 pad = 0;
    i64 dilation = 1;
    i64 groups = 1;
};

inline i64 conv_out_extent(i64 in, i64 kernel, i64 stride, i64 pad, i64 dilation) {
    return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

namespace detail {

template <typename T>
void im2col(const T* im, i64 C, i64 H, i64 W, i64 kH, i64 kW, i64 stride, i64 pad, i64 dil,
            i64 oH, i64 oW, T* col) {
    for (i64 c = 0; c < C; ++c)
        for (i64 ky = 0; ky < kH; ++ky)
            for (i64 kx = 0; kx < kW; ++kx) {
                T* dst = col + ((c * kH + ky) * kW + kx) * oH * oW;
                const T* src = im + c * H * W;
                for (i64 oy = 0; oy < oH; ++oy) {
                    i64 iy = oy * stride - pad + ky * dil;
                    if (iy < 0 || iy >= H) {
                        for (i64 ox = 0; ox < oW; ++ox) *dst++ = T(0);
                        continue;
                    }
                    for (i64 ox = 0; ox < oW; ++ox) {
                        i64 ix = ox * stride - pad + kx * dil;
                        *dst++ = (ix >= 0 && ix < W) ? src[iy * W + ix] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_acc(const T* col, i64 C, i64 H, i64 W, i64 kH, i64 kW, i64 stride, i64 pad, i64 dil,
                i64 oH, i64 oW, T* im) {
    for (i64 c = 0; c < C; ++c)
        for (i64 ky = 0; ky < kH; ++ky)
            for (i64 kx = 0; kx < kW; ++kx) {
                const T* src = col + ((c * kH + ky) * kW + kx) * oH * oW;
                T* dst = im + c * H * W;
                for (i64 oy = 0; oy < oH; ++oy) {
                    i64 iy = oy * stride - pad + ky * dil;
                    if (iy < 0 || iy >= H) { src += oW; continue; }
                    for (i64 ox = 0; ox < oW; ++ox) {
                        i64 ix = ox * stride - pad + kx * dil;
                        if (ix >= 0 && ix < W) dst[iy * W + ix] += src[ox];
                    }
                    src += oW;
                }
            }
}

}  // namespace detail

// Cross-correlation with stride/padding/dilation/groups, im2col + GEMM.
// weight: [outC, inC/groups, kH, kW]; bias optional [outC].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvSpec& spec) {
    require(x.rank() == 4, "conv2d: input must be NCHW");
    require(weight.rank() == 4, "conv2d: weight must be [outC,inC/g,kH,kW]");
    require(spec.dilation >= 1 && spec.stride >= 1 && spec.groups >= 1, "conv2d: bad spec");
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    i64 outC = weight.dim(0), Cg = weight.dim(1), kH = weight.dim(2), kW = weight.dim(3);
    i64 g = spec.groups;
    require(C % g == 0 && outC % g == 0, "conv2d: channels not divisible by groups");
    require(Cg == C / g, "conv2d: weight in-channels " + std::to_string(Cg) + " vs input " + std::to_string(C / g));
    i64 oH = conv_out_extent(H, kH, spec.stride, spec.pad, spec.dilation);
    i64 oW = conv_out_extent(W, kW, spec.stride, spec.pad, spec.dilation);
    require(oH >= 1 && oW >= 1, "conv2d: non-positive output extent");
    i64 oCg = outC / g;
    i64 ck = Cg * kH * kW;

    Tensor<T> out = Tensor<T>::zeros({N, outC, oH, oW});
    const auto &xv = x.data(), &wv = weight.data();
    auto& ov = out.data();
    std::vector<T> col(static_cast<std::size_t>(ck * oH * oW));
    for (i64 n = 0; n < N; ++n)
        for (i64 gi = 0; gi < g; ++gi) {
            detail::im2col(xv.data() + (n * C + gi * Cg) * H * W, Cg, H, W, kH, kW,
                           spec.stride, spec.pad, spec.dilation, oH, oW, col.data());
            detail::gemm_nn(wv.data() + gi * oCg * ck, col.data(),
                            ov.data() + (n * outC + gi * oCg) * oH * oW, oCg, ck, oH * oW);
        }
    bool has_bias = bias.defined();
    if (has_bias) {
        require(bias.rank() == 1 && bias.dim(0) == outC, "conv2d: bias shape");
        const auto& bv = bias.data();
        for (i64 n = 0; n < N; ++n)
            for (i64 c = 0; c < outC; ++c) {
                T b = bv[static_cast<std::size_t>(c)];
                T* dst = ov.data() + (n * outC + c) * oH * oW;
                for (i64 i = 0; i < oH * oW; ++i) dst[i] += b;
            }
    }

    auto xn = x.node(), wn = weight.node(), on = out.node();
    auto bn = has_bias ? bias.node() : nullptr;
    std::vector<Tensor<T>> parents{x, weight};
    if (has_bias) parents.push_back(bias);
    ConvSpec sp = spec;
    detail::record(out, parents, [xn, wn, bn, on, sp, N, C, H, W, outC, Cg, kH, kW, oH, oW, g, oCg, ck] {
        std::vector<T> col(static_cast<std::size_t>(ck * oH * oW));
        bool need_x = xn->requires_grad, need_w = wn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_w) wn->ensure_grad();
        for (i64 n = 0; n < N; ++n)
            for (i64 gi = 0; gi < g; ++gi) {
                const T* dy = on->grad.data() + (n * outC + gi * oCg) * oH * oW;
                if (need_w) {
                    detail::im2col(xn->data.data() + (n * C + gi * Cg) * H * W, Cg, H, W, kH, kW,
                                   sp.stride, sp.pad, sp.dilation, oH, oW, col.data());
                    // dW[o, ck] += dY[o, :] . col[ck, :]
                    detail::gemm_nt(dy, col.data(), wn->grad.data() + gi * oCg * ck, oCg, oH * oW, ck);
                }
                if (need_x) {
                    std::fill(col.begin(), col.end(), T(0));
                    // dcol[ck, :] += W[o, ck]^T dY[o, :]
                    detail::gemm_tn(wn->data.data() + gi * oCg * ck, dy, col.data(), ck, oCg, oH * oW);
                    detail::col2im_acc(col.data(), Cg, H, W, kH, kW, sp.stride, sp.pad, sp.dilation,
                                       oH, oW, xn->grad.data() + (n * C + gi * Cg) * H * W);
                }
            }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            for (i64 n = 0; n < N; ++n)
                for (i64 c = 0; c < outC; ++c) {
                    const T* dy = on->grad.data() + (n * outC + c) * oH * oW;
                    T acc = T(0);
                    for (i64 i = 0; i < oH * oW; ++i) acc += dy[i];
                    bn->grad[static_cast<std::size_t>(c)] += acc;
                }
        }
    });
    return out;
}

// ---- pooling ----

enum class PoolKind { Max, Avg };

template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolKind kind, i64 kH, i64 kW, i64 stride) {
    require(x.rank() == 4, "pool2d: input must be NCHW");
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(kH <= H && kW <= W, "pool2d: window larger than input");
    i64 oH = (H - kH) / stride + 1, oW = (W - kW) / stride + 1;
    Tensor<T> out = Tensor<T>::zeros({N, C, oH, oW});
    const auto& xv = x.data();
    auto& ov = out.data();
    std::vector<i64> argmax;
    if (kind == PoolKind::Max) argmax.resize(static_cast<std::size_t>(out.size()));
    for (i64 nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        for (i64 oy = 0; oy < oH; ++oy)
            for (i64 ox = 0; ox < oW; ++ox) {
                i64 oidx = (nc * oH + oy) * oW + ox;
                if (kind == PoolKind::Max) {
                    i64 best = (oy * stride) * W + ox * stride;
                    T mv = src[best];
                    for (i64 ky = 0; ky < kH; ++ky)
                        for (i64 kx = 0; kx < kW; ++kx) {
                            i64 p = (oy * stride + ky) * W + ox * stride + kx;
                            if (src[p] > mv) { mv = src[p]; best = p; }
                        }
                    ov[static_cast<std::size_t>(oidx)] = mv;
                    argmax[static_cast<std::size_t>(oidx)] = nc * H * W + best;
                } else {
                    T acc = T(0);
                    for (i64 ky = 0; ky < kH; ++ky)
                        for (i64 kx = 0; kx < kW; ++kx)
                            acc += src[(oy * stride + ky) * W + ox * stride + kx];
                    ov[static_cast<std::size_t>(oidx)] = acc / T(kH * kW);
                }
            }
    }
    auto xn = x.node(), on = out.node();
    detail::record(out, {x}, [xn, on, kind, argmax, N, C, H, W, oH, oW, kH, kW, stride] {
        xn->ensure_grad();
        if (kind == PoolKind::Max) {
            for (std::size_t i = 0; i < on->grad.size(); ++i)
                xn->grad[static_cast<std::size_t>(argmax[i])] += on->grad[i];
        } else {
            T inv = T(1) / T(kH * kW);
            for (i64 nc = 0; nc < N * C; ++nc) {
                T* dst = xn->grad.data() + nc * H * W;
                for (i64 oy = 0; oy < oH; ++oy)
                    for (i64 ox = 0; ox < oW; ++ox) {
                        T g = on->grad[static_cast<std::size_t>((nc * oH + oy) * oW + ox)] * inv;
                        for (i64 ky = 0; ky < kH; ++ky)
                            for (i64 kx = 0; kx < kW; ++kx)
                                dst[(oy * stride + ky) * W + ox * stride + kx] += g;
                    }
            }
        }
    });
    return out;
}

// ---- resize ----

enum class ResizeMode { Nearest, Bilinear };

// Integer upscale. Bilinear samples at half-pixel centers (align_corners=false).
template <typename T>
Tensor<T> resize2d(const Tensor<T>& x, i64 scale, ResizeMode mode) {
    require(x.rank() == 4, "resize2d: input must be NCHW");
    require(scale >= 1, "resize2d: scale must be >= 1");
    if (scale == 1) return reshape(x, x.shape());
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    i64 oH = H * scale, oW = W * scale;
    // Precompute 1-D sample positions: (index, weight toward index+1).
    auto make_axis = [&](i64 in, i64 out) {
        std::vector<std::pair<i64, T>> m(static_cast<std::size_t>(out));
        for (i64 o = 0; o < out; ++o) {
            if (mode == ResizeMode::Nearest) {
                m[static_cast<std::size_t>(o)] = {std::min(o / scale, in - 1), T(0)};
            } else {
                T pos = (T(o) + T(0.5)) / T(scale) - T(0.5);
                pos = std::max(T(0), std::min(pos, T(in - 1)));
                i64 i0 = static_cast<i64>(std::floor(pos));
                i0 = std::min(i0, in - 1);
                T w = pos - T(i0);
                if (i0 == in - 1) w = T(0);
                m[static_cast<std::size_t>(o)] = {i0, w};
            }
        }
        return m;
    };
    auto ymap = make_axis(H, oH), xmap = make_axis(W, oW);
    Tensor<T> out = Tensor<T>::zeros({N, C, oH, oW});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (i64 nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        T* dst = ov.data() + nc * oH * oW;
        for (i64 oy = 0; oy < oH; ++oy) {
            auto [y0, wy] = ymap[static_cast<std::size_t>(oy)];
            i64 y1 = std::min(y0 + 1, H - 1);
            for (i64 ox = 0; ox < oW; ++ox) {
                auto [x0, wx] = xmap[static_cast<std::size_t>(ox)];
                i64 x1 = std::min(x0 + 1, W - 1);
                dst[oy * oW + ox] =
                    src[y0 * W + x0] * (T(1) - wy) * (T(1) - wx) + src[y0 * W + x1] * (T(1) - wy) * wx +
                    src[y1 * W + x0] * wy * (T(1) - wx) + src[y1 * W + x1] * wy * wx;
            }
        }
    }
    auto xn = x.node(), on = out.node();
    detail::record(out, {x}, [xn, on, ymap, xmap, N, C, H, W, oH, oW] {
        xn->ensure_grad();
        for (i64 nc = 0; nc < N * C; ++nc) {
            T* dst = xn->grad.data() + nc * H * W;
            const T* src = on->grad.data() + nc * oH * oW;
            for (i64 oy = 0; oy < oH; ++oy) {
                auto [y0, wy] = ymap[static_cast<std::size_t>(oy)];
                i64 y1 = std::min(y0 + 1, H - 1);
                for (i64 ox = 0; ox < oW; ++ox) {
                    auto [x0, wx] = xmap[static_cast<std::size_t>(ox)];
                    i64 x1 = std::min(x0 + 1, W - 1);
                    T g = src[oy * oW + ox];
                    dst[y0 * W + x0] += g * (T(1) - wy) * (T(1) - wx);
                    dst[y0 * W + x1] += g * (T(1) - wy) * wx;
                    dst[y1 * W + x0] += g * wy * (T(1) - wx);
                    dst[y1 * W + x1] += g * wy * wx;
                }
            }
        }
    });
    return out;
}

// ---- normalization ----

// Normalizes over the trailing feature axis; gamma/beta have that extent.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    i64 C = x.dim(x.rank() - 1);
    require(gamma.size() == C && beta.size() == C, "layer_norm: affine shape mismatch");
    i64 rows = x.size() / C;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const auto &xv = x.data(), &gv = gamma.data(), &bv = beta.data();
    auto& ov = out.data();
    std::vector<T> means(static_cast<std::size_t>(rows)), rstds(static_cast<std::size_t>(rows));
    for (i64 r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * C;
        T mean = T(0);
        for (i64 c = 0; c < C; ++c) mean += row[c];
        mean /= T(C);
        T var = T(0);
        for (i64 c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= T(C);
        T rstd = T(1) / std::sqrt(var + eps);
        means[static_cast<std::size_t>(r)] = mean;
        rstds[static_cast<std::size_t>(r)] = rstd;
        T* orow = ov.data() + r * C;
        for (i64 c = 0; c < C; ++c)
            orow[c] = (row[c] - mean) * rstd * gv[static_cast<std::size_t>(c)] + bv[static_cast<std::size_t>(c)];
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    detail::record(out, {x, gamma, beta}, [xn, gn, bn, on, rows, C, means, rstds] {
        bool nx = xn->requires_grad, ng = gn->requires_grad, nb = bn->requires_grad;
        if (nx) xn->ensure_grad();
        if (ng) gn->ensure_grad();
        if (nb) bn->ensure_grad();
        for (i64 r = 0; r < rows; ++r) {
            const T* row = xn->data.data() + r * C;
            const T* dy = on->grad.data() + r * C;
            T mean = means[static_cast<std::size_t>(r)], rstd = rstds[static_cast<std::size_t>(r)];
            T sum_dyg = T(0), sum_dygx = T(0);
            for (i64 c = 0; c < C; ++c) {
                T xhat = (row[c] - mean) * rstd;
                T dyg = dy[c] * gn->data[static_cast<std::size_t>(c)];
                sum_dyg += dyg;
                sum_dygx += dyg * xhat;
                if (ng) gn->grad[static_cast<std::size_t>(c)] += dy[c] * xhat;
                if (nb) bn->grad[static_cast<std::size_t>(c)] += dy[c];
            }
            if (nx) {
                T* dx = xn->grad.data() + r * C;
                for (i64 c = 0; c < C; ++c) {
                    T xhat = (row[c] - mean) * rstd;
                    T dyg = dy[c] * gn->data[static_cast<std::size_t>(c)];
                    dx[c] += rstd * (dyg - sum_dyg / T(C) - xhat * sum_dygx / T(C));
                }
            }
        }
    });
    return out;
}

// Per-channel batch norm on NCHW. In training mode batch statistics are used
// and running stats updated in place (running buffers stay outside the graph).
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum, T eps) {
    require(x.rank() == 4, "batch_norm: input must be NCHW");
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(N >= 1, "batch_norm: empty batch");
    i64 per_ch = N * H * W;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    std::vector<T> means(static_cast<std::size_t>(C)), rstds(static_cast<std::size_t>(C));
    for (i64 c = 0; c < C; ++c) {
        T mean, var;
        if (training) {
            T acc = T(0);
            for (i64 n = 0; n < N; ++n) {
                const T* src = xv.data() + (n * C + c) * H * W;
                for (i64 i = 0; i < H * W; ++i) acc += src[i];
            }
            mean = acc / T(per_ch);
            T vacc = T(0);
            for (i64 n = 0; n < N; ++n) {
                const T* src = xv.data() + (n * C + c) * H * W;
                for (i64 i = 0; i < H * W; ++i) vacc += (src[i] - mean) * (src[i] - mean);
            }
            var = vacc / T(per_ch);
            auto cu = static_cast<std::size_t>(c);
            running_mean.data()[cu] = (T(1) - momentum) * running_mean.data()[cu] + momentum * mean;
            // unbiased variance in the running estimate
            T unbiased = per_ch > 1 ? vacc / T(per_ch - 1) : var;
            running_var.data()[cu] = (T(1) - momentum) * running_var.data()[cu] + momentum * unbiased;
        } else {
            mean = running_mean.data()[static_cast<std::size_t>(c)];
            var = running_var.data()[static_cast<std::size_t>(c)];
        }
        T rstd = T(1) / std::sqrt(var + eps);
        means[static_cast<std::size_t>(c)] = mean;
        rstds[static_cast<std::size_t>(c)] = rstd;
        T g = gamma.data()[static_cast<std::size_t>(c)], b = beta.data()[static_cast<std::size_t>(c)];
        for (i64 n = 0; n < N; ++n) {
            const T* src = xv.data() + (n * C + c) * H * W;
            T* dst = ov.data() + (n * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) dst[i] = (src[i] - mean) * rstd * g + b;
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    detail::record(out, {x, gamma, beta}, [xn, gn, bn, on, N, C, H, W, per_ch, means, rstds, training] {
        bool nx = xn->requires_grad, ng = gn->requires_grad, nb = bn->requires_grad;
        if (nx) xn->ensure_grad();
        if (ng) gn->ensure_grad();
        if (nb) bn->ensure_grad();
        for (i64 c = 0; c < C; ++c) {
            auto cu = static_cast<std::size_t>(c);
            T mean = means[cu], rstd = rstds[cu], g = gn->data[cu];
            T sum_dy = T(0), sum_dyx = T(0);
            for (i64 n = 0; n < N; ++n) {
                const T* src = xn->data.data() + (n * C + c) * H * W;
                const T* dy = on->grad.data() + (n * C + c) * H * W;
                for (i64 i = 0; i < H * W; ++i) {
                    sum_dy += dy[i];
                    sum_dyx += dy[i] * (src[i] - mean) * rstd;
                }
            }
            if (ng) gn->grad[cu] += sum_dyx;
            if (nb) bn->grad[cu] += sum_dy;
            if (nx) {
                for (i64 n = 0; n < N; ++n) {
                    const T* src = xn->data.data() + (n * C + c) * H * W;
                    const T* dy = on->grad.data() + (n * C + c) * H * W;
                    T* dx = xn->grad.data() + (n * C + c) * H * W;
                    for (i64 i = 0; i < H * W; ++i) {
                        T xhat = (src[i] - mean) * rstd;
                        if (training)
                            dx[i] += g * rstd * (dy[i] - sum_dy / T(per_ch) - xhat * sum_dyx / T(per_ch));
                        else
                            dx[i] += g * rstd * dy[i];
                    }
                }
            }
        }
    });
    return out;
}

// x[N,C,H,W] * s[N,C] broadcast over spatial positions.
template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& s) {
    require(x.rank() == 4 && s.rank() == 2, "mul_channel: expects NCHW and [N,C]");
    i64 N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    require(s.dim(0) == N && s.dim(1) == C, "mul_channel: scale shape mismatch");
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const auto &xv = x.data(), &sv = s.data();
    auto& ov = out.data();
    for (i64 nc = 0; nc < N * C; ++nc) {
        T w = sv[static_cast<std::size_t>(nc)];
        const T* src = xv.data() + nc * HW;
        T* dst = ov.data() + nc * HW;
        for (i64 i = 0; i < HW; ++i) dst[i] = src[i] * w;
    }
    auto xn = x.node(), sn = s.node(), on = out.node();
    detail::record(out, {x, s}, [xn, sn, on, N, C, HW] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (i64 nc = 0; nc < N * C; ++nc) {
                T w = sn->data[static_cast<std::size_t>(nc)];
                const T* src = on->grad.data() + nc * HW;
                T* dst = xn->grad.data() + nc * HW;
                for (i64 i = 0; i < HW; ++i) dst[i] += src[i] * w;
            }
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (i64 nc = 0; nc < N * C; ++nc) {
                const T* dy = on->grad.data() + nc * HW;
                const T* src = xn->data.data() + nc * HW;
                T acc = T(0);
                for (i64 i = 0; i < HW; ++i) acc += dy[i] * src[i];
                sn->grad[static_cast<std::size_t>(nc)] += acc;
            }
        }
    });
    return out;
}

}  // namespace hipf
