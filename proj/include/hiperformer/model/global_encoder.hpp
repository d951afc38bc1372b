#pragma once

#include <array>

#include "hiperformer/model/config.hpp"
#include "hiperformer/model/layers.hpp"

namespace hipf {

// [N,C,H,W] -> [N*(H/M)*(W/M), C, M, M], windows in row-major window order.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, i64 M) {
    i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(H % M == 0 && W % M == 0, "window_partition: extent not divisible by window");
    i64 nh = H / M, nw = W / M;
    Tensor<T> v = reshape(x, {N, C, nh, M, nw, M});
    v = permute(v, {0, 2, 4, 1, 3, 5});
    return reshape(v, {N * nh * nw, C, M, M});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, i64 M, i64 N, i64 H, i64 W) {
    i64 nh = H / M, nw = W / M, C = windows.dim(1);
    Tensor<T> v = reshape(windows, {N, nh, nw, C, M, M});
    v = permute(v, {0, 3, 1, 4, 2, 5});
    return reshape(v, {N, C, H, W});
}

// Relative-position lookup indices for an M x M window, length (M^2)^2.
inline std::vector<i64> relative_position_index(i64 M) {
    i64 Tn = M * M;
    std::vector<i64> idx(static_cast<std::size_t>(Tn * Tn));
    for (i64 i = 0; i < Tn; ++i)
        for (i64 j = 0; j < Tn; ++j) {
            i64 dy = (i / M) - (j / M) + (M - 1);
            i64 dx = (i % M) - (j % M) + (M - 1);
            idx[static_cast<std::size_t>(i * Tn + j)] = dy * (2 * M - 1) + dx;
        }
    return idx;
}

// Cross-region attention mask for the shifted partition, shape [nW, T, T].
// Entries are 0 within a pre-shift region and a large negative across regions.
template <typename T>
Tensor<T> shifted_window_mask(i64 H, i64 W, i64 M, i64 shift) {
    // Region ids follow the standard 3x3 slicing of the shifted map.
    std::vector<i64> ids(static_cast<std::size_t>(H * W));
    auto band = [&](i64 v, i64 extent) {
        if (v < extent - M) return 0;
        if (v < extent - shift) return 1;
        return 2;
    };
    for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
            ids[static_cast<std::size_t>(y * W + x)] = band(y, H) * 3 + band(x, W);
    // Cyclic shift, then read off per-window token ids.
    i64 nh = H / M, nw = W / M, Tn = M * M;
    Tensor<T> mask = Tensor<T>::zeros({nh * nw, Tn, Tn});
    auto& mv = mask.data();
    auto wrap = [](i64 v, i64 n) { return ((v % n) + n) % n; };
    for (i64 wy = 0; wy < nh; ++wy)
        for (i64 wx = 0; wx < nw; ++wx) {
            std::vector<i64> wid(static_cast<std::size_t>(Tn));
            for (i64 my = 0; my < M; ++my)
                for (i64 mx = 0; mx < M; ++mx) {
                    i64 sy = wrap(wy * M + my + shift, H);
                    i64 sx = wrap(wx * M + mx + shift, W);
                    wid[static_cast<std::size_t>(my * M + mx)] = ids[static_cast<std::size_t>(sy * W + sx)];
                }
            T* base = mv.data() + (wy * nw + wx) * Tn * Tn;
            for (i64 i = 0; i < Tn; ++i)
                for (i64 j = 0; j < Tn; ++j)
                    base[i * Tn + j] = (wid[static_cast<std::size_t>(i)] == wid[static_cast<std::size_t>(j)])
                                           ? T(0)
                                           : T(-1e9);
        }
    return mask;
}

// Multi-head self-attention inside non-overlapping windows.
template <typename T>
struct WindowAttention {
    LinearLayer<T> qkv, proj;
    Tensor<T> rel_bias_table;  // [(2M-1)^2, heads], optional
    std::vector<i64> rel_index;
    i64 channels = 0, num_heads = 0, window = 0;
    bool use_rel_bias = true;

    WindowAttention() = default;

    WindowAttention(ParamStore<T>& ps, const std::string& name, i64 C, i64 heads, i64 M,
                    bool qkv_bias, bool rel_bias) {
        require(C % heads == 0, "WindowAttention: heads must divide channels");
        channels = C;
        num_heads = heads;
        window = M;
        use_rel_bias = rel_bias;
        qkv = LinearLayer<T>(ps, name + ".qkv", C, 3 * C, qkv_bias);
        proj = LinearLayer<T>(ps, name + ".proj", C, C);
        if (rel_bias) {
            rel_bias_table = ps.param(name + ".rel_bias", {(2 * M - 1) * (2 * M - 1), heads});
            init_trunc_normal(rel_bias_table, ps.rng(), T(0.02));
            rel_index = relative_position_index(M);
        }
    }

    // Lookup indices into the construction-size bias table for an effective
    // window of M <= window (small maps clamp the window at forward time).
    std::vector<i64> effective_rel_index(i64 M) const {
        if (M == window) return rel_index;
        i64 Tn = M * M;
        std::vector<i64> idx(static_cast<std::size_t>(Tn * Tn));
        for (i64 i = 0; i < Tn; ++i)
            for (i64 j = 0; j < Tn; ++j) {
                i64 dy = (i / M) - (j / M) + (window - 1);
                i64 dx = (i % M) - (j % M) + (window - 1);
                idx[static_cast<std::size_t>(i * Tn + j)] = dy * (2 * window - 1) + dx;
            }
        return idx;
    }

    // windows: [B, C, M, M]; mask (optional): [nW, T, T] with B divisible by nW.
    Tensor<T> forward(const Tensor<T>& windows, const Tensor<T>& mask) const {
        i64 B = windows.dim(0), M = windows.dim(2);
        i64 Tn = M * M, h = num_heads, dh = channels / h;
        Tensor<T> tok = map_to_tokens(windows);  // [B, T, C]
        Tensor<T> qkv3 = qkv.forward(tok);       // [B, T, 3C]
        qkv3 = permute(reshape(qkv3, {B, Tn, 3, h, dh}), {2, 0, 3, 1, 4});  // [3,B,h,T,dh]
        Tensor<T> q = reshape(slice(qkv3, 0, 0, 1), {B * h, Tn, dh});
        Tensor<T> k = reshape(slice(qkv3, 0, 1, 1), {B * h, Tn, dh});
        Tensor<T> v = reshape(slice(qkv3, 0, 2, 1), {B * h, Tn, dh});
        q = mul_scalar(q, T(1) / std::sqrt(T(dh)));
        Tensor<T> attn = matmul(q, permute(k, {0, 2, 1}));  // [B*h, T, T]
        if (use_rel_bias) {
            Tensor<T> bias = gather_rows(rel_bias_table, effective_rel_index(M));  // [T*T, h]
            bias = permute(reshape(bias, {Tn, Tn, h}), {2, 0, 1});         // [h, T, T]
            bias = reshape(repeat_leading(bias, B), {B * h, Tn, Tn});
            attn = add(attn, bias);
        }
        if (mask.defined()) {
            i64 nW = mask.dim(0);
            require(B % nW == 0, "WindowAttention: mask window count mismatch");
            // Expand [nW,T,T] to [B*h,T,T]; window index cycles fastest over B.
            Tensor<T> m = Tensor<T>::zeros({B * h, Tn, Tn});
            const auto& src = mask.data();
            auto& dst = m.data();
            for (i64 b = 0; b < B; ++b) {
                i64 w = b % nW;
                for (i64 hh = 0; hh < h; ++hh)
                    std::copy(src.data() + w * Tn * Tn, src.data() + (w + 1) * Tn * Tn,
                              dst.data() + (b * h + hh) * Tn * Tn);
            }
            attn = add(attn, m);
        }
        attn = softmax(attn, -1);
        Tensor<T> out = matmul(attn, v);                                   // [B*h, T, dh]
        out = reshape(permute(reshape(out, {B, h, Tn, dh}), {0, 2, 1, 3}), {B, Tn, channels});
        out = proj.forward(out);
        return tokens_to_map(out, M, M);
    }

    // Exposes the post-softmax attention map for invariant tests.
    Tensor<T> attention_probs(const Tensor<T>& windows, const Tensor<T>& mask) const {
        i64 B = windows.dim(0), M = windows.dim(2);
        i64 Tn = M * M, h = num_heads, dh = channels / h;
        Tensor<T> tok = map_to_tokens(windows);
        Tensor<T> qkv3 = permute(reshape(qkv.forward(tok), {B, Tn, 3, h, dh}), {2, 0, 3, 1, 4});
        Tensor<T> q = mul_scalar(reshape(slice(qkv3, 0, 0, 1), {B * h, Tn, dh}), T(1) / std::sqrt(T(dh)));
        Tensor<T> k = reshape(slice(qkv3, 0, 1, 1), {B * h, Tn, dh});
        Tensor<T> attn = matmul(q, permute(k, {0, 2, 1}));
        if (use_rel_bias) {
            Tensor<T> bias = gather_rows(rel_bias_table, effective_rel_index(M));
            bias = reshape(repeat_leading(permute(reshape(bias, {Tn, Tn, h}), {2, 0, 1}), B), {B * h, Tn, Tn});
            attn = add(attn, bias);
        }
        if (mask.defined()) {
            i64 nW = mask.dim(0);
            Tensor<T> m = Tensor<T>::zeros({B * h, Tn, Tn});
            const auto& src = mask.data();
            auto& dst = m.data();
            for (i64 b = 0; b < B; ++b)
                for (i64 hh = 0; hh < h; ++hh)
                    std::copy(src.data() + (b % nW) * Tn * Tn, src.data() + ((b % nW) + 1) * Tn * Tn,
                              dst.data() + (b * h + hh) * Tn * Tn);
            attn = add(attn, m);
        }
        return softmax(attn, -1);
    }
};

// One Swin block: LN -> (S)W-MSA -> residual -> LN -> MLP -> residual.
template <typename T>
struct SwinBlock {
    LayerNormLayer<T> ln1, ln2;
    WindowAttention<T> attn;
    LinearLayer<T> mlp_in, mlp_out;
    i64 window = 0;
    bool shifted = false;

    SwinBlock() = default;

    SwinBlock(ParamStore<T>& ps, const std::string& name, i64 C, i64 heads, i64 M, bool shift,
              i64 mlp_ratio, bool qkv_bias, bool rel_bias)
        : window(M), shifted(shift) {
        ln1 = LayerNormLayer<T>(ps, name + ".ln1", C);
        ln2 = LayerNormLayer<T>(ps, name + ".ln2", C);
        attn = WindowAttention<T>(ps, name + ".attn", C, heads, M, qkv_bias, rel_bias);
        mlp_in = LinearLayer<T>(ps, name + ".mlp_in", C, mlp_ratio * C);
        mlp_out = LinearLayer<T>(ps, name + ".mlp_out", mlp_ratio * C, C);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        i64 N = x.dim(0), H = x.dim(2), W = x.dim(3);
        // Largest window not exceeding the configured size that tiles the map
        // exactly (small or non-multiple maps shrink the window).
        i64 M = std::min(window, std::min(H, W));
        while (H % M != 0 || W % M != 0) --M;
        i64 shift = (shifted && H > M && W > M && M > 1) ? M / 2 : 0;

        Tensor<T> t = tokens_to_map(ln1.forward(map_to_tokens(x)), H, W);
        if (shift > 0) t = roll2d(t, -shift, -shift);
        Tensor<T> win = window_partition(t, M);
        Tensor<T> mask;
        if (shift > 0) mask = shifted_window_mask<T>(H, W, M, shift);
        Tensor<T> a = attn.forward(win, mask);
        a = window_reverse(a, M, N, H, W);
        if (shift > 0) a = roll2d(a, shift, shift);
        Tensor<T> y = add(x, a);

        Tensor<T> m = ln2.forward(map_to_tokens(y));
        m = mlp_out.forward(gelu(mlp_in.forward(m)));
        return add(y, tokens_to_map(m, H, W));
    }
};

// Patch merging: 2x2 neighborhood concat + LN + linear reduction.
template <typename T>
struct PatchMerge {
    LayerNormLayer<T> norm;
    LinearLayer<T> reduce;

    PatchMerge() = default;

    PatchMerge(ParamStore<T>& ps, const std::string& name, i64 in_ch, i64 out_ch) {
        norm = LayerNormLayer<T>(ps, name + ".norm", 4 * in_ch);
        reduce = LinearLayer<T>(ps, name + ".reduce", 4 * in_ch, out_ch, /*with_bias=*/false);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        i64 H = x.dim(2), W = x.dim(3);
        Tensor<T> d = space_to_depth2(x);
        Tensor<T> t = reduce.forward(norm.forward(map_to_tokens(d)));
        return tokens_to_map(t, H / 2, W / 2);
    }
};

// Global branch: patch embedding plus four stages of paired Swin blocks, with
// patch merging between stages. Stage i output is spatially aligned with the
// local branch's stage i.
template <typename T>
struct GlobalEncoder {
    Conv2dLayer<T> patch_proj;
    LayerNormLayer<T> embed_norm;
    std::array<std::vector<SwinBlock<T>>, 4> stages;
    std::array<PatchMerge<T>, 3> merges;
    i64 patch_size = 4;

    GlobalEncoder() = default;

    GlobalEncoder(ParamStore<T>& ps, const std::string& name, const ModelConfig& cfg) {
        patch_size = cfg.patch_size;
        ConvSpec embed_spec{.stride = cfg.patch_size, .pad = 0, .dilation = 1, .groups = 1};
        patch_proj = Conv2dLayer<T>(ps, name + ".patch_proj", cfg.in_channels, cfg.widths[0],
                                    cfg.patch_size, embed_spec);
        embed_norm = LayerNormLayer<T>(ps, name + ".embed_norm", cfg.widths[0]);
        for (int s = 0; s < 4; ++s) {
            auto su = static_cast<std::size_t>(s);
            for (i64 b = 0; b < cfg.global_depths[su]; ++b) {
                stages[su].emplace_back(ps, name + ".s" + std::to_string(s) + ".b" + std::to_string(b),
                                        cfg.widths[su], cfg.heads[su], cfg.window,
                                        /*shift=*/b % 2 == 1, cfg.mlp_ratio, cfg.qkv_bias,
                                        cfg.rel_pos_bias);
            }
            if (s < 3)
                merges[su] = PatchMerge<T>(ps, name + ".merge" + std::to_string(s), cfg.widths[su],
                                           cfg.widths[su + 1]);
        }
    }

    Tensor<T> patch_embed(const Tensor<T>& image) const {
        require(image.dim(2) % patch_size == 0 && image.dim(3) % patch_size == 0,
                "GlobalEncoder: extent not divisible by patch size");
        Tensor<T> x = patch_proj.forward(image);
        i64 H = x.dim(2), W = x.dim(3);
        return tokens_to_map(embed_norm.forward(map_to_tokens(x)), H, W);
    }

    std::array<Tensor<T>, 4> forward(const Tensor<T>& image) const {
        Tensor<T> x = patch_embed(image);
        std::array<Tensor<T>, 4> outs;
        for (int s = 0; s < 4; ++s) {
            auto su = static_cast<std::size_t>(s);
            for (const auto& blk : stages[su]) x = blk.forward(x);
            outs[su] = x;
            if (s < 3) x = merges[su].forward(x);
        }
        return outs;
    }
};

}  // namespace hipf
