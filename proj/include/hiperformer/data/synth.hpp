#pragma once

#include <random>

#include "hiperformer/core/param.hpp"
#include "hiperformer/train/loss.hpp"

namespace hipf {

// Desk-scale stand-in for a segmentation dataset: images contain 1..C-1
// colored geometric shapes (disk, ring, rectangle, thin curve) over a dark
// background, with Gaussian pixel noise. Labels are exact by construction.
struct SynthSpec {
    i64 extent = 64;
    i64 num_classes = 4;
    double noise_std = 0.04;
    double contrast_lo = 0.9;
    double contrast_hi = 1.1;
    i64 train_count = 128;
    i64 test_count = 32;
    std::uint64_t seed = 7;

    void validate() const {
        require(num_classes >= 2, "SynthSpec: need at least 2 classes");
        require(extent >= 16, "SynthSpec: extent too small for shapes");
        require(contrast_hi >= contrast_lo && contrast_lo > 0, "SynthSpec: bad contrast range");
        require(noise_std >= 0, "SynthSpec: negative noise");
    }
};

struct SynthSample {
    std::vector<float> image;  // [3, H, W], values in [0, 1]
    LabelMap label;
};

struct SynthDataset {
    std::vector<SynthSample> train, test;
};

namespace detail {

// Fixed per-class RGB tints, cycled for higher class counts.
inline std::array<double, 3> class_tint(int c) {
    static const std::array<std::array<double, 3>, 6> tints = {{{1.00, 0.55, 0.45},
                                                                {0.45, 1.00, 0.55},
                                                                {0.50, 0.60, 1.00},
                                                                {1.00, 0.95, 0.40},
                                                                {0.95, 0.45, 1.00},
                                                                {0.45, 1.00, 1.00}}};
    return tints[static_cast<std::size_t>((c - 1) % 6)];
}

inline void paint(SynthSample& s, i64 y, i64 x, int cls, double intensity) {
    i64 H = s.label.height, W = s.label.width;
    if (y < 0 || y >= H || x < 0 || x >= W) return;
    s.label.at(y, x) = cls;
    auto tint = class_tint(cls);
    for (i64 ch = 0; ch < 3; ++ch)
        s.image[static_cast<std::size_t>(ch * H * W + y * W + x)] =
            static_cast<float>(intensity * tint[static_cast<std::size_t>(ch)]);
}

}  // namespace detail

inline SynthSample generate_sample(const SynthSpec& spec, Rng& rng) {
    i64 E = spec.extent;
    SynthSample s;
    s.label = LabelMap(E, E);
    s.image.assign(static_cast<std::size_t>(3 * E * E), 0.0f);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double bg = 0.05 + 0.10 * unit(rng);
    for (auto& v : s.image) v = static_cast<float>(bg);

    int fg_classes = static_cast<int>(spec.num_classes) - 1;
    std::vector<int> order(static_cast<std::size_t>(fg_classes));
    for (int i = 0; i < fg_classes; ++i) order[static_cast<std::size_t>(i)] = i + 1;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> count_dist(1, fg_classes);
    int n_shapes = count_dist(rng);

    for (int si = 0; si < n_shapes; ++si) {
        int cls = order[static_cast<std::size_t>(si)];
        // intensity centers spaced over [0.35, 0.9], jittered by the contrast range
        double base = fg_classes == 1 ? 0.6
                                      : 0.35 + 0.55 * static_cast<double>(cls - 1) /
                                                   static_cast<double>(fg_classes - 1);
        std::uniform_real_distribution<double> contrast(spec.contrast_lo, spec.contrast_hi);
        double intensity = std::min(1.0, base * contrast(rng));
        int kind = (cls - 1) % 4;
        std::uniform_int_distribution<i64> pos(E / 6, E - E / 6 - 1);
        i64 cy = pos(rng), cx = pos(rng);
        if (kind == 0) {  // disk
            std::uniform_int_distribution<i64> rad(E / 12, E / 5);
            i64 r = rad(rng);
            for (i64 y = cy - r; y <= cy + r; ++y)
                for (i64 x = cx - r; x <= cx + r; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
                        detail::paint(s, y, x, cls, intensity);
        } else if (kind == 1) {  // ring
            std::uniform_int_distribution<i64> rad(E / 8, E / 4);
            i64 ro = rad(rng), ri = std::max<i64>(1, ro - std::max<i64>(2, E / 16));
            for (i64 y = cy - ro; y <= cy + ro; ++y)
                for (i64 x = cx - ro; x <= cx + ro; ++x) {
                    i64 d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    if (d2 <= ro * ro && d2 >= ri * ri) detail::paint(s, y, x, cls, intensity);
                }
        } else if (kind == 2) {  // rectangle
            std::uniform_int_distribution<i64> half(E / 12, E / 5);
            i64 hy = half(rng), hx = half(rng);
            for (i64 y = cy - hy; y <= cy + hy; ++y)
                for (i64 x = cx - hx; x <= cx + hx; ++x) detail::paint(s, y, x, cls, intensity);
        } else {  // thin quadratic curve
            std::uniform_int_distribution<i64> anywhere(2, E - 3);
            i64 x0 = anywhere(rng), y0 = anywhere(rng);
            i64 x1 = anywhere(rng), y1 = anywhere(rng);
            i64 xm = anywhere(rng), ym = anywhere(rng);
            const int steps = static_cast<int>(3 * E);
            for (int t = 0; t <= steps; ++t) {
                double u = static_cast<double>(t) / steps;
                double x = (1 - u) * (1 - u) * x0 + 2 * (1 - u) * u * xm + u * u * x1;
                double y = (1 - u) * (1 - u) * y0 + 2 * (1 - u) * u * ym + u * u * y1;
                i64 iy = static_cast<i64>(std::lround(y)), ix = static_cast<i64>(std::lround(x));
                detail::paint(s, iy, ix, cls, intensity);
                detail::paint(s, iy, ix + 1, cls, intensity);
            }
        }
    }

    if (spec.noise_std > 0) {
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        for (auto& v : s.image)
            v = static_cast<float>(std::clamp(static_cast<double>(v) + noise(rng), 0.0, 1.0));
    }
    return s;
}

inline SynthDataset generate_dataset(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SynthDataset ds;
    for (i64 i = 0; i < spec.train_count; ++i) ds.train.push_back(generate_sample(spec, rng));
    for (i64 i = 0; i < spec.test_count; ++i) ds.test.push_back(generate_sample(spec, rng));
    return ds;
}

// ---- augmentation (flips and right-angle rotations, label-consistent) ----

namespace detail {

template <typename Getter, typename Setter>
void remap_square(i64 E, Getter get, Setter set, int rot90, bool hflip, bool vflip) {
    for (i64 y = 0; y < E; ++y)
        for (i64 x = 0; x < E; ++x) {
            i64 sy = y, sx = x;
            if (hflip) sx = E - 1 - sx;
            if (vflip) sy = E - 1 - sy;
            for (int r = 0; r < rot90; ++r) {
                i64 t = sy;
                sy = E - 1 - sx;  // inverse of a 90-degree CCW rotation
                sx = t;
            }
            set(y, x, get(sy, sx));
        }
}

}  // namespace detail

inline SynthSample augment(const SynthSample& in, Rng& rng, bool flips, bool rotations) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool hflip = flips && unit(rng) < 0.5;
    bool vflip = flips && unit(rng) < 0.5;
    int rot90 = 0;
    if (rotations && unit(rng) < 0.5) {
        std::uniform_int_distribution<int> pick(1, 3);
        rot90 = pick(rng);
    }
    if (!hflip && !vflip && rot90 == 0) return in;
    i64 E = in.label.height;
    SynthSample out;
    out.label = LabelMap(E, E);
    out.image.assign(in.image.size(), 0.0f);
    for (i64 ch = 0; ch < 3; ++ch) {
        const float* src = in.image.data() + ch * E * E;
        float* dst = out.image.data() + ch * E * E;
        detail::remap_square(
            E, [&](i64 y, i64 x) { return src[y * E + x]; },
            [&](i64 y, i64 x, float v) { dst[y * E + x] = v; }, rot90, hflip, vflip);
    }
    detail::remap_square(
        E, [&](i64 y, i64 x) { return in.label.at(y, x); },
        [&](i64 y, i64 x, int v) { out.label.at(y, x) = v; }, rot90, hflip, vflip);
    return out;
}

// Packs samples into a [N,3,H,W] input tensor plus the label list.
template <typename T>
std::pair<Tensor<T>, std::vector<LabelMap>> make_batch(const std::vector<const SynthSample*>& samples) {
    require(!samples.empty(), "make_batch: empty batch");
    i64 N = static_cast<i64>(samples.size());
    i64 E = samples[0]->label.height;
    Tensor<T> images = Tensor<T>::zeros({N, 3, E, E});
    std::vector<LabelMap> labels;
    for (i64 n = 0; n < N; ++n) {
        const auto& s = *samples[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < s.image.size(); ++i)
            images.data()[static_cast<std::size_t>(n * 3 * E * E) + i] = static_cast<T>(s.image[i]);
        labels.push_back(s.label);
    }
    return {images, labels};
}

}  // namespace hipf
