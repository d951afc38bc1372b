#pragma once

#include <limits>

#include "hiperformer/train/loss.hpp"

namespace hipf {

struct ConfusionCounts {
    i64 tp = 0, fp = 0, fn = 0;
};

inline std::vector<ConfusionCounts> confusion_counts(const LabelMap& pred, const LabelMap& gt,
                                                     int num_classes) {
    require(pred.height == gt.height && pred.width == gt.width, "confusion_counts: extent mismatch");
    std::vector<ConfusionCounts> counts(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
        int p = pred.ids[i], g = gt.ids[i];
        if (p == g) {
            counts[static_cast<std::size_t>(p)].tp++;
        } else {
            counts[static_cast<std::size_t>(p)].fp++;
            counts[static_cast<std::size_t>(g)].fn++;
        }
    }
    return counts;
}

// Both-empty classes score 1 by convention.
inline double dsc_from_counts(const ConfusionCounts& c) {
    i64 denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double recall_from_counts(const ConfusionCounts& c) {
    i64 denom = c.fn + c.tp;
    return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double iou_from_counts(const ConfusionCounts& c) {
    i64 denom = c.fp + c.fn + c.tp;
    return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double dsc(const LabelMap& pred, const LabelMap& gt, int class_id) {
    require(pred.height == gt.height && pred.width == gt.width, "dsc: extent mismatch");
    i64 inter = 0, px = 0, py = 0;
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
        bool in_gt = gt.ids[i] == class_id, in_pred = pred.ids[i] == class_id;
        inter += in_gt && in_pred;
        px += in_gt;
        py += in_pred;
    }
    return (px + py) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(px + py);
}

namespace detail {

// Foreground pixels with a four-neighbor outside the mask or on the border.
inline std::vector<std::pair<i64, i64>> boundary_pixels(const LabelMap& m, int class_id) {
    std::vector<std::pair<i64, i64>> pts;
    auto inside = [&](i64 y, i64 x) {
        return y >= 0 && y < m.height && x >= 0 && x < m.width && m.at(y, x) == class_id;
    };
    for (i64 y = 0; y < m.height; ++y)
        for (i64 x = 0; x < m.width; ++x) {
            if (m.at(y, x) != class_id) continue;
            if (y == 0 || y == m.height - 1 || x == 0 || x == m.width - 1 || !inside(y - 1, x) ||
                !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1))
                pts.emplace_back(y, x);
        }
    return pts;
}

inline std::vector<std::pair<i64, i64>> mask_pixels(const LabelMap& m, int class_id) {
    std::vector<std::pair<i64, i64>> pts;
    for (i64 y = 0; y < m.height; ++y)
        for (i64 x = 0; x < m.width; ++x)
            if (m.at(y, x) == class_id) pts.emplace_back(y, x);
    return pts;
}

// Felzenszwalb-Huttenlocher 1-D squared distance transform.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, i64 n) {
    std::vector<i64> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n + 1));
    i64 k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (i64 q = 1; q < n; ++q) {
        double s;
        while (true) {
            i64 p = v[static_cast<std::size_t>(k)];
            s = ((f[static_cast<std::size_t>(q)] + static_cast<double>(q * q)) -
                 (f[static_cast<std::size_t>(p)] + static_cast<double>(p * p))) /
                (2.0 * static_cast<double>(q - p));
            if (s > z[static_cast<std::size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k + 1)] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (i64 q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k + 1)] < static_cast<double>(q)) ++k;
        i64 p = v[static_cast<std::size_t>(k)];
        d[static_cast<std::size_t>(q)] =
            static_cast<double>((q - p) * (q - p)) + f[static_cast<std::size_t>(p)];
    }
}

// Exact squared Euclidean distance to the given point set, over the full grid.
// Empty columns carry a large finite sentinel rather than infinity so the
// lower-envelope intersections stay well defined (inf - inf is NaN).
inline std::vector<double> edt_grid(const std::vector<std::pair<i64, i64>>& pts, i64 H, i64 W) {
    const double inf = 1e15;
    std::vector<double> g(static_cast<std::size_t>(H * W), inf);
    for (auto [y, x] : pts) g[static_cast<std::size_t>(y * W + x)] = 0.0;
    // columns then rows
    std::vector<double> f(static_cast<std::size_t>(std::max(H, W)));
    std::vector<double> d(static_cast<std::size_t>(std::max(H, W)));
    for (i64 x = 0; x < W; ++x) {
        for (i64 y = 0; y < H; ++y) f[static_cast<std::size_t>(y)] = g[static_cast<std::size_t>(y * W + x)];
        edt_1d(f, d, H);
        for (i64 y = 0; y < H; ++y) g[static_cast<std::size_t>(y * W + x)] = d[static_cast<std::size_t>(y)];
    }
    for (i64 y = 0; y < H; ++y) {
        for (i64 x = 0; x < W; ++x) f[static_cast<std::size_t>(x)] = g[static_cast<std::size_t>(y * W + x)];
        edt_1d(f, d, W);
        for (i64 x = 0; x < W; ++x) g[static_cast<std::size_t>(y * W + x)] = d[static_cast<std::size_t>(x)];
    }
    return g;
}

// Linear-interpolation percentile of an unsorted sample.
inline double percentile(std::vector<double> values, double p) {
    require(!values.empty(), "percentile: empty sample");
    std::sort(values.begin(), values.end());
    double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(rank);
    double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

}  // namespace detail

// 95th-percentile symmetric Hausdorff distance between per-class surfaces.
// Distances come from an exact Euclidean distance transform; the percentile
// uses linear interpolation between order statistics. Conventions: both sets
// empty -> 0; exactly one empty -> image diagonal sentinel.
inline double hd95(const LabelMap& pred, const LabelMap& gt, int class_id,
                   bool boundary_only = true, double percentile_level = 95.0) {
    require(pred.height == gt.height && pred.width == gt.width, "hd95: extent mismatch");
    auto pa = boundary_only ? detail::boundary_pixels(pred, class_id) : detail::mask_pixels(pred, class_id);
    auto pb = boundary_only ? detail::boundary_pixels(gt, class_id) : detail::mask_pixels(gt, class_id);
    if (pa.empty() && pb.empty()) return 0.0;
    if (pa.empty() || pb.empty())
        return std::sqrt(static_cast<double>(gt.height * gt.height + gt.width * gt.width));
    i64 H = gt.height, W = gt.width;
    auto da = detail::edt_grid(pa, H, W);  // distance to pred surface
    auto db = detail::edt_grid(pb, H, W);  // distance to gt surface
    std::vector<double> a_to_b, b_to_a;
    for (auto [y, x] : pa) a_to_b.push_back(std::sqrt(db[static_cast<std::size_t>(y * W + x)]));
    for (auto [y, x] : pb) b_to_a.push_back(std::sqrt(da[static_cast<std::size_t>(y * W + x)]));
    return std::max(detail::percentile(std::move(a_to_b), percentile_level),
                    detail::percentile(std::move(b_to_a), percentile_level));
}

}  // namespace hipf
