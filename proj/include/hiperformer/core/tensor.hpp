#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace hipf {

using Shape = std::vector<std::int64_t>;
using i64 = std::int64_t;

inline i64 numel(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

// Thread-local switches. Gradient recording is disabled during evaluation;
// finiteness scanning can be turned off in hot loops once a model is trusted.
inline bool& grad_enabled() {
    thread_local bool v = true;
    return v;
}

inline bool& finite_checks_enabled() {
    thread_local bool v = true;
    return v;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

// Value-semantics handle over a shared autograd node. Copies alias the node,
// which is what parameter registration and graph recording want.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& s, bool requires_grad = false) {
        return filled(s, T(0), requires_grad);
    }

    static Tensor filled(const Shape& s, T value, bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<Node<T>>();
        t.node_->shape = s;
        t.node_->data.assign(static_cast<std::size_t>(numel(s)), value);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(const Shape& s, std::vector<T> values, bool requires_grad = false) {
        require(static_cast<i64>(values.size()) == numel(s),
                "from_data: " + std::to_string(values.size()) + " values for shape " + shape_str(s));
        Tensor t;
        t.node_ = std::make_shared<Node<T>>();
        t.node_->shape = s;
        t.node_->data = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_data({}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    i64 size() const { return static_cast<i64>(node_->data.size()); }
    i64 dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    std::vector<T>& grad() { return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    T item() const {
        require(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return node_->data[0];
    }

    void zero_grad() {
        if (node_) node_->grad.assign(node_->data.size(), T(0));
    }

    std::shared_ptr<Node<T>> node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    if (!finite_checks_enabled()) return;
    for (T x : v) {
        if (!std::isfinite(x)) fail(std::string("non-finite value produced by op '") + op + "'");
    }
}

// Wires a freshly computed output into the graph when recording is active.
template <typename T>
inline void record(Tensor<T>& out, std::vector<Tensor<T>> parents, std::function<void()> backward) {
    check_finite(out.data(), "op");
    bool any = false;
    for (auto& p : parents) any = any || p.requires_grad();
    if (!grad_enabled() || !any) return;
    auto n = out.node();
    n->requires_grad = true;
    n->is_leaf = false;
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
}

template <typename T>
inline std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    // Iterative post-order DFS: parents appear before their consumers.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node<T>* p = n->parents[idx++].get();
            if (!visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Each recorded op's backward runs
// exactly once, after all of its consumers; the graph is released afterwards.
template <typename T>
inline void backward(Tensor<T>& loss) {
    require(loss.size() == 1, "backward() requires a scalar loss");
    require(loss.requires_grad(), "backward() on a tensor with no recorded graph");
    auto order = detail::topo_order(loss.node().get());
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn) n->backward_fn();
    }
    for (Node<T>* n : order) {
        n->backward_fn = nullptr;
        n->parents.clear();
        if (!n->is_leaf) n->grad.clear();
    }
}

// ---- elementwise arithmetic ----

namespace detail {
template <typename T>
inline void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "add");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record(out, {a, b}, [an, bn, on] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "sub");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record(out, {a, b}, [an, bn, on] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "mul");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record(out, {a, b}, [an, bn, on] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->data[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::same_shape(a, b, "div");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / bv[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record(out, {a, b}, [an, bn, on] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] / bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) {
                T b2 = bn->data[i] * bn->data[i];
                bn->grad[i] -= on->grad[i] * an->data[i] / b2;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
    return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, c] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
    });
    return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) { return mul_scalar(a, T(-1)); }

// ---- activations ----

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
            if (an->data[i] > T(0)) an->grad[i] += on->grad[i];
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = T(1) / (T(1) + std::exp(-av[i]));
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            T s = on->data[i];
            an->grad[i] += on->grad[i] * s * (T(1) - s);
        }
    });
    return out;
}

// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    for (std::size_t i = 0; i < ov.size(); ++i)
        ov[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, inv_sqrt2] {
        an->ensure_grad();
        const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            T x = an->data[i];
            T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            an->grad[i] += on->grad[i] * (cdf + x * pdf);
        }
    });
    return out;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T s = std::accumulate(a.data().begin(), a.data().end(), T(0));
    Tensor<T> out = Tensor<T>::scalar(s);
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on] {
        an->ensure_grad();
        T g = on->grad[0];
        for (auto& v : an->grad) v += g;
    });
    return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return mul_scalar(sum_all(a), T(1) / T(a.size()));
}

// Sums out a single axis.
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, int axis) {
    int r = a.rank();
    if (axis < 0) axis += r;
    require(axis >= 0 && axis < r, "reduce_sum: bad axis");
    Shape os;
    i64 outer = 1, mid = a.dim(axis), inner = 1;
    for (int i = 0; i < r; ++i) {
        if (i < axis) outer *= a.dim(i);
        if (i > axis) inner *= a.dim(i);
        if (i != axis) os.push_back(a.dim(i));
    }
    Tensor<T> out = Tensor<T>::zeros(os);
    const auto& av = a.data();
    auto& ov = out.data();
    for (i64 o = 0; o < outer; ++o)
        for (i64 m = 0; m < mid; ++m) {
            const T* src = av.data() + (o * mid + m) * inner;
            T* dst = ov.data() + o * inner;
            for (i64 i = 0; i < inner; ++i) dst[i] += src[i];
        }
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, outer, mid, inner] {
        an->ensure_grad();
        for (i64 o = 0; o < outer; ++o)
            for (i64 m = 0; m < mid; ++m) {
                T* dst = an->grad.data() + (o * mid + m) * inner;
                const T* src = on->grad.data() + o * inner;
                for (i64 i = 0; i < inner; ++i) dst[i] += src[i];
            }
    });
    return out;
}

// ---- shape manipulation ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& s) {
    require(numel(s) == a.size(), "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(s));
    Tensor<T> out = Tensor<T>::from_data(s, a.data());
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on] {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
    return out;
}

namespace detail {
inline std::vector<i64> strides_of(const Shape& s) {
    std::vector<i64> st(s.size());
    i64 acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = acc;
        acc *= s[static_cast<std::size_t>(i)];
    }
    return st;
}
}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
    int r = a.rank();
    require(static_cast<int>(axes.size()) == r, "permute: axes rank mismatch");
    Shape os(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) os[static_cast<std::size_t>(i)] = a.dim(axes[static_cast<std::size_t>(i)]);
    auto in_strides = detail::strides_of(a.shape());
    auto out_strides = detail::strides_of(os);
    // in_stride_for_out_axis[i] walks the input as the i-th output axis advances
    std::vector<i64> map(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) map[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];

    Tensor<T> out = Tensor<T>::zeros(os);
    const auto& av = a.data();
    auto& ov = out.data();
    i64 n = a.size();
    std::vector<i64> idx(static_cast<std::size_t>(r), 0);
    i64 src = 0;
    for (i64 flat = 0; flat < n; ++flat) {
        ov[static_cast<std::size_t>(flat)] = av[static_cast<std::size_t>(src)];
        for (int d = r - 1; d >= 0; --d) {
            auto du = static_cast<std::size_t>(d);
            if (++idx[du] < os[du]) { src += map[du]; break; }
            idx[du] = 0;
            src -= map[du] * (os[du] - 1);
        }
    }
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, os, map, r] {
        an->ensure_grad();
        std::vector<i64> idx(static_cast<std::size_t>(r), 0);
        i64 src = 0;
        i64 n = static_cast<i64>(on->grad.size());
        for (i64 flat = 0; flat < n; ++flat) {
            an->grad[static_cast<std::size_t>(src)] += on->grad[static_cast<std::size_t>(flat)];
            for (int d = r - 1; d >= 0; --d) {
                auto du = static_cast<std::size_t>(d);
                if (++idx[du] < os[du]) { src += map[du]; break; }
                idx[du] = 0;
                src -= map[du] * (os[du] - 1);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    require(!parts.empty(), "concat: empty input list");
    int r = parts[0].rank();
    if (axis < 0) axis += r;
    Shape os = parts[0].shape();
    i64 total_axis = 0;
    for (const auto& p : parts) {
        require(p.rank() == r, "concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis) require(p.dim(i) == os[static_cast<std::size_t>(i)], "concat: shape mismatch off-axis");
        total_axis += p.dim(axis);
    }
    os[static_cast<std::size_t>(axis)] = total_axis;
    i64 outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= os[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < r; ++i) inner *= os[static_cast<std::size_t>(i)];

    Tensor<T> out = Tensor<T>::zeros(os);
    auto& ov = out.data();
    i64 offset = 0;
    for (const auto& p : parts) {
        i64 m = p.dim(axis);
        const auto& pv = p.data();
        for (i64 o = 0; o < outer; ++o)
            std::copy(pv.data() + o * m * inner, pv.data() + (o + 1) * m * inner,
                      ov.data() + (o * total_axis + offset) * inner);
        offset += m;
    }
    std::vector<std::shared_ptr<Node<T>>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    auto on = out.node();
    detail::record(out, parts, [pnodes, on, outer, inner, total_axis, axis] {
        i64 offset = 0;
        for (auto& pn : pnodes) {
            i64 m = pn->shape[static_cast<std::size_t>(axis)];
            if (pn->requires_grad) {
                pn->ensure_grad();
                for (i64 o = 0; o < outer; ++o) {
                    const T* src = on->grad.data() + (o * total_axis + offset) * inner;
                    T* dst = pn->grad.data() + o * m * inner;
                    for (i64 i = 0; i < m * inner; ++i) dst[i] += src[i];
                }
            }
            offset += m;
        }
    });
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, i64 start, i64 len) {
    int r = a.rank();
    if (axis < 0) axis += r;
    require(start >= 0 && start + len <= a.dim(axis), "slice: out of range");
    Shape os = a.shape();
    os[static_cast<std::size_t>(axis)] = len;
    i64 outer = 1, inner = 1, m = a.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
    Tensor<T> out = Tensor<T>::zeros(os);
    const auto& av = a.data();
    auto& ov = out.data();
    for (i64 o = 0; o < outer; ++o)
        std::copy(av.data() + (o * m + start) * inner, av.data() + (o * m + start + len) * inner,
                  ov.data() + o * len * inner);
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, outer, inner, m, start, len] {
        an->ensure_grad();
        for (i64 o = 0; o < outer; ++o) {
            const T* src = on->grad.data() + o * len * inner;
            T* dst = an->grad.data() + (o * m + start) * inner;
            for (i64 i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
    return out;
}

// Cyclic shift over the last two axes of an NCHW map (SW-MSA uses +/- M/2).
template <typename T>
Tensor<T> roll2d(const Tensor<T>& a, i64 shift_h, i64 shift_w) {
    require(a.rank() == 4, "roll2d expects NCHW");
    i64 N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    auto wrap = [](i64 v, i64 n) { return ((v % n) + n) % n; };
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (i64 nc = 0; nc < N * C; ++nc) {
        const T* src = av.data() + nc * H * W;
        T* dst = ov.data() + nc * H * W;
        for (i64 y = 0; y < H; ++y) {
            i64 sy = wrap(y - shift_h, H);
            for (i64 x = 0; x < W; ++x) dst[y * W + x] = src[sy * W + wrap(x - shift_w, W)];
        }
    }
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, N, C, H, W, shift_h, shift_w, wrap] {
        an->ensure_grad();
        for (i64 nc = 0; nc < N * C; ++nc) {
            const T* src = on->grad.data() + nc * H * W;
            T* dst = an->grad.data() + nc * H * W;
            for (i64 y = 0; y < H; ++y) {
                i64 sy = wrap(y - shift_h, H);
                for (i64 x = 0; x < W; ++x) dst[sy * W + wrap(x - shift_w, W)] += src[y * W + x];
            }
        }
    });
    return out;
}

// [N,C,H,W] -> [N,4C,H/2,W/2]; channel blocks ordered TL, TR, BL, BR.
template <typename T>
Tensor<T> space_to_depth2(const Tensor<T>& a) {
    require(a.rank() == 4, "space_to_depth2 expects NCHW");
    i64 N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    require(H % 2 == 0 && W % 2 == 0, "space_to_depth2: odd extent");
    i64 Ho = H / 2, Wo = W / 2;
    Tensor<T> out = Tensor<T>::zeros({N, 4 * C, Ho, Wo});
    const auto& av = a.data();
    auto& ov = out.data();
    for (i64 n = 0; n < N; ++n)
        for (i64 q = 0; q < 4; ++q) {
            i64 dy = q / 2, dx = q % 2;
            for (i64 c = 0; c < C; ++c) {
                const T* src = av.data() + (n * C + c) * H * W;
                T* dst = ov.data() + ((n * 4 + q) * C + c) * Ho * Wo;
                for (i64 y = 0; y < Ho; ++y)
                    for (i64 x = 0; x < Wo; ++x) dst[y * Wo + x] = src[(2 * y + dy) * W + 2 * x + dx];
            }
        }
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, N, C, H, W, Ho, Wo] {
        an->ensure_grad();
        for (i64 n = 0; n < N; ++n)
            for (i64 q = 0; q < 4; ++q) {
                i64 dy = q / 2, dx = q % 2;
                for (i64 c = 0; c < C; ++c) {
                    T* dst = an->grad.data() + (n * C + c) * H * W;
                    const T* src = on->grad.data() + ((n * 4 + q) * C + c) * Ho * Wo;
                    for (i64 y = 0; y < Ho; ++y)
                        for (i64 x = 0; x < Wo; ++x) dst[(2 * y + dy) * W + 2 * x + dx] += src[y * Wo + x];
                }
            }
    });
    return out;
}

// Tiles a tensor along a fresh leading axis (backward sums the copies).
template <typename T>
Tensor<T> repeat_leading(const Tensor<T>& a, i64 times) {
    Shape os = a.shape();
    os.insert(os.begin(), times);
    Tensor<T> out = Tensor<T>::zeros(os);
    const auto& av = a.data();
    auto& ov = out.data();
    i64 n = a.size();
    for (i64 t = 0; t < times; ++t)
        std::copy(av.begin(), av.end(), ov.begin() + t * n);
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, times, n] {
        an->ensure_grad();
        for (i64 t = 0; t < times; ++t)
            for (i64 i = 0; i < n; ++i) an->grad[static_cast<std::size_t>(i)] += on->grad[static_cast<std::size_t>(t * n + i)];
    });
    return out;
}

// Row gather with scatter-add backward (relative-position-bias lookup).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<i64>& idx) {
    require(table.rank() == 2, "gather_rows expects a 2-D table");
    i64 cols = table.dim(1);
    Tensor<T> out = Tensor<T>::zeros({static_cast<i64>(idx.size()), cols});
    const auto& tv = table.data();
    auto& ov = out.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] >= 0 && idx[r] < table.dim(0), "gather_rows: index out of range");
        std::copy(tv.data() + idx[r] * cols, tv.data() + (idx[r] + 1) * cols, ov.data() + static_cast<i64>(r) * cols);
    }
    auto tn = table.node(), on = out.node();
    detail::record(out, {table}, [tn, on, idx, cols] {
        tn->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const T* src = on->grad.data() + static_cast<i64>(r) * cols;
            T* dst = tn->grad.data() + idx[r] * cols;
            for (i64 c = 0; c < cols; ++c) dst[c] += src[c];
        }
    });
    return out;
}

// ---- softmax family ----

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    int r = a.rank();
    if (axis < 0) axis += r;
    require(axis >= 0 && axis < r, "softmax: bad axis");
    i64 outer = 1, mid = a.dim(axis), inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (i64 o = 0; o < outer; ++o)
        for (i64 i = 0; i < inner; ++i) {
            auto at = [&](i64 m) { return (o * mid + m) * inner + i; };
            T mx = av[static_cast<std::size_t>(at(0))];
            for (i64 m = 1; m < mid; ++m) mx = std::max(mx, av[static_cast<std::size_t>(at(m))]);
            T sum = T(0);
            for (i64 m = 0; m < mid; ++m) {
                T e = std::exp(av[static_cast<std::size_t>(at(m))] - mx);
                ov[static_cast<std::size_t>(at(m))] = e;
                sum += e;
            }
            for (i64 m = 0; m < mid; ++m) ov[static_cast<std::size_t>(at(m))] /= sum;
        }
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, outer, mid, inner] {
        an->ensure_grad();
        for (i64 o = 0; o < outer; ++o)
            for (i64 i = 0; i < inner; ++i) {
                auto at = [&](i64 m) { return static_cast<std::size_t>((o * mid + m) * inner + i); };
                T dot = T(0);
                for (i64 m = 0; m < mid; ++m) dot += on->grad[at(m)] * on->data[at(m)];
                for (i64 m = 0; m < mid; ++m)
                    an->grad[at(m)] += on->data[at(m)] * (on->grad[at(m)] - dot);
            }
    });
    return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, int axis) {
    int r = a.rank();
    if (axis < 0) axis += r;
    i64 outer = 1, mid = a.dim(axis), inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (i64 o = 0; o < outer; ++o)
        for (i64 i = 0; i < inner; ++i) {
            auto at = [&](i64 m) { return static_cast<std::size_t>((o * mid + m) * inner + i); };
            T mx = av[at(0)];
            for (i64 m = 1; m < mid; ++m) mx = std::max(mx, av[at(m)]);
            T sum = T(0);
            for (i64 m = 0; m < mid; ++m) sum += std::exp(av[at(m)] - mx);
            T lse = mx + std::log(sum);
            for (i64 m = 0; m < mid; ++m) ov[at(m)] = av[at(m)] - lse;
        }
    auto an = a.node(), on = out.node();
    detail::record(out, {a}, [an, on, outer, mid, inner] {
        an->ensure_grad();
        for (i64 o = 0; o < outer; ++o)
            for (i64 i = 0; i < inner; ++i) {
                auto at = [&](i64 m) { return static_cast<std::size_t>((o * mid + m) * inner + i); };
                T gsum = T(0);
                for (i64 m = 0; m < mid; ++m) gsum += on->grad[at(m)];
                for (i64 m = 0; m < mid; ++m)
                    an->grad[at(m)] += on->grad[at(m)] - std::exp(on->data[at(m)]) * gsum;
            }
    });
    return out;
}

}  // namespace hipf
