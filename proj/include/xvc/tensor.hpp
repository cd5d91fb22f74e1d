// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a handle to an immutable node. Operations on tensors that require
// gradients record a backward rule on the result node; `Graph` collects the
// nodes reachable from a scalar loss in topological order and runs the rules
// once. Graphs are single-use: after backward the interior nodes are consumed.

#include "xvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace xvc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape &shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape &shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size()) {
            s += ", ";
        }
    }
    return s + ")";
}

inline std::vector<std::size_t> row_major_strides(const Shape &shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

/// Backward rule of a recorded operation. `out` is the forward result,
/// `grad_out` the upstream gradient (same size), and `grad_in[i]` points at the
/// accumulation buffer of input i, or is null when that input needs no gradient.
/// Rules must accumulate (+=), never assign.
using BackwardFn = std::function<void(std::span<const double> out, std::span<const double> grad_out,
                                      std::span<double *const> grad_in)>;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
};

} // namespace detail

class Tensor {
  public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        detail::require(data.size() == xvc::numel(shape), "Tensor: data length " + std::to_string(data.size()) +
                                                              " does not match shape " + shape_str(shape));
        for (auto d : shape) {
            detail::require(d > 0, "Tensor: dimensions must be positive, got " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
        if (requires_grad) {
            node_->grad.assign(node_->data.size(), 0.0);
        }
    }

    static Tensor scalar(double v, bool requires_grad = false) { return Tensor({}, {v}, requires_grad); }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        const auto n = xvc::numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), 0.0, requires_grad); }
    static Tensor ones(Shape shape, bool requires_grad = false) { return full(std::move(shape), 1.0, requires_grad); }

    /// Records an operation. When no input requires a gradient the result is a
    /// plain constant and `backward` is dropped.
    static Tensor make_op(std::string name, Shape shape, std::vector<double> data, const std::vector<Tensor> &inputs,
                          BackwardFn backward) {
        Tensor out(std::move(shape), std::move(data));
        out.node_->op = std::move(name);
        const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor &t) { return t.requires_grad(); });
        if (any) {
            out.node_->requires_grad = true;
            out.node_->leaf = false;
            out.node_->backward = std::move(backward);
            out.node_->inputs.reserve(inputs.size());
            for (const auto &t : inputs) {
                out.node_->inputs.push_back(t.node_);
            }
        }
        return out;
    }

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape &shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }

    std::span<const double> data() const { return node_->data; }
    double value(std::size_t i) const { return node_->data[i]; }

    double item() const {
        detail::require(numel() == 1, "item: tensor of shape " + shape_str(shape()) + " is not a scalar");
        return node_->data[0];
    }

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool is_leaf() const noexcept { return node_->leaf; }
    const std::string &op_name() const { return node_->op; }

    /// Accumulated gradient of a leaf; empty for tensors without one.
    std::span<const double> grad() const {
        if (!node_->leaf) {
            return {};
        }
        return node_->grad;
    }

    void zero_grad() {
        if (node_->leaf && node_->requires_grad) {
            std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
        }
    }

    Tensor detach() const { return Tensor(node_->shape, node_->data); }

    /// Same values, new leaf with the given gradient flag.
    Tensor as_leaf(bool requires_grad) const { return Tensor(node_->shape, node_->data, requires_grad); }

  private:
    friend class Graph;
    std::shared_ptr<detail::Node> node_;
};

/// The operations reachable from a scalar loss, in topological order.
class Graph {
  public:
    explicit Graph(const Tensor &loss) : loss_(loss) {
        detail::require(loss.defined(), "Graph: undefined loss tensor");
        if (!loss.requires_grad() || loss.is_leaf()) {
            return;
        }
        // Iterative post-order DFS.
        std::unordered_set<const detail::Node *> seen;
        std::vector<std::pair<detail::Node *, std::size_t>> stack;
        stack.emplace_back(loss.node_.get(), 0);
        seen.insert(loss.node_.get());
        while (!stack.empty()) {
            auto &[node, next] = stack.back();
            if (next < node->inputs.size()) {
                detail::Node *child = node->inputs[next++].get();
                if (!child->leaf && child->requires_grad && seen.insert(child).second) {
                    stack.emplace_back(child, 0);
                }
                continue;
            }
            if (node->consumed) {
                detail::contract("Graph: operation '" + node->op + "' was already consumed by a previous backward");
            }
            order_.push_back(node);
            stack.pop_back();
        }
    }

    /// Number of recorded operations.
    std::size_t size() const noexcept { return order_.size(); }

    void backward() {
        detail::require(!done_, "Graph::backward called twice on the same graph");
        detail::require(loss_.numel() == 1, "backward: loss must be scalar, got shape " + shape_str(loss_.shape()));
        done_ = true;
        if (!loss_.requires_grad()) {
            return;
        }
        if (loss_.is_leaf()) {
            loss_.node_->grad[0] += 1.0;
            return;
        }
        for (auto *node : order_) {
            node->grad.assign(node->data.size(), 0.0);
        }
        order_.back()->grad[0] = 1.0;
        std::vector<double *> grad_in;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            detail::Node *node = *it;
            grad_in.clear();
            for (const auto &in : node->inputs) {
                grad_in.push_back(in->requires_grad ? in->grad.data() : nullptr);
            }
            node->backward(node->data, node->grad, grad_in);
        }
        for (auto *node : order_) {
            node->grad.clear();
            node->grad.shrink_to_fit();
            node->backward = nullptr;
            node->consumed = true;
        }
    }

  private:
    Tensor loss_;
    std::vector<detail::Node *> order_;
    bool done_ = false;
};

inline void backward(const Tensor &loss) { Graph(loss).backward(); }

// ---------------------------------------------------------------------------
// Broadcasting

inline Shape broadcast_shapes(const Shape &a, const Shape &b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            detail::contract("shape mismatch: " + shape_str(a) + " vs " + shape_str(b) + " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

/// For each flat index of `out`, the flat index into an input of shape `in`
/// broadcast against it.
inline std::vector<std::size_t> broadcast_index(const Shape &in, const Shape &out) {
    const std::size_t n = xvc::numel(out);
    std::vector<std::size_t> map(n);
    const std::size_t offset = out.size() - in.size();
    const auto in_strides = row_major_strides(in);
    std::vector<std::size_t> eff(out.size(), 0);
    for (std::size_t i = 0; i < in.size(); ++i) {
        eff[i + offset] = in[i] == 1 ? 0 : in_strides[i];
    }
    std::vector<std::size_t> idx(out.size(), 0);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
        map[k] = pos;
        for (std::size_t d = out.size(); d-- > 0;) {
            ++idx[d];
            pos += eff[d];
            if (idx[d] < out[d]) {
                break;
            }
            pos -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    return map;
}

/// out[i] = in[map[i]], scatter-add on the way back.
inline Tensor gather(std::string name, const Tensor &a, Shape out_shape, std::vector<std::size_t> map) {
    std::vector<double> out(map.size());
    const auto src = a.data();
    for (std::size_t i = 0; i < map.size(); ++i) {
        out[i] = src[map[i]];
    }
    auto shared = std::make_shared<const std::vector<std::size_t>>(std::move(map));
    return Tensor::make_op(std::move(name), std::move(out_shape), std::move(out), {a},
                           [shared](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
                               if (double *ga = gi[0]) {
                                   const auto &m = *shared;
                                   for (std::size_t i = 0; i < m.size(); ++i) {
                                       ga[m[i]] += g[i];
                                   }
                               }
                           });
}

template <class F, class DA, class DB>
Tensor binary_op(std::string name, const Tensor &a, const Tensor &b, F f, DA da, DB db) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    const std::size_t n = xvc::numel(out_shape);
    using Map = std::shared_ptr<const std::vector<std::size_t>>;
    Map ma, mb;
    if (a.shape() != out_shape) {
        ma = std::make_shared<const std::vector<std::size_t>>(broadcast_index(a.shape(), out_shape));
    }
    if (b.shape() != out_shape) {
        mb = std::make_shared<const std::vector<std::size_t>>(broadcast_index(b.shape(), out_shape));
    }
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(x[ma ? (*ma)[i] : i], y[mb ? (*mb)[i] : i]);
    }
    return Tensor::make_op(std::move(name), out_shape, std::move(out), {a, b},
                           [a, b, ma, mb, da, db](std::span<const double> o, std::span<const double> g,
                                                  std::span<double *const> gi) {
                               const auto x = a.data();
                               const auto y = b.data();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   const std::size_t ia = ma ? (*ma)[i] : i;
                                   const std::size_t ib = mb ? (*mb)[i] : i;
                                   if (gi[0]) {
                                       gi[0][ia] += g[i] * da(x[ia], y[ib], o[i]);
                                   }
                                   if (gi[1]) {
                                       gi[1][ib] += g[i] * db(x[ia], y[ib], o[i]);
                                   }
                               }
                           });
}

template <class F, class D>
Tensor unary_op(std::string name, const Tensor &a, F f, D d) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = f(x[i]);
    }
    return Tensor::make_op(
        std::move(name), a.shape(), std::move(out), {a},
        [a, d](std::span<const double> o, std::span<const double> g, std::span<double *const> gi) {
            const auto x = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gi[0][i] += g[i] * d(x[i], o[i]);
            }
        });
}

inline double sgn(double v) { return (v > 0.0) - (v < 0.0); }

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations

inline Tensor add(const Tensor &a, const Tensor &b) {
    return detail::binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor &a, const Tensor &b) {
    return detail::binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor &a, const Tensor &b) {
    return detail::binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor &a, const Tensor &b) {
    const auto y = b.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) {
            throw DomainError("div: zero divisor at element " + std::to_string(i) + " of operand 1", 1);
        }
    }
    return detail::binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

inline Tensor neg(const Tensor &a) {
    return detail::unary_op("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

/// |a|; the subgradient at 0 is 0.
inline Tensor abs(const Tensor &a) {
    return detail::unary_op("abs", a, [](double x) { return std::abs(x); },
                            [](double x, double) { return detail::sgn(x); });
}

inline Tensor exp(const Tensor &a) {
    return detail::unary_op("exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

inline Tensor log(const Tensor &a) {
    const auto x = a.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) {
            throw DomainError("log: non-positive value at element " + std::to_string(i) + " of operand 0", 0);
        }
    }
    return detail::unary_op("log", a, [](double v) { return std::log(v); },
                            [](double v, double) { return 1.0 / v; });
}

/// Square root; gradient at 0 is taken as 0.
inline Tensor sqrt(const Tensor &a) {
    const auto x = a.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0.0) {
            throw DomainError("sqrt: negative value at element " + std::to_string(i) + " of operand 0", 0);
        }
    }
    return detail::unary_op("sqrt", a, [](double v) { return std::sqrt(v); },
                            [](double, double o) { return o > 0.0 ? 0.5 / o : 0.0; });
}

/// Clamp to [lo, hi]. Gradient passes on the closed interval.
inline Tensor clip(const Tensor &a, double lo, double hi) {
    detail::require(lo <= hi, "clip: lo must not exceed hi");
    return detail::unary_op("clip", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                            [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// floor in the forward pass, identity gradient in the backward pass.
inline Tensor floor_ste(const Tensor &a) {
    return detail::unary_op("floor_ste", a, [](double x) { return std::floor(x); },
                            [](double, double) { return 1.0; });
}

/// Surrogate used by sign_ste: Htanh(r) = clip(r, -1, 1) with r = 2x - 1.
inline double htanh_surrogate(double x) { return std::clamp(2.0 * x - 1.0, -1.0, 1.0); }

/// d/dx Htanh(2x - 1): 2 inside the open band 0 < x < 1, 0 elsewhere.
inline double htanh_surrogate_grad(double x) { return (x > 0.0 && x < 1.0) ? 2.0 : 0.0; }

/// sign in the forward pass; backward is the derivative of htanh_surrogate.
inline Tensor sign_ste(const Tensor &a) {
    return detail::unary_op("sign_ste", a, [](double x) { return detail::sgn(x); },
                            [](double x, double) { return htanh_surrogate_grad(x); });
}

enum class ElementwiseOp { add, sub, mul, div, abs, exp, log, sqrt, floor_ste, sign_ste, clip };

struct ClipBounds {
    double lo = -1.0;
    double hi = 1.0;
};

/// Name-dispatched entry point. Binary ops need `b`; unary ops reject it.
inline Tensor elementwise(ElementwiseOp op, const Tensor &a, const std::optional<Tensor> &b = std::nullopt,
                          ClipBounds bounds = {}) {
    const bool binary = op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul ||
                        op == ElementwiseOp::div;
    detail::require(binary == b.has_value(), binary ? "elementwise: binary op requires a second operand"
                                                    : "elementwise: unary op takes a single operand");
    switch (op) {
    case ElementwiseOp::add: return add(a, *b);
    case ElementwiseOp::sub: return sub(a, *b);
    case ElementwiseOp::mul: return mul(a, *b);
    case ElementwiseOp::div: return div(a, *b);
    case ElementwiseOp::abs: return abs(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::sqrt: return sqrt(a);
    case ElementwiseOp::floor_ste: return floor_ste(a);
    case ElementwiseOp::sign_ste: return sign_ste(a);
    case ElementwiseOp::clip: return clip(a, bounds.lo, bounds.hi);
    }
    detail::contract("elementwise: unknown op");
}

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
inline Tensor operator/(const Tensor &a, const Tensor &b) { return div(a, b); }
inline Tensor operator-(const Tensor &a) { return neg(a); }
inline Tensor operator+(const Tensor &a, double c) { return add(a, Tensor::scalar(c)); }
inline Tensor operator+(double c, const Tensor &a) { return add(Tensor::scalar(c), a); }
inline Tensor operator-(const Tensor &a, double c) { return sub(a, Tensor::scalar(c)); }
inline Tensor operator-(double c, const Tensor &a) { return sub(Tensor::scalar(c), a); }
inline Tensor operator*(const Tensor &a, double c) { return mul(a, Tensor::scalar(c)); }
inline Tensor operator*(double c, const Tensor &a) { return mul(Tensor::scalar(c), a); }
inline Tensor operator/(const Tensor &a, double c) { return div(a, Tensor::scalar(c)); }
inline Tensor operator/(double c, const Tensor &a) { return div(Tensor::scalar(c), a); }

inline Tensor square(const Tensor &a) { return mul(a, a); }

// ---------------------------------------------------------------------------
// Reductions

enum class ReduceOp { sum, mean, l1_norm, l2_norm_sq };

/// Reduces over `axes` (all axes when omitted); reduced axes are removed.
inline Tensor reduce(ReduceOp op, const Tensor &a, const std::optional<std::vector<std::size_t>> &axes = std::nullopt) {
    const Shape &in = a.shape();
    std::vector<bool> reduced(in.size(), !axes.has_value());
    if (axes) {
        for (auto ax : *axes) {
            detail::require(ax < in.size(), "reduce: axis " + std::to_string(ax) + " invalid for shape " +
                                                shape_str(in));
            detail::require(!reduced[ax], "reduce: axis " + std::to_string(ax) + " listed twice");
            reduced[ax] = true;
        }
    }
    Shape out_shape;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (!reduced[i]) {
            out_shape.push_back(in[i]);
        }
    }
    // Map every input element to its output slot.
    const auto out_strides = row_major_strides(out_shape);
    std::vector<std::size_t> eff(in.size(), 0);
    for (std::size_t i = 0, j = 0; i < in.size(); ++i) {
        if (!reduced[i]) {
            eff[i] = out_strides[j++];
        }
    }
    const std::size_t n = a.numel();
    auto map = std::make_shared<std::vector<std::size_t>>(n);
    {
        std::vector<std::size_t> idx(in.size(), 0);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n; ++k) {
            (*map)[k] = pos;
            for (std::size_t d = in.size(); d-- > 0;) {
                ++idx[d];
                pos += eff[d];
                if (idx[d] < in[d]) {
                    break;
                }
                pos -= eff[d] * idx[d];
                idx[d] = 0;
            }
        }
    }
    const std::size_t m = xvc::numel(out_shape);
    const double count = static_cast<double>(n / m);
    const auto x = a.data();
    std::vector<double> out(m, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double v = x[k];
        switch (op) {
        case ReduceOp::l1_norm: v = std::abs(v); break;
        case ReduceOp::l2_norm_sq: v = v * v; break;
        default: break;
        }
        out[(*map)[k]] += v;
    }
    if (op == ReduceOp::mean) {
        for (auto &v : out) {
            v /= count;
        }
    }
    static constexpr const char *names[] = {"sum", "mean", "l1_norm", "l2_norm_sq"};
    return Tensor::make_op(names[static_cast<int>(op)], std::move(out_shape), std::move(out), {a},
                           [a, map, op, count](std::span<const double>, std::span<const double> g,
                                               std::span<double *const> gi) {
                               const auto x = a.data();
                               const auto &mp = *map;
                               for (std::size_t k = 0; k < x.size(); ++k) {
                                   const double up = g[mp[k]];
                                   switch (op) {
                                   case ReduceOp::sum: gi[0][k] += up; break;
                                   case ReduceOp::mean: gi[0][k] += up / count; break;
                                   case ReduceOp::l1_norm: gi[0][k] += up * detail::sgn(x[k]); break;
                                   case ReduceOp::l2_norm_sq: gi[0][k] += 2.0 * up * x[k]; break;
                                   }
                               }
                           });
}

inline Tensor sum(const Tensor &a) { return reduce(ReduceOp::sum, a); }
inline Tensor mean(const Tensor &a) { return reduce(ReduceOp::mean, a); }
inline Tensor sum(const Tensor &a, std::vector<std::size_t> axes) { return reduce(ReduceOp::sum, a, std::move(axes)); }
inline Tensor mean(const Tensor &a, std::vector<std::size_t> axes) {
    return reduce(ReduceOp::mean, a, std::move(axes));
}
inline Tensor l1_norm(const Tensor &a) { return reduce(ReduceOp::l1_norm, a); }
inline Tensor l2_norm_sq(const Tensor &a) { return reduce(ReduceOp::l2_norm_sq, a); }

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor &a, Shape shape) {
    detail::require(xvc::numel(shape) == a.numel(),
                    "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    std::vector<std::size_t> map(a.numel());
    std::iota(map.begin(), map.end(), std::size_t{0});
    return detail::gather("reshape", a, std::move(shape), std::move(map));
}

inline Tensor broadcast_to(const Tensor &a, const Shape &shape) {
    detail::require(broadcast_shapes(a.shape(), shape) == shape,
                    "broadcast_to: " + shape_str(a.shape()) + " does not broadcast to " + shape_str(shape));
    return detail::gather("broadcast_to", a, shape, detail::broadcast_index(a.shape(), shape));
}

/// out axis i is input axis perm[i].
inline Tensor permute(const Tensor &a, const std::vector<std::size_t> &perm) {
    const Shape &in = a.shape();
    detail::require(perm.size() == in.size(), "permute: permutation rank mismatch");
    std::vector<bool> used(in.size(), false);
    Shape out_shape(in.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        detail::require(perm[i] < in.size() && !used[perm[i]], "permute: invalid permutation");
        used[perm[i]] = true;
        out_shape[i] = in[perm[i]];
    }
    const auto in_strides = row_major_strides(in);
    std::vector<std::size_t> eff(in.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        eff[i] = in_strides[perm[i]];
    }
    const std::size_t n = a.numel();
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(in.size(), 0);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
        map[k] = pos;
        for (std::size_t d = out_shape.size(); d-- > 0;) {
            ++idx[d];
            pos += eff[d];
            if (idx[d] < out_shape[d]) {
                break;
            }
            pos -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    return detail::gather("permute", a, std::move(out_shape), std::move(map));
}

/// Contiguous range [start, start + length) along one axis.
inline Tensor slice(const Tensor &a, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape &in = a.shape();
    detail::require(axis < in.size(), "slice: axis out of range");
    detail::require(length > 0 && start + length <= in[axis], "slice: range exceeds dimension");
    Shape out_shape = in;
    out_shape[axis] = length;
    const auto strides = row_major_strides(in);
    const std::size_t outer = xvc::numel(Shape(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t inner = strides[axis];
    std::vector<std::size_t> map;
    map.reserve(xvc::numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t l = 0; l < length; ++l) {
            const std::size_t base = o * in[axis] * inner + (start + l) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                map.push_back(base + i);
            }
        }
    }
    return detail::gather("slice", a, std::move(out_shape), std::move(map));
}

/// Rows of `a` (axis 0) selected by `rows`.
inline Tensor index_select(const Tensor &a, std::span<const std::size_t> rows) {
    detail::require(a.rank() >= 1 && !rows.empty(), "index_select: need rank >= 1 and at least one row");
    const std::size_t inner = a.numel() / a.dim(0);
    std::vector<std::size_t> map;
    map.reserve(rows.size() * inner);
    for (auto r : rows) {
        detail::require(r < a.dim(0), "index_select: row " + std::to_string(r) + " out of range");
        for (std::size_t i = 0; i < inner; ++i) {
            map.push_back(r * inner + i);
        }
    }
    Shape out_shape = a.shape();
    out_shape[0] = rows.size();
    return detail::gather("index_select", a, std::move(out_shape), std::move(map));
}

/// Concatenation along axis 0.
inline Tensor concat(const std::vector<Tensor> &parts) {
    detail::require(!parts.empty(), "concat: no inputs");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t rows = 0;
    std::vector<double> out;
    for (const auto &p : parts) {
        detail::require(p.rank() >= 1 && Shape(p.shape().begin() + 1, p.shape().end()) == tail,
                        "concat: trailing shapes differ");
        rows += p.dim(0);
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Shape out_shape = parts[0].shape();
    out_shape[0] = rows;
    std::vector<std::size_t> sizes;
    for (const auto &p : parts) {
        sizes.push_back(p.numel());
    }
    return Tensor::make_op("concat", std::move(out_shape), std::move(out), parts,
                           [sizes](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
                               std::size_t off = 0;
                               for (std::size_t p = 0; p < sizes.size(); ++p) {
                                   if (gi[p]) {
                                       for (std::size_t i = 0; i < sizes[p]; ++i) {
                                           gi[p][i] += g[off + i];
                                       }
                                   }
                                   off += sizes[p];
                               }
                           });
}

} // namespace xvc
