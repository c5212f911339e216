#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "specfuse/errors.hpp"
#include "specfuse/rng.hpp"

namespace specfuse {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense double tensor with reverse-mode autodiff.
///
/// Each op builds a node holding strong references to its inputs and a
/// closure that pushes this node's adjoint into the inputs' .grad buffers.
/// A graph therefore lives exactly as long as someone holds its output;
/// parameters are leaves that outlive any one graph.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // same size as values iff requires_grad
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    static TensorPtr create(Shape shape, std::vector<double> vals, bool requires_grad = false) {
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        std::size_t n = shape_numel(shape);
        if (vals.size() != n) {
            throw ShapeError("value count " + std::to_string(vals.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto t = std::shared_ptr<Tensor>(new Tensor());
        t->shape = std::move(shape);
        t->values = std::move(vals);
        t->requires_grad = requires_grad;
        if (requires_grad) t->grad.assign(n, 0.0);
        return t;
    }

    static TensorPtr full(Shape shape, double v, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return create(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static TensorPtr zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static TensorPtr scalar(double v, bool requires_grad = false) {
        return create({1}, {v}, requires_grad);
    }

    /// Uniform values in [lo, hi) drawn from the given stream.
    static TensorPtr random_uniform(Shape shape, Rng& rng, double lo, double hi,
                                    bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        std::vector<double> vals(n);
        for (double& v : vals) v = rng.uniform(lo, hi);
        return create(std::move(shape), std::move(vals), requires_grad);
    }

    std::size_t numel() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_leaf() const { return parents.empty(); }

    double scalar_value() const {
        if (numel() != 1) {
            throw ContractError("scalar_value() on tensor of shape " + shape_str(shape));
        }
        return values[0];
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), 0.0);
    }

private:
    Tensor() = default;
};

namespace detail {

// Test-only fault injection: added to the sigmoid local derivative so the
// gradcheck suite can prove it detects a corrupted backward rule.
inline double& sigmoid_backward_fault() {
    static double fault = 0.0;
    return fault;
}

// Strides with 0 on broadcast (size-1) dims, so a linear walk over the
// output can index both operands directly.
struct BroadcastPlan {
    Shape out_shape;
    std::vector<std::size_t> a_stride;
    std::vector<std::size_t> b_stride;
    std::size_t out_numel = 0;
};

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
    if (a.size() != b.size()) {
        throw ShapeError("broadcast rank mismatch: " + shape_str(a) + " vs " + shape_str(b));
    }
    BroadcastPlan plan;
    plan.out_shape.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) {
            plan.out_shape[i] = a[i];
        } else if (a[i] == 1 || b[i] == 1) {
            plan.out_shape[i] = std::max(a[i], b[i]);
        } else {
            throw ShapeError("shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
        }
    }
    auto strides_of = [&](const Shape& s) {
        std::vector<std::size_t> st(s.size(), 0);
        std::size_t acc = 1;
        for (std::size_t i = s.size(); i-- > 0;) {
            st[i] = (s[i] == 1 && plan.out_shape[i] != 1) ? 0 : acc;
            acc *= s[i];
        }
        return st;
    };
    plan.a_stride = strides_of(a);
    plan.b_stride = strides_of(b);
    plan.out_numel = shape_numel(plan.out_shape);
    return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
inline void broadcast_for_each(const BroadcastPlan& plan, Fn&& fn) {
    const std::size_t rank = plan.out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ao = 0, bo = 0;
    for (std::size_t o = 0; o < plan.out_numel; ++o) {
        fn(o, ao, bo);
        for (std::size_t i = rank; i-- > 0;) {
            ++idx[i];
            ao += plan.a_stride[i];
            bo += plan.b_stride[i];
            if (idx[i] < plan.out_shape[i]) break;
            ao -= plan.a_stride[i] * plan.out_shape[i];
            bo -= plan.b_stride[i] * plan.out_shape[i];
            idx[i] = 0;
        }
    }
}

inline bool any_requires_grad(const std::vector<TensorPtr>& inputs) {
    for (const auto& t : inputs) {
        if (t && t->requires_grad) return true;
    }
    return false;
}

/// Builds an op node. `push` receives the finished node and must scatter
/// node.grad into the parents' grad buffers (guarding on requires_grad).
inline TensorPtr make_op(Shape shape, std::vector<double> vals, std::vector<TensorPtr> inputs,
                         std::function<void(Tensor&)> push) {
    bool rg = any_requires_grad(inputs);
    TensorPtr t = Tensor::create(std::move(shape), std::move(vals), rg);
    if (rg) {
        t->parents = std::move(inputs);
        Tensor* raw = t.get();
        t->backward_fn = [raw, push = std::move(push)]() { push(*raw); };
    }
    return t;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise ops (with trailing-singleton broadcasting)
// ---------------------------------------------------------------------------

namespace detail {

template <typename FwdFn, typename BwdFn>
inline TensorPtr binary_op(const TensorPtr& a, const TensorPtr& b, FwdFn fwd, BwdFn bwd) {
    BroadcastPlan plan = broadcast_plan(a->shape, b->shape);
    std::vector<double> out(plan.out_numel);
    broadcast_for_each(plan, [&](std::size_t o, std::size_t ao, std::size_t bo) {
        out[o] = fwd(a->values[ao], b->values[bo]);
    });
    Tensor* ar = a.get();
    Tensor* br = b.get();
    return make_op(plan.out_shape, std::move(out), {a, b}, [ar, br, plan, bwd](Tensor& node) {
        broadcast_for_each(plan, [&](std::size_t o, std::size_t ao, std::size_t bo) {
            double g = node.grad[o];
            auto [da, db] = bwd(ar->values[ao], br->values[bo], g);
            if (ar->requires_grad) ar->grad[ao] += da;
            if (br->requires_grad) br->grad[bo] += db;
        });
    });
}

} // namespace detail

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double g) { return std::pair{g, g}; });
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double g) { return std::pair{g, -g}; });
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

inline TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g) { return std::pair{g / y, -g * x / (y * y)}; });
}

// ---------------------------------------------------------------------------
// Unary elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

// bwd(x, out, g) -> dL/dx contribution
template <typename FwdFn, typename BwdFn>
inline TensorPtr unary_op(const TensorPtr& a, FwdFn fwd, BwdFn bwd) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->values[i]);
    Tensor* ar = a.get();
    return make_op(a->shape, std::move(out), {a}, [ar, bwd](Tensor& node) {
        for (std::size_t i = 0; i < node.values.size(); ++i) {
            ar->grad[i] += bwd(ar->values[i], node.values[i], node.grad[i]);
        }
    });
}

} // namespace detail

inline TensorPtr relu(const TensorPtr& a) {
    return detail::unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double, double g) { return x > 0.0 ? g : 0.0; });
}

inline TensorPtr sigmoid(const TensorPtr& a) {
    return detail::unary_op(
        a,
        [](double x) {
            // Split by sign to avoid overflow in exp.
            if (x >= 0.0) {
                double e = std::exp(-x);
                return 1.0 / (1.0 + e);
            }
            double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double s, double g) {
            return g * (s * (1.0 - s) + detail::sigmoid_backward_fault());
        });
}

inline TensorPtr log1p(const TensorPtr& a) {
    return detail::unary_op(
        a, [](double x) { return std::log1p(x); },
        [](double x, double, double g) { return g / (1.0 + x); });
}

inline TensorPtr exp(const TensorPtr& a) {
    return detail::unary_op(
        a, [](double x) { return std::exp(x); },
        [](double, double out, double g) { return g * out; });
}

inline TensorPtr negate(const TensorPtr& a) {
    return detail::unary_op(
        a, [](double x) { return -x; },
        [](double, double, double g) { return -g; });
}

inline TensorPtr log(const TensorPtr& a) {
    return detail::unary_op(
        a, [](double x) { return std::log(x); },
        [](double x, double, double g) { return g / x; });
}

inline TensorPtr sqrt(const TensorPtr& a) {
    return detail::unary_op(
        a, [](double x) { return std::sqrt(x); },
        [](double, double out, double g) {
            // Floor keeps the zero-weighted subgraph at sqrt(0) finite.
            return g * 0.5 / std::max(out, 1e-150);
        });
}

/// Gradient is 1 inside [lo, hi] and 0 outside.
inline TensorPtr clamp(const TensorPtr& a, double lo, double hi) {
    return detail::unary_op(
        a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double, double g) { return (x >= lo && x <= hi) ? g : 0.0; });
}

/// x^e for constant e (x > 0 expected for fractional e).
inline TensorPtr pow_const(const TensorPtr& a, double e) {
    return detail::unary_op(
        a, [e](double x) { return std::pow(x, e); },
        [e](double x, double, double g) {
            if (e == 0.0) return 0.0;
            return g * e * std::pow(x, e - 1.0);
        });
}

inline TensorPtr add_const(const TensorPtr& a, double c) {
    return detail::unary_op(
        a, [c](double x) { return x + c; },
        [](double, double, double g) { return g; });
}

inline TensorPtr mul_const(const TensorPtr& a, double c) {
    return detail::unary_op(
        a, [c](double x) { return x * c; },
        [c](double, double, double g) { return g * c; });
}

/// Dispatch entry point mirroring the op table; `b` is required for the
/// binary kinds and must be null for the unary ones.
enum class ElementwiseOp { add, sub, mul, relu, sigmoid, log1p, exp, negate };

inline TensorPtr elementwise(ElementwiseOp op, const TensorPtr& a,
                             const TensorPtr& b = nullptr) {
    auto need_b = [&](bool want) {
        if (want && !b) throw ContractError("elementwise: binary op requires two operands");
        if (!want && b) throw ContractError("elementwise: unary op takes one operand");
    };
    switch (op) {
        case ElementwiseOp::add: need_b(true); return add(a, b);
        case ElementwiseOp::sub: need_b(true); return sub(a, b);
        case ElementwiseOp::mul: need_b(true); return mul(a, b);
        case ElementwiseOp::relu: need_b(false); return relu(a);
        case ElementwiseOp::sigmoid: need_b(false); return sigmoid(a);
        case ElementwiseOp::log1p: need_b(false); return log1p(a);
        case ElementwiseOp::exp: need_b(false); return exp(a);
        case ElementwiseOp::negate: need_b(false); return negate(a);
    }
    throw ContractError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Structural and reduction ops
// ---------------------------------------------------------------------------

inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->shape[1] != b->shape[0]) {
        throw ShapeError("matmul inner-dimension mismatch: " + shape_str(a->shape) + " x " +
                         shape_str(b->shape));
    }
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a->values[i * k + l];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += av * b->values[l * n + j];
            }
        }
    }
    Tensor* ar = a.get();
    Tensor* br = b.get();
    return detail::make_op({m, n}, std::move(out), {a, b}, [ar, br, m, k, n](Tensor& node) {
        // dA = G * B^T, dB = A^T * G
        if (ar->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = node.grad[i * n + j];
                    for (std::size_t l = 0; l < k; ++l)
                        ar->grad[i * k + l] += g * br->values[l * n + j];
                }
        }
        if (br->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    const double av = ar->values[i * k + l];
                    for (std::size_t j = 0; j < n; ++j)
                        br->grad[l * n + j] += av * node.grad[i * n + j];
                }
        }
    });
}

/// Same data, new shape (element count preserved).
inline TensorPtr reshape(const TensorPtr& a, Shape new_shape) {
    if (shape_numel(new_shape) != a->numel()) {
        throw ShapeError("reshape " + shape_str(a->shape) + " -> " + shape_str(new_shape) +
                         " changes element count");
    }
    Tensor* ar = a.get();
    return detail::make_op(std::move(new_shape), a->values, {a}, [ar](Tensor& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) ar->grad[i] += node.grad[i];
    });
}

/// Extracts row r of a 2-D tensor as a vector.
inline TensorPtr slice_row(const TensorPtr& a, std::size_t r) {
    if (a->rank() != 2) throw ShapeError("slice_row expects a 2-D tensor, got " + shape_str(a->shape));
    if (r >= a->shape[0]) {
        throw ShapeError("slice_row index " + std::to_string(r) + " out of range for " +
                         shape_str(a->shape));
    }
    const std::size_t cols = a->shape[1];
    std::vector<double> out(a->values.begin() + r * cols, a->values.begin() + (r + 1) * cols);
    Tensor* ar = a.get();
    return detail::make_op({cols}, std::move(out), {a}, [ar, r, cols](Tensor& node) {
        for (std::size_t j = 0; j < cols; ++j) ar->grad[r * cols + j] += node.grad[j];
    });
}

inline TensorPtr sum_all(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->values) s += v;
    Tensor* ar = a.get();
    return detail::make_op({1}, {s}, {a}, [ar](Tensor& node) {
        const double g = node.grad[0];
        for (double& gv : ar->grad) gv += g;
    });
}

/// Sum of a list of scalar nodes.
inline TensorPtr add_scalars(const std::vector<TensorPtr>& terms) {
    if (terms.empty()) throw ContractError("add_scalars: empty term list");
    TensorPtr acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

inline TensorPtr dot(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw ShapeError("dot shape mismatch: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    return sum_all(mul(a, b));
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Tensor*> topo_order(Tensor* root) {
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    // Iterative post-order DFS; graphs can be thousands of nodes deep.
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Tensor* child = node->parents[next_child].get();
            ++next_child;
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

} // namespace detail

/// Reverse-mode sweep from a scalar output. Leaf gradients accumulate
/// across calls (caller resets via zero_grad); interior adjoints are
/// rebuilt from zero on every call.
inline void backward(const TensorPtr& output) {
    if (output->numel() != 1) {
        throw ContractError("backward requires a scalar output, got shape " +
                            shape_str(output->shape));
    }
    if (!output->requires_grad) {
        throw ContractError("backward on a graph with no differentiable leaves");
    }
    std::vector<Tensor*> order = detail::topo_order(output.get());
    for (Tensor* node : order) {
        if (!node->is_leaf()) node->zero_grad();
    }
    output->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

} // namespace specfuse
