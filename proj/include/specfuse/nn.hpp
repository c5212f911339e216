#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "specfuse/tensor.hpp"

namespace specfuse {

/// 2-D convolution in the cross-correlation convention (no kernel flip),
/// zero padding. input [C_in,H,W], kernels [C_out,C_in,k,k].
/// Output spatial dims: H' = floor((H + 2p - k)/stride) + 1.
inline TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernels, std::size_t stride,
                        std::size_t padding) {
    if (input->rank() != 3 || kernels->rank() != 4 || kernels->shape[1] != input->shape[0]) {
        throw ShapeError("conv2d expects input (C_in,H,W) and kernels (C_out,C_in,k,k), got " +
                         shape_str(input->shape) + " and " + shape_str(kernels->shape));
    }
    if (kernels->shape[2] != kernels->shape[3]) {
        throw ShapeError("conv2d kernels must be square, got " + shape_str(kernels->shape));
    }
    if (stride == 0) throw ContractError("conv2d stride must be positive");
    const std::size_t cin = input->shape[0], h = input->shape[1], w = input->shape[2];
    const std::size_t cout = kernels->shape[0], k = kernels->shape[2];
    if (k > h + 2 * padding || k > w + 2 * padding) {
        throw ShapeError("conv2d kernel " + shape_str(kernels->shape) +
                         " larger than padded input " + shape_str(input->shape) + " with padding " +
                         std::to_string(padding));
    }
    const std::size_t ho = (h + 2 * padding - k) / stride + 1;
    const std::size_t wo = (w + 2 * padding - k) / stride + 1;

    std::vector<double> out(cout * ho * wo, 0.0);
    const double* in = input->values.data();
    const double* kn = kernels->values.data();
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                          static_cast<std::ptrdiff_t>(padding);
                const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                          static_cast<std::ptrdiff_t>(padding);
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const std::ptrdiff_t y = y0 + static_cast<std::ptrdiff_t>(ky);
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::ptrdiff_t x = x0 + static_cast<std::ptrdiff_t>(kx);
                            if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += in[(ci * h + y) * w + x] * kn[((co * cin + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }

    Tensor* ir = input.get();
    Tensor* kr = kernels.get();
    return detail::make_op(
        {cout, ho, wo}, std::move(out), {input, kernels},
        [ir, kr, cin, h, w, cout, k, ho, wo, stride, padding](Tensor& node) {
            const double* in = ir->values.data();
            const double* kn = kr->values.data();
            for (std::size_t co = 0; co < cout; ++co) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const double g = node.grad[(co * ho + oy) * wo + ox];
                        if (g == 0.0) continue;
                        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                                  static_cast<std::ptrdiff_t>(padding);
                        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                                  static_cast<std::ptrdiff_t>(padding);
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            for (std::size_t ky = 0; ky < k; ++ky) {
                                const std::ptrdiff_t y = y0 + static_cast<std::ptrdiff_t>(ky);
                                if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t kx = 0; kx < k; ++kx) {
                                    const std::ptrdiff_t x = x0 + static_cast<std::ptrdiff_t>(kx);
                                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                                    const std::size_t ii = (ci * h + y) * w + x;
                                    const std::size_t ki = ((co * cin + ci) * k + ky) * k + kx;
                                    if (ir->requires_grad) ir->grad[ii] += g * kn[ki];
                                    if (kr->requires_grad) kr->grad[ki] += g * in[ii];
                                }
                            }
                        }
                    }
                }
            }
        });
}

enum class PoolKind { max, avg };

/// Spatial pooling without padding; H' = floor((H - window)/stride) + 1.
/// Max pooling routes the gradient to the first (row-major) maximum.
inline TensorPtr pool2d(PoolKind kind, const TensorPtr& input, std::size_t window,
                        std::size_t stride) {
    if (input->rank() != 3) {
        throw ShapeError("pool2d expects (C,H,W), got " + shape_str(input->shape));
    }
    if (window == 0 || stride == 0) throw ContractError("pool2d window and stride must be positive");
    const std::size_t c = input->shape[0], h = input->shape[1], w = input->shape[2];
    if (window > h || window > w) {
        throw ShapeError("pool2d window " + std::to_string(window) + " exceeds spatial extent of " +
                         shape_str(input->shape));
    }
    const std::size_t ho = (h - window) / stride + 1;
    const std::size_t wo = (w - window) / stride + 1;

    std::vector<double> out(c * ho * wo);
    std::vector<std::size_t> argmax;
    if (kind == PoolKind::max) argmax.resize(out.size());
    const double* in = input->values.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::size_t oi = (ci * ho + oy) * wo + ox;
                if (kind == PoolKind::avg) {
                    double acc = 0.0;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx)
                            acc += in[(ci * h + oy * stride + ky) * w + ox * stride + kx];
                    out[oi] = acc / static_cast<double>(window * window);
                } else {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            const std::size_t ii =
                                (ci * h + oy * stride + ky) * w + ox * stride + kx;
                            if (in[ii] > best) {
                                best = in[ii];
                                best_i = ii;
                            }
                        }
                    out[oi] = best;
                    argmax[oi] = best_i;
                }
            }
        }
    }

    Tensor* ir = input.get();
    return detail::make_op(
        {c, ho, wo}, std::move(out), {input},
        [ir, kind, c, h, w, ho, wo, window, stride, argmax = std::move(argmax)](Tensor& node) {
            if (kind == PoolKind::max) {
                for (std::size_t oi = 0; oi < node.grad.size(); ++oi)
                    ir->grad[argmax[oi]] += node.grad[oi];
            } else {
                const double scale = 1.0 / static_cast<double>(window * window);
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t oy = 0; oy < ho; ++oy)
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const double g = node.grad[(ci * ho + oy) * wo + ox] * scale;
                            for (std::size_t ky = 0; ky < window; ++ky)
                                for (std::size_t kx = 0; kx < window; ++kx)
                                    ir->grad[(ci * h + oy * stride + ky) * w + ox * stride + kx] += g;
                        }
            }
        });
}

/// Per-channel spatial mean: (C,H,W) -> (C).
inline TensorPtr global_avg_pool(const TensorPtr& input) {
    if (input->rank() != 3) {
        throw ShapeError("global_avg_pool expects (C,H,W), got " + shape_str(input->shape));
    }
    const std::size_t c = input->shape[0], hw = input->shape[1] * input->shape[2];
    std::vector<double> out(c, 0.0);
    for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += input->values[ci * hw + i];
        out[ci] = acc / static_cast<double>(hw);
    }
    Tensor* ir = input.get();
    return detail::make_op({c}, std::move(out), {input}, [ir, c, hw](Tensor& node) {
        const double scale = 1.0 / static_cast<double>(hw);
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double g = node.grad[ci] * scale;
            for (std::size_t i = 0; i < hw; ++i) ir->grad[ci * hw + i] += g;
        }
    });
}

/// Per-channel spatial max: (C,H,W) -> (C); first row-major max wins ties.
inline TensorPtr global_max_pool(const TensorPtr& input) {
    if (input->rank() != 3) {
        throw ShapeError("global_max_pool expects (C,H,W), got " + shape_str(input->shape));
    }
    const std::size_t c = input->shape[0], hw = input->shape[1] * input->shape[2];
    std::vector<double> out(c);
    std::vector<std::size_t> argmax(c);
    for (std::size_t ci = 0; ci < c; ++ci) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < hw; ++i) {
            const double v = input->values[ci * hw + i];
            if (v > best) {
                best = v;
                best_i = ci * hw + i;
            }
        }
        out[ci] = best;
        argmax[ci] = best_i;
    }
    Tensor* ir = input.get();
    return detail::make_op({c}, std::move(out), {input},
                           [ir, c, argmax = std::move(argmax)](Tensor& node) {
                               for (std::size_t ci = 0; ci < c; ++ci)
                                   ir->grad[argmax[ci]] += node.grad[ci];
                           });
}

/// Channel concatenation: (C1,H,W) + (C2,H,W) -> (C1+C2,H,W).
inline TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 3 || b->rank() != 3 || a->shape[1] != b->shape[1] ||
        a->shape[2] != b->shape[2]) {
        throw ShapeError("concat_channels spatial mismatch: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> out;
    out.reserve(a->numel() + b->numel());
    out.insert(out.end(), a->values.begin(), a->values.end());
    out.insert(out.end(), b->values.begin(), b->values.end());
    Tensor* ar = a.get();
    Tensor* br = b.get();
    const std::size_t na = a->numel();
    return detail::make_op({a->shape[0] + b->shape[0], a->shape[1], a->shape[2]}, std::move(out),
                           {a, b}, [ar, br, na](Tensor& node) {
                               if (ar->requires_grad)
                                   for (std::size_t i = 0; i < na; ++i) ar->grad[i] += node.grad[i];
                               if (br->requires_grad)
                                   for (std::size_t i = na; i < node.grad.size(); ++i)
                                       br->grad[i - na] += node.grad[i];
                           });
}

/// Fully connected layer on a column vector: W (out,in) x v (in,1) + b (out,1).
inline TensorPtr dense(const TensorPtr& weight, const TensorPtr& v, const TensorPtr& bias) {
    return add(matmul(weight, v), bias);
}

} // namespace specfuse
