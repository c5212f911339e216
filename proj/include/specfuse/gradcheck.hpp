#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "specfuse/datasynth.hpp"
#include "specfuse/losses.hpp"
#include "specfuse/model.hpp"
#include "specfuse/nn.hpp"
#include "specfuse/tensor.hpp"

namespace specfuse {

// ---------------------------------------------------------------------------
// Central finite-difference machinery. The numeric side never touches the
// backward pass: it re-runs the forward build with perturbed leaves, so it
// stays an independent oracle for every analytic gradient.
// ---------------------------------------------------------------------------

namespace gradcheck_detail {

constexpr double kStep = 1e-5;

// Scaled error: relative for large gradients, absolute for small ones.
inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

struct LeafSpec {
    Shape shape;
    double lo = -2.0;
    double hi = 2.0;
    bool check = true; // false: random constant input, gradient not compared
};

using Builder = std::function<TensorPtr(const std::vector<TensorPtr>&)>;

/// Max scaled error between backward() and central differences over
/// `trials` random draws of the leaves.
inline double check_gradient(const std::vector<LeafSpec>& specs, const Builder& build, Rng& rng,
                             int trials) {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::vector<TensorPtr> leaves;
        leaves.reserve(specs.size());
        for (const LeafSpec& s : specs) {
            leaves.push_back(Tensor::random_uniform(s.shape, rng, s.lo, s.hi, s.check));
        }
        TensorPtr out = build(leaves);
        backward(out);
        for (std::size_t li = 0; li < leaves.size(); ++li) {
            if (!specs[li].check) continue;
            TensorPtr leaf = leaves[li];
            const std::vector<double> analytic = leaf->grad;
            for (std::size_t i = 0; i < leaf->numel(); ++i) {
                const double saved = leaf->values[i];
                leaf->values[i] = saved + kStep;
                const double fp = build(leaves)->scalar_value();
                leaf->values[i] = saved - kStep;
                const double fm = build(leaves)->scalar_value();
                leaf->values[i] = saved;
                const double numeric = (fp - fm) / (2.0 * kStep);
                worst = std::max(worst, rel_error(analytic[i], numeric));
            }
        }
    }
    return worst;
}

/// FD check against existing tensors (e.g. a ParameterSet), sampling up to
/// `fraction` of each tensor's coordinates (at least one per tensor).
inline double check_gradient_existing(const std::vector<TensorPtr>& leaves,
                                      const std::function<TensorPtr()>& build, Rng& rng,
                                      double fraction) {
    for (const TensorPtr& l : leaves) l->zero_grad();
    TensorPtr out = build();
    backward(out);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const TensorPtr& l : leaves) analytic.push_back(l->grad);

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        TensorPtr leaf = leaves[li];
        const std::size_t n = leaf->numel();
        std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                         std::ceil(fraction * static_cast<double>(n))));
        for (std::size_t c = 0; c < count; ++c) {
            const std::size_t i = static_cast<std::size_t>(rng.uniform_int(n));
            const double saved = leaf->values[i];
            leaf->values[i] = saved + kStep;
            const double fp = build()->scalar_value();
            leaf->values[i] = saved - kStep;
            const double fm = build()->scalar_value();
            leaf->values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * kStep);
            worst = std::max(worst, rel_error(analytic[li][i], numeric));
        }
        leaf->zero_grad();
    }
    return worst;
}

/// Random-weight readout turning a tensor into a scalar; catches indexing
/// bugs that a plain sum would hide.
inline TensorPtr readout(const TensorPtr& t, const TensorPtr& weights) {
    return sum_all(mul(t, weights));
}

} // namespace gradcheck_detail

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

enum class GradCheckScope { ops, losses, model, all };

inline GradCheckScope gradcheck_scope_from(const std::string& s) {
    if (s == "ops") return GradCheckScope::ops;
    if (s == "losses") return GradCheckScope::losses;
    if (s == "model") return GradCheckScope::model;
    if (s == "all") return GradCheckScope::all;
    throw ConfigError("unknown gradcheck scope '" + s + "' (expected ops, losses, model or all)");
}

struct GradCheckRow {
    std::string target;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;

    bool all_pass() const {
        for (const auto& r : rows) {
            if (!r.pass) return false;
        }
        return !rows.empty();
    }
};

inline void print_gradcheck(const GradCheckReport& report, std::ostream& os) {
    for (const auto& r : report.rows) {
        os << (r.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(28) << r.target
           << "  max_rel_err=" << std::scientific << std::setprecision(3) << r.max_rel_err
           << "  tol=" << r.tolerance << std::defaultfloat << '\n';
    }
}

namespace gradcheck_detail {

constexpr int kTrials = 20;
constexpr double kOpsTol = 1e-4;
constexpr double kLossTol = 1e-5;
constexpr double kModelTol = 1e-4;
constexpr double kFullModelTol = 1e-3;

inline void add_ops_rows(GradCheckReport& report, std::uint64_t seed) {
    auto check = [&](const std::string& name, const std::vector<LeafSpec>& specs,
                     const Builder& build, double tol = kOpsTol) {
        Rng rng = Rng::stream(seed, "gradcheck." + name);
        const double err = check_gradient(specs, build, rng, kTrials);
        report.rows.push_back({name, err, tol, err < tol});
    };

    const Shape s334{3, 3, 4};
    auto l = [](Shape sh, double lo = -2.0, double hi = 2.0, bool chk = true) {
        return LeafSpec{std::move(sh), lo, hi, chk};
    };

    check("ops.add", {l(s334), l(s334), l(s334, -1, 1, false)},
          [](const auto& v) { return readout(add(v[0], v[1]), v[2]); });
    check("ops.add_broadcast", {l({3, 4, 4}), l({3, 1, 1}), l({3, 4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(add(v[0], v[1]), v[2]); });
    check("ops.sub", {l(s334), l(s334), l(s334, -1, 1, false)},
          [](const auto& v) { return readout(sub(v[0], v[1]), v[2]); });
    check("ops.mul", {l(s334), l(s334), l(s334, -1, 1, false)},
          [](const auto& v) { return readout(mul(v[0], v[1]), v[2]); });
    check("ops.mul_broadcast", {l({4, 3, 3}), l({4, 1, 1}), l({4, 3, 3}, -1, 1, false)},
          [](const auto& v) { return readout(mul(v[0], v[1]), v[2]); });
    check("ops.div", {l(s334), l(s334, 0.5, 2.0), l(s334, -1, 1, false)},
          [](const auto& v) { return readout(div(v[0], v[1]), v[2]); });
    check("ops.relu", {l({4, 4}), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(relu(v[0]), v[1]); });
    check("ops.sigmoid", {l({4, 4}), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(sigmoid(v[0]), v[1]); });
    check("ops.log1p", {l({4, 4}, -0.9, 2.0), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(log1p(v[0]), v[1]); });
    check("ops.exp", {l({4, 4}), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(exp(v[0]), v[1]); });
    check("ops.negate", {l({4, 4}), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(negate(v[0]), v[1]); });
    check("ops.log", {l({4, 4}, 0.1, 3.0), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(log(v[0]), v[1]); });
    check("ops.sqrt", {l({4, 4}, 0.1, 4.0), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(sqrt(v[0]), v[1]); });
    check("ops.pow_const", {l({4, 4}, 0.1, 2.0), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(pow_const(v[0], 2.5), v[1]); });
    check("ops.clamp", {l({4, 4}), l({4, 4}, -1, 1, false)},
          [](const auto& v) { return readout(clamp(v[0], -1.0, 1.0), v[1]); });
    check("ops.matmul", {l({3, 4}), l({4, 2}), l({3, 2}, -1, 1, false)},
          [](const auto& v) { return readout(matmul(v[0], v[1]), v[2]); });
    check("ops.conv2d", {l({2, 5, 5}), l({3, 2, 3, 3}), l({3, 3, 3}, -1, 1, false)},
          [](const auto& v) { return readout(conv2d(v[0], v[1], 1, 0), v[2]); });
    check("ops.conv2d_stride_pad", {l({2, 4, 4}), l({3, 2, 3, 3}), l({3, 2, 2}, -1, 1, false)},
          [](const auto& v) { return readout(conv2d(v[0], v[1], 2, 1), v[2]); });
    check("ops.pool2d_max", {l({2, 4, 4}), l({2, 2, 2}, -1, 1, false)},
          [](const auto& v) { return readout(pool2d(PoolKind::max, v[0], 2, 2), v[1]); });
    check("ops.pool2d_avg", {l({1, 5, 5}), l({1, 3, 3}, -1, 1, false)},
          [](const auto& v) { return readout(pool2d(PoolKind::avg, v[0], 3, 1), v[1]); });
    check("ops.global_avg_pool", {l({3, 4, 4}), l({3}, -1, 1, false)},
          [](const auto& v) { return readout(global_avg_pool(v[0]), v[1]); });
    check("ops.global_max_pool", {l({3, 4, 4}), l({3}, -1, 1, false)},
          [](const auto& v) { return readout(global_max_pool(v[0]), v[1]); });
    check("ops.concat_channels", {l({2, 3, 3}), l({3, 3, 3}), l({5, 3, 3}, -1, 1, false)},
          [](const auto& v) { return readout(concat_channels(v[0], v[1]), v[2]); });
    check("ops.reshape", {l({3, 4}), l({12}, -1, 1, false)},
          [](const auto& v) { return readout(reshape(v[0], {12}), v[1]); });
    check("ops.slice_row", {l({4, 5}), l({5}, -1, 1, false)},
          [](const auto& v) { return readout(slice_row(v[0], 2), v[1]); });
    check("ops.sum_all", {l({3, 4})}, [](const auto& v) { return sum_all(v[0]); });
    // Six-op composite: matmul -> sigmoid -> mul(relu(add)) -> sum.
    check("ops.composite6", {l({3, 3}), l({3, 3}), l({3, 3}), l({3, 3})}, [](const auto& v) {
        return sum_all(mul(sigmoid(matmul(v[0], v[1])), relu(add(v[2], v[3]))));
    });
}

inline void add_loss_rows(GradCheckReport& report, std::uint64_t seed) {
    auto check = [&](const std::string& name, const std::vector<LeafSpec>& specs,
                     const Builder& build) {
        Rng rng = Rng::stream(seed, "gradcheck." + name);
        const double err = check_gradient(specs, build, rng, kTrials);
        report.rows.push_back({name, err, kLossTol, err < kLossTol});
    };

    const std::vector<int> labels{1, 0, 1, 1, 0};

    {
        std::vector<LeafSpec> specs(5, LeafSpec{{1}, 0.05, 0.95, true});
        check("loss.focal", specs, [labels](const auto& v) {
            return focal_loss({v.begin(), v.end()}, labels, 0.25, 2.0);
        });
    }
    {
        // Raw embeddings are normalized inside the build, exactly as the
        // model does before SupCon.
        std::vector<LeafSpec> specs(5, LeafSpec{{6}, -2.0, 2.0, true});
        check("loss.supcon", specs, [labels](const auto& v) {
            std::vector<TensorPtr> z;
            for (const auto& raw : v) {
                TensorPtr n = sqrt(sum_all(mul(raw, raw)));
                z.push_back(div(raw, n));
            }
            return supcon_loss(z, labels, 0.1);
        });
    }
    {
        std::vector<LeafSpec> specs(3, LeafSpec{{4}, -2.0, 2.0, true});
        specs.push_back(LeafSpec{{2, 4}, -2.0, 2.0, true});
        check("loss.f_center", specs, [](const auto& v) {
            ClassCenters centers{v[3]};
            return f_center_loss({v[0], v[1], v[2]}, {1, 0, 1}, centers, 0.5, 1.0);
        });
    }
    {
        // Composite loss with gradients flowing to p (via sigmoid), z (via
        // normalization), the frequency features and the centers.
        std::vector<LeafSpec> specs;
        for (int i = 0; i < 4; ++i) specs.push_back(LeafSpec{{1}, -2.0, 2.0, true}); // logits
        for (int i = 0; i < 4; ++i) specs.push_back(LeafSpec{{6}, -2.0, 2.0, true}); // raw z
        for (int i = 0; i < 4; ++i) specs.push_back(LeafSpec{{3}, -2.0, 2.0, true}); // f_fre
        specs.push_back(LeafSpec{{2, 3}, -2.0, 2.0, true});                          // centers
        check("loss.fsc_total", specs, [](const auto& v) {
            const std::vector<int> y{1, 0, 1, 0};
            std::vector<TensorPtr> p, z, f;
            for (int i = 0; i < 4; ++i) p.push_back(sigmoid(v[i]));
            for (int i = 4; i < 8; ++i) {
                TensorPtr n = sqrt(sum_all(mul(v[i], v[i])));
                z.push_back(div(v[i], n));
            }
            for (int i = 8; i < 12; ++i) f.push_back(v[i]);
            ClassCenters centers{v[12]};
            LossWeights w;
            return fsc_total(p, z, f, y, centers, w).total;
        });
    }
}

inline void add_model_rows(GradCheckReport& report, std::uint64_t seed) {
    // Toy architecture small enough for dense FD sweeps.
    ModelConfig toy;
    toy.image_size = 8;
    toy.rgb = {{4, 6}, {2, 2}};
    toy.fre = {{3, 5}, {2, 2}};
    toy.attention_reduction = 1;
    toy.head_hidden = 4;
    LossWeights lw;
    ParameterSet params = init_detector_params(toy, lw, seed);
    std::vector<TensorPtr> param_leaves;
    for (const auto& [name, t] : params) param_leaves.push_back(t);

    auto check_existing = [&](const std::string& name, const std::vector<TensorPtr>& leaves,
                              const std::function<TensorPtr()>& build, double fraction,
                              double tol) {
        Rng rng = Rng::stream(seed, "gradcheck." + name);
        const double err = check_gradient_existing(leaves, build, rng, fraction);
        report.rows.push_back({name, err, tol, err < tol});
    };

    Rng data_rng = Rng::stream(seed, "gradcheck.model-data");
    TensorPtr rgb_in = Tensor::random_uniform({3, 8, 8}, data_rng, 0.0, 1.0);
    TensorPtr fre_in = Tensor::random_uniform({1, 8, 8}, data_rng, 0.0, 1.0);

    check_existing("model.rgb_branch", param_leaves, [&]() {
        TensorPtr out = rgb_branch(rgb_in, params, toy);
        return mul_const(sum_all(out), 1.0 / static_cast<double>(out->numel()));
    }, 1.0, kModelTol);

    check_existing("model.fre_branch", param_leaves, [&]() {
        TensorPtr out = fre_branch(fre_in, params, toy);
        return mul_const(sum_all(out), 1.0 / static_cast<double>(out->numel()));
    }, 1.0, kModelTol);

    TensorPtr concat_in = Tensor::random_uniform({toy.fused_channels(), 2, 2}, data_rng, -1.0, 1.0);
    TensorPtr attn_w = Tensor::random_uniform({toy.fused_channels()}, data_rng, -1.0, 1.0);
    check_existing("model.channel_attention", param_leaves, [&]() {
        return sum_all(mul(channel_attention(concat_in, params, toy), attn_w));
    }, 1.0, kModelTol);

    TensorPtr frgb = Tensor::random_uniform({toy.rgb_channels(), 2, 2}, data_rng, -1.0, 1.0);
    TensorPtr ffre = Tensor::random_uniform({toy.fre_channels(), 2, 2}, data_rng, -1.0, 1.0);
    TensorPtr fuse_w = Tensor::random_uniform({toy.fused_channels()}, data_rng, -1.0, 1.0);
    check_existing("model.fuse", param_leaves, [&]() {
        FusedFeature fused = fuse(frgb, ffre, params, toy);
        return sum_all(mul(fused.embedding, fuse_w));
    }, 1.0, kModelTol);

    check_existing("model.classify", param_leaves, [&]() {
        FusedFeature fused = fuse(frgb, ffre, params, toy);
        return sum_all(classify(fused, params, toy));
    }, 1.0, kModelTol);

    // Full desk-scale model, L_FSC over a small mixed batch, 1% of the
    // parameter coordinates sampled.
    ModelConfig desk;
    LossWeights desk_lw;
    ParameterSet desk_params = init_detector_params(desk, desk_lw, seed + 1);
    std::vector<TensorPtr> desk_leaves;
    for (const auto& [name, t] : desk_params) desk_leaves.push_back(t);
    CorpusSpec corpus;
    corpus.samples_per_domain_per_class = 2;
    std::vector<ImageSample> batch = generate_domain_samples(corpus, Domain::t2i, 0, 2);
    check_existing("model.forward_full_fsc", desk_leaves, [&]() {
        std::vector<TensorPtr> p, z, f;
        std::vector<int> y;
        for (const ImageSample& s : batch) {
            ForwardResult fr = forward(s, desk_params, desk);
            p.push_back(fr.p);
            z.push_back(fr.z);
            f.push_back(fr.f_fre_vec);
            y.push_back(s.label);
        }
        ClassCenters centers{desk_params.at("centers")};
        return fsc_total(p, z, f, y, centers, desk_lw).total;
    }, 0.01, kFullModelTol);
}

} // namespace gradcheck_detail

/// Runs the finite-difference suites for the requested scope. Fails are
/// report content, not exceptions.
inline GradCheckReport run_gradcheck(GradCheckScope scope, std::uint64_t seed = 20250811) {
    GradCheckReport report;
    if (scope == GradCheckScope::ops || scope == GradCheckScope::all) {
        gradcheck_detail::add_ops_rows(report, seed);
    }
    if (scope == GradCheckScope::losses || scope == GradCheckScope::all) {
        gradcheck_detail::add_loss_rows(report, seed);
    }
    if (scope == GradCheckScope::model || scope == GradCheckScope::all) {
        gradcheck_detail::add_model_rows(report, seed);
    }
    return report;
}

} // namespace specfuse
