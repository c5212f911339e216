#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specfuse/image.hpp"
#include "specfuse/losses.hpp"
#include "specfuse/nn.hpp"
#include "specfuse/optim.hpp"
#include "specfuse/spectral.hpp"
#include "specfuse/tensor.hpp"

namespace specfuse {

/// A plain conv/bias/ReLU stack: one 3x3 convolution per stage.
struct BackboneConfig {
    std::vector<std::size_t> stage_channels;
    std::vector<std::size_t> strides;

    std::size_t out_channels() const { return stage_channels.back(); }

    std::size_t out_spatial(std::size_t input_size) const {
        std::size_t s = input_size;
        for (std::size_t st : strides) {
            if (st == 0 || s % st != 0) {
                throw ConfigError("backbone stride " + std::to_string(st) +
                                  " does not evenly divide spatial size " + std::to_string(s));
            }
            s /= st;
        }
        return s;
    }

    void validate(const std::string& which) const {
        if (stage_channels.empty() || stage_channels.size() != strides.size()) {
            throw ConfigError("model." + which +
                              ": stage_channels and strides must be nonempty and equal length");
        }
        for (std::size_t c : stage_channels) {
            if (c == 0) throw ConfigError("model." + which + ": stage channel counts must be positive");
        }
    }
};

/// Architecture of the dual-branch detector. The RGB branch is wider than
/// the frequency branch (64 vs 32 channels by default, echoing the
/// 2048-vs-512 asymmetry of full-size backbones).
struct ModelConfig {
    std::size_t image_size = 32;
    BackboneConfig rgb{{16, 32, 64}, {2, 2, 2}};
    BackboneConfig fre{{8, 16, 32}, {2, 2, 2}};
    std::size_t attention_reduction = 4;
    std::size_t head_hidden = 32;
    bool center_dc = true;

    std::size_t rgb_channels() const { return rgb.out_channels(); }
    std::size_t fre_channels() const { return fre.out_channels(); }
    std::size_t fused_channels() const { return rgb_channels() + fre_channels(); }
    std::size_t spatial() const { return rgb.out_spatial(image_size); }

    void validate() const {
        if (!is_power_of_two(image_size)) {
            throw ConfigError("model.image_size must be a power of two");
        }
        rgb.validate("rgb");
        fre.validate("fre");
        if (rgb.out_spatial(image_size) != fre.out_spatial(image_size)) {
            throw ConfigError("model: rgb and fre branches must emit identical spatial dims (" +
                              std::to_string(rgb.out_spatial(image_size)) + " vs " +
                              std::to_string(fre.out_spatial(image_size)) + ")");
        }
        if (attention_reduction == 0 || fused_channels() % attention_reduction != 0) {
            throw ConfigError("model.attention_reduction " + std::to_string(attention_reduction) +
                              " must divide the fused channel count " +
                              std::to_string(fused_channels()));
        }
        if (head_hidden == 0) throw ConfigError("model.head_hidden must be positive");
    }
};

namespace detail {

inline TensorPtr init_weight(Shape shape, std::size_t fan_in, Rng rng) {
    // Uniform He-style init: variance 2/fan_in, which preserves activation
    // scale through the ReLU stacks (plain 1/fan_in uniform decays the
    // signal enough that training collapses to a constant predictor).
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::random_uniform(std::move(shape), rng, -s, s, /*requires_grad=*/true);
}

} // namespace detail

/// Creates every trainable tensor of the detector, including the class
/// centers used by the frequency center loss. Weights are uniform in
/// [-sqrt(1/fan_in), sqrt(1/fan_in)] from per-name streams; biases start
/// at zero; the fake center starts offset from the real one so the center
/// margin term does not begin at a coincident-centers saddle.
inline ParameterSet init_detector_params(const ModelConfig& cfg, const LossWeights& loss,
                                         std::uint64_t seed) {
    cfg.validate();
    loss.validate();
    ParameterSet params;

    auto add_backbone = [&](const std::string& prefix, const BackboneConfig& bb,
                            std::size_t in_channels) {
        std::size_t cin = in_channels;
        for (std::size_t s = 0; s < bb.stage_channels.size(); ++s) {
            const std::size_t cout = bb.stage_channels[s];
            const std::string stage = prefix + ".stage" + std::to_string(s);
            params.add(stage + ".weight",
                       detail::init_weight({cout, cin, 3, 3}, cin * 9,
                                           Rng::stream(seed, stage + ".weight")));
            params.add(stage + ".bias", Tensor::zeros({cout, 1, 1}, /*requires_grad=*/true));
            cin = cout;
        }
    };
    add_backbone("rgb", cfg.rgb, 3);
    add_backbone("fre", cfg.fre, 1);

    const std::size_t c = cfg.fused_channels();
    const std::size_t cr = c / cfg.attention_reduction;
    params.add("attn.mlp_w1",
               detail::init_weight({cr, c}, c, Rng::stream(seed, "attn.mlp_w1")));
    params.add("attn.mlp_w2",
               detail::init_weight({c, cr}, cr, Rng::stream(seed, "attn.mlp_w2")));

    params.add("head.fc1.weight",
               detail::init_weight({cfg.head_hidden, c}, c, Rng::stream(seed, "head.fc1.weight")));
    params.add("head.fc1.bias", Tensor::zeros({cfg.head_hidden, 1}, true));
    params.add("head.fc2.weight",
               detail::init_weight({1, cfg.head_hidden}, cfg.head_hidden,
                                   Rng::stream(seed, "head.fc2.weight")));
    params.add("head.fc2.bias", Tensor::zeros({1, 1}, true));

    const std::size_t cf = cfg.fre_channels();
    Rng center_rng = Rng::stream(seed, "centers");
    const double cs = std::sqrt(1.0 / static_cast<double>(cf));
    std::vector<double> centers(2 * cf);
    for (std::size_t i = 0; i < cf; ++i) centers[i] = center_rng.uniform(-cs, cs);
    const double offset = loss.margin / std::sqrt(static_cast<double>(cf));
    for (std::size_t i = 0; i < cf; ++i) centers[cf + i] = center_rng.uniform(-cs, cs) + offset;
    params.add("centers", Tensor::create({2, cf}, std::move(centers), true));

    return params;
}

namespace detail {

inline TensorPtr backbone_forward(const BackboneConfig& bb, const std::string& prefix,
                                  const TensorPtr& input, const ParameterSet& params) {
    TensorPtr x = input;
    for (std::size_t s = 0; s < bb.stage_channels.size(); ++s) {
        const std::string stage = prefix + ".stage" + std::to_string(s);
        x = conv2d(x, params.at(stage + ".weight"), bb.strides[s], /*padding=*/1);
        x = relu(add(x, params.at(stage + ".bias")));
    }
    return x;
}

} // namespace detail

/// RGB backbone: (3,H,W) -> (C_rgb,h,w).
inline TensorPtr rgb_branch(const TensorPtr& image_tensor, const ParameterSet& params,
                            const ModelConfig& cfg) {
    if (image_tensor->rank() != 3 || image_tensor->shape[0] != 3 ||
        image_tensor->shape[1] != cfg.image_size || image_tensor->shape[2] != cfg.image_size) {
        throw ShapeError("rgb_branch expects (3," + std::to_string(cfg.image_size) + "," +
                         std::to_string(cfg.image_size) + "), got " +
                         shape_str(image_tensor->shape));
    }
    return detail::backbone_forward(cfg.rgb, "rgb", image_tensor, params);
}

/// Frequency backbone: (1,H,W) log-magnitude spectrum -> (C_fre,h,w).
inline TensorPtr fre_branch(const TensorPtr& spectrum_tensor, const ParameterSet& params,
                            const ModelConfig& cfg) {
    if (spectrum_tensor->rank() != 3 || spectrum_tensor->shape[0] != 1 ||
        spectrum_tensor->shape[1] != cfg.image_size || spectrum_tensor->shape[2] != cfg.image_size) {
        throw ShapeError("fre_branch expects (1," + std::to_string(cfg.image_size) + "," +
                         std::to_string(cfg.image_size) + "), got " +
                         shape_str(spectrum_tensor->shape));
    }
    return detail::backbone_forward(cfg.fre, "fre", spectrum_tensor, params);
}

/// Shared two-layer MLP of the attention module applied to a pooled
/// descriptor: w2 * relu(w1 * v).
inline TensorPtr attention_mlp(const TensorPtr& vec, const ParameterSet& params) {
    const TensorPtr& w1 = params.at("attn.mlp_w1");
    const TensorPtr& w2 = params.at("attn.mlp_w2");
    TensorPtr col = reshape(vec, {vec->numel(), 1});
    return reshape(matmul(w2, relu(matmul(w1, col))), {w2->shape[0]});
}

/// CBAM-style channel attention over a concatenated feature map:
///   M_c = sigmoid(MLP(avgpool(F)) + MLP(maxpool(F))), entries in (0,1).
inline TensorPtr channel_attention(const TensorPtr& concat_map, const ParameterSet& params,
                                   const ModelConfig& cfg) {
    if (concat_map->rank() != 3 || concat_map->shape[0] != cfg.fused_channels()) {
        throw ShapeError("channel_attention expects (" + std::to_string(cfg.fused_channels()) +
                         ",h,w), got " + shape_str(concat_map->shape));
    }
    TensorPtr f_avg = global_avg_pool(concat_map);
    TensorPtr f_max = global_max_pool(concat_map);
    return sigmoid(add(attention_mlp(f_avg, params), attention_mlp(f_max, params)));
}

/// Attention-weighted fused embedding with the applied gate kept for
/// inspection.
struct FusedFeature {
    TensorPtr embedding; // (C), GAP of the gated concatenation
    TensorPtr attention; // (C), the gate that was applied
};

/// Concatenates the branch maps, gates channels by M_c and pools.
/// `attention_override` substitutes a constant gate (test hook; also how
/// the attention ablation runs with M_c fixed to all-ones).
inline FusedFeature fuse(const TensorPtr& f_rgb, const TensorPtr& f_fre,
                         const ParameterSet& params, const ModelConfig& cfg,
                         const std::optional<std::vector<double>>& attention_override = {}) {
    TensorPtr cat = concat_channels(f_rgb, f_fre);
    TensorPtr gate;
    if (attention_override) {
        if (attention_override->size() != cat->shape[0]) {
            throw ShapeError("attention override length " +
                             std::to_string(attention_override->size()) +
                             " does not match channel count " + std::to_string(cat->shape[0]));
        }
        gate = Tensor::create({cat->shape[0]}, *attention_override);
    } else {
        gate = channel_attention(cat, params, cfg);
    }
    TensorPtr gated = mul(cat, reshape(gate, {cat->shape[0], 1, 1}));
    return FusedFeature{global_avg_pool(gated), gate};
}

/// Two fully connected layers (hidden ReLU, output sigmoid) mapping the
/// fused embedding to the probability that the input is fake.
inline TensorPtr classify(const FusedFeature& feature, const ParameterSet& params,
                          const ModelConfig&) {
    const TensorPtr& w1 = params.at("head.fc1.weight");
    if (feature.embedding->numel() != w1->shape[1]) {
        throw ShapeError("classify: embedding length " + std::to_string(feature.embedding->numel()) +
                         " does not match head input " + std::to_string(w1->shape[1]));
    }
    TensorPtr col = reshape(feature.embedding, {feature.embedding->numel(), 1});
    TensorPtr hidden = relu(dense(w1, col, params.at("head.fc1.bias")));
    TensorPtr logit = dense(params.at("head.fc2.weight"), hidden, params.at("head.fc2.bias"));
    return reshape(sigmoid(logit), {1});
}

struct ForwardOptions {
    bool disable_fre_branch = false; // zero frequency map, no center-loss tap
    bool disable_attention = false;  // M_c fixed to all-ones
    std::optional<std::vector<double>> attention_override; // test hook
};

struct ForwardResult {
    TensorPtr p;         // scalar fake probability
    TensorPtr z;         // (C) L2-normalized fused embedding
    TensorPtr f_fre_vec; // (C_fre) GAP of the frequency map, pre-fusion
    TensorPtr attention; // (C) applied gate
    // Intermediates retained for ablation-isolation probes.
    TensorPtr rgb_map;
    TensorPtr fre_map;
    TensorPtr embedding; // pre-normalization fused embedding
};

/// Full single-sample pipeline: spectral transform, both branches,
/// attention fusion, classification, plus the embedding taps the losses
/// consume. Deterministic for fixed inputs and parameters.
inline ForwardResult forward(const ImageSample& image, const ParameterSet& params,
                             const ModelConfig& cfg, const ForwardOptions& opts = {}) {
    ForwardResult r;
    r.rgb_map = rgb_branch(image_to_tensor(image), params, cfg);

    if (opts.disable_fre_branch) {
        const std::size_t hw = cfg.spatial();
        r.fre_map = Tensor::zeros({cfg.fre_channels(), hw, hw});
    } else {
        TensorPtr gray = to_grayscale(image);
        SpectrumMap spec = log_magnitude(fft2d(gray), cfg.center_dc);
        r.fre_map = fre_branch(spectrum_to_branch_input(spec), params, cfg);
    }

    std::optional<std::vector<double>> override = opts.attention_override;
    if (opts.disable_attention && !override) {
        override = std::vector<double>(cfg.fused_channels(), 1.0);
    }
    FusedFeature fused = fuse(r.rgb_map, r.fre_map, params, cfg, override);
    r.embedding = fused.embedding;
    r.attention = fused.attention;
    r.p = classify(fused, params, cfg);

    // L2 normalization makes dot products cosine similarities for SupCon.
    TensorPtr norm = sqrt(sum_all(mul(fused.embedding, fused.embedding)));
    r.z = div(fused.embedding, reshape(norm, {1}));

    r.f_fre_vec = global_avg_pool(r.fre_map);
    return r;
}

} // namespace specfuse
