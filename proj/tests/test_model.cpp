#include <gtest/gtest.h>

#include <cmath>

#include "specfuse/datasynth.hpp"
#include "specfuse/model.hpp"
#include "testutil.hpp"

using namespace specfuse;

namespace {

ModelConfig desk_config() { return ModelConfig{}; }

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.image_size = 8;
    cfg.rgb = {{4, 6}, {2, 2}};
    cfg.fre = {{3, 5}, {2, 2}};
    cfg.attention_reduction = 1;
    cfg.head_hidden = 4;
    return cfg;
}

ImageSample probe_sample() {
    CorpusSpec spec;
    spec.samples_per_domain_per_class = 1;
    return generate_fake(spec, Domain::t2i, 0);
}

} // namespace

TEST(ModelConfig, DeskDefaultsShapeArithmetic) {
    ModelConfig cfg = desk_config();
    cfg.validate();
    EXPECT_EQ(cfg.rgb_channels(), 64u);
    EXPECT_EQ(cfg.fre_channels(), 32u);
    EXPECT_EQ(cfg.fused_channels(), 96u);
    EXPECT_EQ(cfg.spatial(), 4u); // 32 / 2 / 2 / 2
}

TEST(ModelConfig, ValidationCatchesBadConfigs) {
    ModelConfig bad_reduction = desk_config();
    bad_reduction.attention_reduction = 7; // does not divide 96
    EXPECT_THROW(bad_reduction.validate(), ConfigError);

    ModelConfig mismatched = desk_config();
    mismatched.fre.strides = {2, 2, 4};
    EXPECT_THROW(mismatched.validate(), ConfigError);

    ModelConfig bad_stride = desk_config();
    bad_stride.rgb.strides = {2, 2, 3}; // 8 % 3 != 0
    EXPECT_THROW(bad_stride.validate(), ConfigError);
}

TEST(Branches, OutputShapes) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 5);
    Rng rng(5);
    auto rgb = rgb_branch(Tensor::random_uniform({3, 32, 32}, rng, 0, 1), params, cfg);
    EXPECT_EQ(rgb->shape, (Shape{64, 4, 4}));
    auto fre = fre_branch(Tensor::random_uniform({1, 32, 32}, rng, 0, 1), params, cfg);
    EXPECT_EQ(fre->shape, (Shape{32, 4, 4}));
    EXPECT_EQ(rgb->shape[1], fre->shape[1]);
    EXPECT_THROW(rgb_branch(Tensor::zeros({3, 16, 16}), params, cfg), ShapeError);
}

TEST(Branches, ZeroInputZeroBiasGivesZeroOutput) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 9); // biases start at zero
    auto out = rgb_branch(Tensor::zeros({3, 8, 8}), params, cfg);
    for (double v : out->values) EXPECT_EQ(v, 0.0);
}

TEST(Branches, FirstLayerKernelGradientMatchesFiniteDifference) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 13);
    Rng rng(13);
    auto input = Tensor::random_uniform({3, 8, 8}, rng, 0, 1);
    auto build = [&]() {
        auto out = rgb_branch(input, params, cfg);
        return mul_const(sum_all(out), 1.0 / static_cast<double>(out->numel()));
    };
    auto w = params.at("rgb.stage0.weight");
    params.zero_grad();
    backward(build());
    double worst = 0.0;
    for (std::size_t i = 0; i < w->numel(); ++i) {
        const double saved = w->values[i];
        auto eval = [&](double v) {
            w->values[i] = v;
            double out = build()->values[0];
            w->values[i] = saved;
            return out;
        };
        const double numeric = testutil::fd_derivative(eval, saved);
        worst = std::max(worst,
                         std::abs(w->grad[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(ChannelAttention, ZeroMlpGivesUniformHalf) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 17);
    std::fill(params.at("attn.mlp_w1")->values.begin(), params.at("attn.mlp_w1")->values.end(),
              0.0);
    std::fill(params.at("attn.mlp_w2")->values.begin(), params.at("attn.mlp_w2")->values.end(),
              0.0);
    Rng rng(17);
    auto map = Tensor::random_uniform({cfg.fused_channels(), 2, 2}, rng, -2, 2);
    auto gate = channel_attention(map, params, cfg);
    for (double v : gate->values) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(ChannelAttention, GateStrictlyInsideUnitInterval) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 19);
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        auto map = Tensor::random_uniform({cfg.fused_channels(), 2, 2}, rng, -4, 4);
        auto gate = channel_attention(map, params, cfg);
        for (double v : gate->values) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(ChannelAttention, ConstantMapMakesAvgEqualMax) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 23);
    // per-channel constant map: f_avg == f_max, so M_c = sigmoid(2 MLP(f_avg))
    std::vector<double> vals(cfg.fused_channels() * 4);
    for (std::size_t c = 0; c < cfg.fused_channels(); ++c)
        for (std::size_t i = 0; i < 4; ++i) vals[c * 4 + i] = 0.1 * static_cast<double>(c) - 0.3;
    auto map = Tensor::create({cfg.fused_channels(), 2, 2}, vals);
    auto gate = channel_attention(map, params, cfg);

    auto f_avg = global_avg_pool(map);
    auto expected = sigmoid(mul_const(attention_mlp(f_avg, params), 2.0));
    for (std::size_t c = 0; c < cfg.fused_channels(); ++c) {
        EXPECT_NEAR(gate->values[c], expected->values[c], 1e-12);
    }
}

TEST(Fuse, IdentityOverrideEqualsPlainGap) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 29);
    Rng rng(29);
    auto f_rgb = Tensor::random_uniform({cfg.rgb_channels(), 2, 2}, rng, -1, 1);
    auto f_fre = Tensor::random_uniform({cfg.fre_channels(), 2, 2}, rng, -1, 1);
    std::vector<double> ones(cfg.fused_channels(), 1.0);
    FusedFeature fused = fuse(f_rgb, f_fre, params, cfg, ones);
    auto plain = global_avg_pool(concat_channels(f_rgb, f_fre));
    for (std::size_t c = 0; c < cfg.fused_channels(); ++c) {
        EXPECT_DOUBLE_EQ(fused.embedding->values[c], plain->values[c]);
        EXPECT_DOUBLE_EQ(fused.attention->values[c], 1.0);
    }
}

TEST(Fuse, ZeroOverrideAnnihilates) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 31);
    Rng rng(31);
    auto f_rgb = Tensor::random_uniform({cfg.rgb_channels(), 2, 2}, rng, -1, 1);
    auto f_fre = Tensor::random_uniform({cfg.fre_channels(), 2, 2}, rng, -1, 1);
    std::vector<double> zeros(cfg.fused_channels(), 0.0);
    FusedFeature fused = fuse(f_rgb, f_fre, params, cfg, zeros);
    for (double v : fused.embedding->values) EXPECT_EQ(v, 0.0);
}

TEST(Fuse, AttentionScalingIsExactlyLinearPerChannel) {
    // Power-of-two gate values make the scaling bit-exact.
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 37);
    Rng rng(37);
    auto f_rgb = Tensor::random_uniform({cfg.rgb_channels(), 2, 2}, rng, -1, 1);
    auto f_fre = Tensor::random_uniform({cfg.fre_channels(), 2, 2}, rng, -1, 1);
    std::vector<double> ones(cfg.fused_channels(), 1.0);
    FusedFeature base = fuse(f_rgb, f_fre, params, cfg, ones);
    for (double t : {2.0, 0.5}) {
        const std::size_t k = 3;
        std::vector<double> gate(cfg.fused_channels(), 1.0);
        gate[k] = t;
        FusedFeature scaled = fuse(f_rgb, f_fre, params, cfg, gate);
        for (std::size_t c = 0; c < cfg.fused_channels(); ++c) {
            const double expected = (c == k) ? t * base.embedding->values[c]
                                             : base.embedding->values[c];
            EXPECT_EQ(scaled.embedding->values[c], expected);
        }
    }
}

TEST(Fuse, SpatialMismatchRejected) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 41);
    auto f_rgb = Tensor::zeros({cfg.rgb_channels(), 2, 2});
    auto f_fre = Tensor::zeros({cfg.fre_channels(), 4, 4});
    EXPECT_THROW(fuse(f_rgb, f_fre, params, cfg), ShapeError);
}

TEST(Classify, ZeroWeightsGiveHalf) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 43);
    for (const char* name : {"head.fc1.weight", "head.fc2.weight"}) {
        auto t = params.at(name);
        std::fill(t->values.begin(), t->values.end(), 0.0);
    }
    FusedFeature feature{Tensor::full({cfg.fused_channels()}, 0.3),
                         Tensor::full({cfg.fused_channels()}, 0.5)};
    EXPECT_DOUBLE_EQ(classify(feature, params, cfg)->values[0], 0.5);
}

TEST(Classify, ProbabilityStrictlyInside) {
    ModelConfig cfg = toy_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 47);
    Rng rng(47);
    for (int trial = 0; trial < 100; ++trial) {
        FusedFeature feature{Tensor::random_uniform({cfg.fused_channels()}, rng, -5, 5),
                             Tensor::full({cfg.fused_channels()}, 0.5)};
        const double p = classify(feature, params, cfg)->values[0];
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
    }
}

TEST(Forward, OutputContract) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 53);
    ForwardResult r = forward(probe_sample(), params, cfg);
    EXPECT_EQ(r.p->shape, (Shape{1}));
    EXPECT_EQ(r.z->shape, (Shape{cfg.fused_channels()}));
    EXPECT_EQ(r.f_fre_vec->shape, (Shape{cfg.fre_channels()}));
    EXPECT_EQ(r.attention->shape, (Shape{cfg.fused_channels()}));
    double norm = 0.0;
    for (double v : r.z->values) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
    EXPECT_GT(r.p->values[0], 0.0);
    EXPECT_LT(r.p->values[0], 1.0);
}

TEST(Forward, Deterministic) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 59);
    ImageSample s = probe_sample();
    ForwardResult a = forward(s, params, cfg);
    ForwardResult b = forward(s, params, cfg);
    EXPECT_EQ(a.p->values, b.p->values);
    EXPECT_EQ(a.z->values, b.z->values);
    EXPECT_EQ(a.f_fre_vec->values, b.f_fre_vec->values);
    EXPECT_EQ(a.attention->values, b.attention->values);
}

TEST(Forward, EmbeddingNormalizedAcrossCorpusSamples) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 61);
    CorpusSpec spec;
    spec.samples_per_domain_per_class = 3;
    for (Domain d : kAllDomains) {
        for (const ImageSample& s : generate_domain_samples(spec, d, 0, 3)) {
            ForwardResult r = forward(s, params, cfg);
            double norm = 0.0;
            for (double v : r.z->values) norm += v * v;
            EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
        }
    }
}

TEST(Forward, AblationIsolation) {
    // Each flag changes exactly the documented computation: everything
    // upstream of the ablated component stays bit-identical.
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 67);
    ImageSample s = probe_sample();
    ForwardResult full = forward(s, params, cfg);

    ForwardOptions no_attention;
    no_attention.disable_attention = true;
    ForwardResult wo_mc = forward(s, params, cfg, no_attention);
    EXPECT_EQ(wo_mc.rgb_map->values, full.rgb_map->values);
    EXPECT_EQ(wo_mc.fre_map->values, full.fre_map->values);
    EXPECT_EQ(wo_mc.f_fre_vec->values, full.f_fre_vec->values);
    for (double v : wo_mc.attention->values) EXPECT_EQ(v, 1.0);

    ForwardOptions no_fre;
    no_fre.disable_fre_branch = true;
    ForwardResult wo_fre = forward(s, params, cfg, no_fre);
    EXPECT_EQ(wo_fre.rgb_map->values, full.rgb_map->values);
    for (double v : wo_fre.fre_map->values) EXPECT_EQ(v, 0.0);
    for (double v : wo_fre.f_fre_vec->values) EXPECT_EQ(v, 0.0);
}

TEST(Forward, AblationEquivalenceWithExplicitOnesOverride) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet params = init_detector_params(cfg, lw, 71);
    ImageSample s = probe_sample();

    ForwardOptions disabled;
    disabled.disable_attention = true;
    ForwardResult ablated = forward(s, params, cfg, disabled);

    ForwardOptions override_ones;
    override_ones.attention_override = std::vector<double>(cfg.fused_channels(), 1.0);
    ForwardResult hooked = forward(s, params, cfg, override_ones);

    EXPECT_EQ(ablated.embedding->values, hooked.embedding->values);
    EXPECT_EQ(ablated.p->values, hooked.p->values);
}

TEST(InitParams, DeterministicAndStreamSeparated) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    ParameterSet a = init_detector_params(cfg, lw, 73);
    ParameterSet b = init_detector_params(cfg, lw, 73);
    ParameterSet c = init_detector_params(cfg, lw, 74);
    EXPECT_EQ(a.at("rgb.stage0.weight")->values, b.at("rgb.stage0.weight")->values);
    EXPECT_NE(a.at("rgb.stage0.weight")->values, c.at("rgb.stage0.weight")->values);
    EXPECT_NE(a.at("rgb.stage0.weight")->values[0], a.at("rgb.stage1.weight")->values[0]);
}

TEST(InitParams, CenterSeparationNearMargin) {
    ModelConfig cfg = desk_config();
    LossWeights lw;
    lw.margin = 1.0;
    ParameterSet params = init_detector_params(cfg, lw, 79);
    auto centers = params.at("centers");
    const std::size_t c = cfg.fre_channels();
    double dist2 = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const double d = centers->values[i] - centers->values[c + i];
        dist2 += d * d;
    }
    // offset m/sqrt(C) per coordinate puts the centers near distance m
    EXPECT_GT(std::sqrt(dist2), 0.5 * lw.margin);
}
