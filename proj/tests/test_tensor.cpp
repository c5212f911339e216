#include <gtest/gtest.h>

#include <cmath>

#include "specfuse/tensor.hpp"
#include "testutil.hpp"

using namespace specfuse;

namespace {

TensorPtr leaf(Shape shape, std::vector<double> vals) {
    return Tensor::create(std::move(shape), std::move(vals), true);
}

} // namespace

TEST(Tensor, CreateValidatesShape) {
    EXPECT_THROW(Tensor::create({2, 3}, {1.0}, false), ShapeError);
    EXPECT_THROW(Tensor::create({0, 3}, {}, false), ShapeError);
    auto t = Tensor::create({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(t->numel(), 4u);
    EXPECT_FALSE(t->requires_grad);
    EXPECT_TRUE(t->grad.empty());
}

TEST(Tensor, GradPresentIffRequiresGrad) {
    auto t = leaf({3}, {1, 2, 3});
    EXPECT_EQ(t->grad.size(), 3u);
    auto u = Tensor::create({3}, {1, 2, 3}, false);
    EXPECT_TRUE(u->grad.empty());
}

TEST(Elementwise, SigmoidAtZeroIsHalf) {
    auto out = sigmoid(Tensor::scalar(0.0));
    EXPECT_DOUBLE_EQ(out->values[0], 0.5);
}

TEST(Elementwise, ReluDefinition) {
    auto out = relu(Tensor::create({2}, {-3.2, 3.2}));
    EXPECT_DOUBLE_EQ(out->values[0], 0.0);
    EXPECT_DOUBLE_EQ(out->values[1], 3.2);
}

TEST(Elementwise, SigmoidDerivativeMatchesFiniteDifference) {
    auto x = leaf({1}, {1.0});
    backward(sigmoid(x));
    const double numeric = testutil::fd_derivative(
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, 1.0);
    EXPECT_LT(std::abs(x->grad[0] - numeric) / std::abs(numeric), 1e-6);
}

TEST(Elementwise, DispatchEntryPoint) {
    auto a = Tensor::create({2}, {1.0, 2.0});
    auto b = Tensor::create({2}, {3.0, 4.0});
    auto sum = elementwise(ElementwiseOp::add, a, b);
    EXPECT_DOUBLE_EQ(sum->values[0], 4.0);
    EXPECT_DOUBLE_EQ(sum->values[1], 6.0);
    auto neg = elementwise(ElementwiseOp::negate, a);
    EXPECT_DOUBLE_EQ(neg->values[1], -2.0);
    EXPECT_THROW(elementwise(ElementwiseOp::add, a), ContractError);
    EXPECT_THROW(elementwise(ElementwiseOp::relu, a, b), ContractError);
}

TEST(Elementwise, ShapeErrorNamesBothShapes) {
    auto a = Tensor::create({2, 3}, std::vector<double>(6, 0.0));
    auto b = Tensor::create({2, 4}, std::vector<double>(8, 0.0));
    try {
        add(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(2,4)"), std::string::npos) << msg;
    }
}

TEST(Elementwise, BroadcastKeepsNonSingletonExtents) {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t c = 1 + rng.uniform_int(5);
        const std::size_t h = 1 + rng.uniform_int(5);
        const std::size_t w = 1 + rng.uniform_int(5);
        auto a = Tensor::random_uniform({c, h, w}, rng, -1, 1);
        auto b = Tensor::random_uniform({c, 1, 1}, rng, -1, 1);
        auto out = mul(a, b);
        EXPECT_EQ(out->shape, (Shape{c, h, w}));
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < h * w; ++i) {
                EXPECT_DOUBLE_EQ(out->values[ci * h * w + i],
                                 a->values[ci * h * w + i] * b->values[ci]);
            }
    }
}

TEST(Elementwise, BroadcastGradientSumsOverExpandedDims) {
    auto a = leaf({2, 2}, {1, 2, 3, 4});
    auto b = leaf({2, 1}, {10, 20});
    backward(sum_all(mul(a, b)));
    // d/db_0 = a00 + a01, d/db_1 = a10 + a11
    EXPECT_DOUBLE_EQ(b->grad[0], 3.0);
    EXPECT_DOUBLE_EQ(b->grad[1], 7.0);
    EXPECT_DOUBLE_EQ(a->grad[0], 10.0);
    EXPECT_DOUBLE_EQ(a->grad[3], 20.0);
}

TEST(Matmul, IdentityPreserves) {
    auto id = Tensor::create({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto m = Tensor::create({3, 2}, {1, 2, 3, 4, 5, 6});
    auto out = matmul(id, m);
    EXPECT_EQ(out->values, m->values);
}

TEST(Matmul, HandEvaluatedProduct) {
    // [[1,2],[3,4]] x [[5],[6]] = [[17],[39]]
    auto a = Tensor::create({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::create({2, 1}, {5, 6});
    auto out = matmul(a, b);
    EXPECT_DOUBLE_EQ(out->values[0], 17.0);
    EXPECT_DOUBLE_EQ(out->values[1], 39.0);
}

TEST(Matmul, InnerDimensionMismatch) {
    auto a = Tensor::create({2, 3}, std::vector<double>(6, 1.0));
    auto b = Tensor::create({2, 2}, std::vector<double>(4, 1.0));
    EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Matmul, GradientMatchesFiniteDifference) {
    Rng rng(7);
    auto a = Tensor::random_uniform({3, 4}, rng, -2, 2, true);
    auto b = Tensor::random_uniform({4, 2}, rng, -2, 2, true);
    backward(sum_all(matmul(a, b)));
    for (std::size_t i = 0; i < a->numel(); ++i) {
        const double saved = a->values[i];
        auto eval = [&](double v) {
            a->values[i] = v;
            double s = sum_all(matmul(a, b))->values[0];
            a->values[i] = saved;
            return s;
        };
        const double numeric = testutil::fd_derivative(eval, saved);
        EXPECT_LT(std::abs(a->grad[i] - numeric) / std::max(1.0, std::abs(numeric)), 1e-6);
    }
}

TEST(Backward, ProductRule) {
    auto x = leaf({1}, {2.0});
    auto y = leaf({1}, {3.0});
    backward(mul(x, y));
    EXPECT_DOUBLE_EQ(x->grad[0], 3.0);
    EXPECT_DOUBLE_EQ(y->grad[0], 2.0);
}

TEST(Backward, RequiresScalarOutput) {
    auto x = leaf({2}, {1.0, 2.0});
    EXPECT_THROW(backward(negate(x)), ContractError);
}

TEST(Backward, SixOpCompositeMatchesFiniteDifference) {
    Rng rng(11);
    auto a = Tensor::random_uniform({2, 2}, rng, -2, 2, true);
    auto b = Tensor::random_uniform({2, 2}, rng, -2, 2, true);
    auto build = [&]() {
        // six ops: matmul, sigmoid, add, relu, mul, sum_all
        return sum_all(mul(sigmoid(matmul(a, b)), relu(add(a, b))));
    };
    backward(build());
    for (auto& t : {a, b}) {
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double saved = t->values[i];
            auto eval = [&](double v) {
                t->values[i] = v;
                double s = build()->values[0];
                t->values[i] = saved;
                return s;
            };
            const double numeric = testutil::fd_derivative(eval, saved);
            EXPECT_LT(std::abs(t->grad[i] - numeric) / std::max(1.0, std::abs(numeric)), 1e-6);
        }
    }
}

TEST(Backward, RepeatedCallsAccumulate) {
    auto x = leaf({1}, {2.0});
    auto y = leaf({1}, {3.0});
    auto out = mul(x, y);
    backward(out);
    backward(out);
    EXPECT_DOUBLE_EQ(x->grad[0], 6.0);
    EXPECT_DOUBLE_EQ(y->grad[0], 4.0);
}

TEST(Backward, AccumulationIsAdditiveOnDeepGraph) {
    Rng rng(13);
    auto a = Tensor::random_uniform({3, 3}, rng, -1, 1, true);
    auto b = Tensor::random_uniform({3, 3}, rng, -1, 1, true);
    auto build = [&]() { return sum_all(mul(sigmoid(a), exp(mul_const(b, 0.5)))); };
    auto once = build();
    backward(once);
    std::vector<double> single = a->grad;
    a->zero_grad();
    b->zero_grad();
    auto twice = build();
    backward(twice);
    backward(twice);
    for (std::size_t i = 0; i < single.size(); ++i) {
        EXPECT_DOUBLE_EQ(a->grad[i], 2.0 * single[i]);
    }
}

TEST(Backward, ForwardIsDeterministic) {
    Rng rng(17);
    auto a = Tensor::random_uniform({4, 4}, rng, -2, 2);
    auto b = Tensor::random_uniform({4, 4}, rng, -2, 2);
    auto r1 = sigmoid(matmul(a, b));
    auto r2 = sigmoid(matmul(a, b));
    EXPECT_EQ(r1->values, r2->values);
}

TEST(Ops, ReshapeAndSliceRow) {
    auto t = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = reshape(t, {3, 2});
    EXPECT_EQ(r->shape, (Shape{3, 2}));
    EXPECT_EQ(r->values, t->values);
    EXPECT_THROW(reshape(t, {4, 2}), ShapeError);

    auto row = slice_row(t, 1);
    EXPECT_EQ(row->values, (std::vector<double>{4, 5, 6}));
    EXPECT_THROW(slice_row(t, 2), ShapeError);
    backward(sum_all(row));
    EXPECT_EQ(t->grad, (std::vector<double>{0, 0, 0, 1, 1, 1}));
}

TEST(Ops, ClampGradientMask) {
    auto t = leaf({3}, {-2.0, 0.3, 2.0});
    backward(sum_all(clamp(t, -1.0, 1.0)));
    EXPECT_DOUBLE_EQ(t->grad[0], 0.0);
    EXPECT_DOUBLE_EQ(t->grad[1], 1.0);
    EXPECT_DOUBLE_EQ(t->grad[2], 0.0);
}

TEST(Ops, ScalarValueContract) {
    auto t = Tensor::create({2}, {1.0, 2.0});
    EXPECT_THROW(t->scalar_value(), ContractError);
    EXPECT_DOUBLE_EQ(Tensor::scalar(4.5)->scalar_value(), 4.5);
}
