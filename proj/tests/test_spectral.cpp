#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>

#include "dft_oracle.hpp"
#include "specfuse/spectral.hpp"

using namespace specfuse;

namespace {

ImageSample uniform_image(std::size_t size, double r, double g, double b) {
    ImageSample img;
    img.height = img.width = size;
    img.pixels.resize(size * size * 3);
    for (std::size_t i = 0; i < size * size; ++i) {
        img.pixels[3 * i] = r;
        img.pixels[3 * i + 1] = g;
        img.pixels[3 * i + 2] = b;
    }
    img.id = "uniform";
    return img;
}

TensorPtr random_gray(std::size_t h, std::size_t w, Rng& rng) {
    return Tensor::random_uniform({h, w}, rng, 0.0, 1.0);
}

} // namespace

TEST(Grayscale, Bt601Coefficients) {
    EXPECT_DOUBLE_EQ(to_grayscale(uniform_image(8, 1, 1, 1))->values[0], 1.0);
    EXPECT_DOUBLE_EQ(to_grayscale(uniform_image(8, 1, 0, 0))->values[0], 0.299);
    EXPECT_DOUBLE_EQ(to_grayscale(uniform_image(8, 0, 1, 0))->values[0], 0.587);
    EXPECT_DOUBLE_EQ(to_grayscale(uniform_image(8, 0, 0, 1))->values[0], 0.114);
    EXPECT_DOUBLE_EQ(to_grayscale(uniform_image(8, 0.5, 0.5, 0.5))->values[0], 0.5);
}

TEST(Grayscale, OutputInUnitInterval) {
    Rng rng(31);
    ImageSample img = uniform_image(8, 0, 0, 0);
    for (double& v : img.pixels) v = rng.uniform();
    auto gray = to_grayscale(img);
    for (double v : gray->values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Fft2d, ConstantImageIsPureDc) {
    const double c = 0.37;
    auto spec = fft2d(Tensor::full({8, 8}, c));
    EXPECT_NEAR(spec.at(0, 0).real(), c * 64.0, 1e-12);
    EXPECT_NEAR(spec.at(0, 0).imag(), 0.0, 1e-12);
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v)
            if (u || v) EXPECT_LT(std::abs(spec.at(u, v)), 1e-12);
}

TEST(Fft2d, UnitImpulseHasFlatMagnitude) {
    std::vector<double> vals(64, 0.0);
    vals[0] = 1.0;
    auto spec = fft2d(Tensor::create({8, 8}, vals));
    for (const auto& bin : spec.bins) EXPECT_NEAR(std::abs(bin), 1.0, 1e-12);
}

TEST(Fft2d, MatchesDirectDftOracle) {
    Rng rng(37);
    for (std::size_t n : {8u, 16u}) {
        auto gray = random_gray(n, n, rng);
        auto spec = fft2d(gray);
        auto oracle = testoracle::direct_dft2d(gray->values, n, n);
        double worst = 0.0;
        for (std::size_t i = 0; i < oracle.size(); ++i) {
            worst = std::max(worst, std::abs(spec.bins[i] - oracle[i]));
        }
        EXPECT_LT(worst, 1e-9) << "size " << n;
    }
}

TEST(Fft2d, ParsevalIdentity) {
    Rng rng(41);
    auto gray = random_gray(16, 16, rng);
    auto spec = fft2d(gray);
    double spatial = 0.0;
    for (double v : gray->values) spatial += v * v;
    double spectral = 0.0;
    for (const auto& bin : spec.bins) spectral += std::norm(bin);
    EXPECT_LT(std::abs(spectral - 256.0 * spatial) / (256.0 * spatial), 1e-9);
}

TEST(Fft2d, InverseRecoversInput) {
    Rng rng(43);
    auto gray = random_gray(8, 8, rng);
    auto spec = fft2d(gray);
    auto recovered = testoracle::direct_idft2d(spec.bins, 8, 8);
    for (std::size_t i = 0; i < recovered.size(); ++i) {
        EXPECT_NEAR(recovered[i], gray->values[i], 1e-9);
    }
}

TEST(Fft2d, ConjugateSymmetryOfMagnitudesForRealInput) {
    Rng rng(47);
    auto gray = random_gray(16, 8, rng);
    auto spec = fft2d(gray);
    for (std::size_t u = 0; u < 16; ++u) {
        for (std::size_t v = 0; v < 8; ++v) {
            const double m1 = std::abs(spec.at(u, v));
            const double m2 = std::abs(spec.at((16 - u) % 16, (8 - v) % 8));
            EXPECT_NEAR(m1, m2, 1e-9);
        }
    }
}

TEST(Fft2d, RejectsNonPowerOfTwoDims) {
    EXPECT_THROW(fft2d(Tensor::full({6, 8}, 1.0)), ContractError);
    EXPECT_THROW(fft2d(Tensor::full({8}, 1.0)), ShapeError);
}

TEST(LogMagnitude, UnitImpulseGivesLn2Everywhere) {
    std::vector<double> vals(64, 0.0);
    vals[0] = 1.0;
    auto map = log_magnitude(fft2d(Tensor::create({8, 8}, vals)), false);
    for (double v : map.values) EXPECT_NEAR(v, std::log(2.0), 1e-12);
}

TEST(LogMagnitude, ConstantImageDcOnly) {
    auto map = log_magnitude(fft2d(Tensor::full({8, 8}, 1.0)), false);
    EXPECT_NEAR(map.at(0, 0), std::log(65.0), 1e-12); // ln(1 + 64)
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v)
            if (u || v) EXPECT_NEAR(map.at(u, v), 0.0, 1e-12);
    EXPECT_FALSE(map.dc_centered);
}

TEST(LogMagnitude, CenteringMovesDcAndPermutes) {
    Rng rng(53);
    auto gray = random_gray(8, 8, rng);
    auto spec = fft2d(gray);
    auto plain = log_magnitude(spec, false);
    auto centered = log_magnitude(spec, true);
    EXPECT_TRUE(centered.dc_centered);
    EXPECT_DOUBLE_EQ(centered.at(4, 4), plain.at(0, 0));
    // quadrant swap is a permutation: same multiset of values
    auto a = plain.values;
    auto b = centered.values;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
}

TEST(LogMagnitude, AllEntriesNonnegativeAndMonotone) {
    Rng rng(59);
    auto map = log_magnitude(fft2d(random_gray(8, 8, rng)), true);
    for (double v : map.values) EXPECT_GE(v, 0.0);
    // monotone in per-bin magnitude
    for (double m = 0.0; m < 5.0; m += 0.25) {
        EXPECT_LT(std::log1p(m), std::log1p(m + 0.25));
    }
}

TEST(BranchInput, ConstantMapNormalizesToZeros) {
    SpectrumMap map{4, 4, std::vector<double>(16, 2.5), false};
    auto t = spectrum_to_branch_input(map);
    EXPECT_EQ(t->shape, (Shape{1, 4, 4}));
    for (double v : t->values) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(BranchInput, AffineRescale) {
    SpectrumMap map{2, 2, {0.0, 5.0, 2.5, 1.0}, false};
    auto t = spectrum_to_branch_input(map);
    EXPECT_DOUBLE_EQ(t->values[0], 0.0);
    EXPECT_DOUBLE_EQ(t->values[1], 1.0);
    EXPECT_DOUBLE_EQ(t->values[2], 0.5);
}

TEST(BranchInput, RangeAlwaysUnitInterval) {
    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        SpectrumMap map{8, 8, {}, false};
        map.values.resize(64);
        for (double& v : map.values) v = rng.uniform(0.0, 9.0);
        auto t = spectrum_to_branch_input(map);
        for (double v : t->values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(ImageSample, ValidationCatchesBadInputs) {
    ImageSample img = uniform_image(8, 0.5, 0.5, 0.5);
    EXPECT_NO_THROW(img.validate());
    img.pixels[5] = 1.5;
    EXPECT_THROW(img.validate(), ContractError);

    ImageSample odd;
    odd.height = 6;
    odd.width = 8;
    odd.pixels.assign(6 * 8 * 3, 0.5);
    EXPECT_THROW(odd.validate(), ContractError);
}
