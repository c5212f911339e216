#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "specfuse/image.hpp"
#include "specfuse/tensor.hpp"

namespace specfuse {

/// Unnormalized forward 2-D DFT bins, row-major (u = row frequency,
/// v = column frequency).
struct ComplexSpectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::complex<double>> bins;

    const std::complex<double>& at(std::size_t u, std::size_t v) const {
        return bins[u * width + v];
    }
    std::complex<double>& at(std::size_t u, std::size_t v) { return bins[u * width + v]; }
};

/// Log-magnitude spectrum, all entries >= 0. dc_centered records whether
/// the zero-frequency bin was moved to (H/2, W/2).
struct SpectrumMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
    bool dc_centered = false;

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// ITU-R BT.601 luminance: 0.299 R + 0.587 G + 0.114 B, result in [0,1].
inline TensorPtr to_grayscale(const ImageSample& img) {
    std::vector<double> vals(img.height * img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            vals[y * img.width + x] =
                0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
        }
    }
    return Tensor::create({img.height, img.width}, std::move(vals));
}

namespace detail {

/// In-place radix-2 Cooley-Tukey, forward (sign -1) unnormalized.
inline void fft_radix2(std::complex<double>* data, std::size_t n, std::ptrdiff_t stride) {
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i * stride], data[j * stride]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -6.283185307179586476925286766559 / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                auto& lo = data[(i + j) * stride];
                auto& hi = data[(i + j + len / 2) * stride];
                const std::complex<double> t = w * hi;
                hi = lo - t;
                lo += t;
                w *= wl;
            }
        }
    }
}

} // namespace detail

/// Forward 2-D FFT of a (H,W) grayscale tensor; H and W must be powers of
/// two. Matches the direct DFT F(u,v) = sum g(y,x) exp(-2*pi*i*(uy/H + vx/W)).
inline ComplexSpectrum fft2d(const TensorPtr& gray) {
    if (gray->rank() != 2) {
        throw ShapeError("fft2d expects a (H,W) tensor, got " + shape_str(gray->shape));
    }
    const std::size_t h = gray->shape[0], w = gray->shape[1];
    if (!is_power_of_two(h) || !is_power_of_two(w)) {
        throw ContractError("fft2d requires power-of-two dims, got " + shape_str(gray->shape));
    }
    ComplexSpectrum spec;
    spec.height = h;
    spec.width = w;
    spec.bins.assign(h * w, {0.0, 0.0});
    for (std::size_t i = 0; i < h * w; ++i) spec.bins[i] = {gray->values[i], 0.0};
    for (std::size_t y = 0; y < h; ++y) detail::fft_radix2(&spec.bins[y * w], w, 1);
    for (std::size_t x = 0; x < w; ++x)
        detail::fft_radix2(&spec.bins[x], h, static_cast<std::ptrdiff_t>(w));
    return spec;
}

/// ln(1 + |F(u,v)|) per bin; optionally relocates the DC bin to the center
/// by swapping quadrants (a pure permutation).
inline SpectrumMap log_magnitude(const ComplexSpectrum& spec, bool center_dc) {
    SpectrumMap map;
    map.height = spec.height;
    map.width = spec.width;
    map.dc_centered = center_dc;
    map.values.resize(spec.bins.size());
    const std::size_t h = spec.height, w = spec.width;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            const double m = std::log1p(std::abs(spec.at(u, v)));
            if (center_dc) {
                map.values[((u + h / 2) % h) * w + ((v + w / 2) % w)] = m;
            } else {
                map.values[u * w + v] = m;
            }
        }
    }
    return map;
}

/// Min-max normalizes the map to [0,1] (a constant map becomes all zeros)
/// and reshapes to a single-channel (1,H,W) tensor for the frequency branch.
inline TensorPtr spectrum_to_branch_input(const SpectrumMap& map) {
    const auto [mn_it, mx_it] = std::minmax_element(map.values.begin(), map.values.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> vals(map.values.size(), 0.0);
    if (mx > mn) {
        const double inv = 1.0 / (mx - mn);
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (map.values[i] - mn) * inv;
    }
    return Tensor::create({1, map.height, map.width}, std::move(vals));
}

} // namespace specfuse
