#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "specfuse/errors.hpp"
#include "specfuse/tensor.hpp"

namespace specfuse {

/// The four synthetic forgery families.
enum class Domain { t2i = 0, i2i = 1, fs = 2, fe = 3 };

constexpr std::array<Domain, 4> kAllDomains{Domain::t2i, Domain::i2i, Domain::fs, Domain::fe};

inline std::string to_string(Domain d) {
    switch (d) {
        case Domain::t2i: return "t2i";
        case Domain::i2i: return "i2i";
        case Domain::fs: return "fs";
        case Domain::fe: return "fe";
    }
    return "?";
}

inline Domain domain_from(const std::string& s) {
    for (Domain d : kAllDomains) {
        if (to_string(d) == s) return d;
    }
    throw ConfigError("unknown domain '" + s + "' (expected t2i, i2i, fs or fe)");
}

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// RGB image in [0,1] with a binary label and a forgery-family tag.
/// Pixels are row-major, interleaved (y, x, channel).
struct ImageSample {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels; // height * width * 3
    int label = 0;              // 0 = real, 1 = fake
    Domain domain = Domain::t2i;
    std::string id;

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * 3 + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }

    void validate() const {
        if (!is_power_of_two(height) || !is_power_of_two(width)) {
            throw ContractError("image '" + id + "' dims " + std::to_string(height) + "x" +
                                std::to_string(width) + " must be powers of two");
        }
        if (pixels.size() != height * width * 3) {
            throw ContractError("image '" + id + "' pixel buffer size mismatch");
        }
        for (double v : pixels) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ContractError("image '" + id + "' has pixel component outside [0,1]");
            }
        }
        if (label != 0 && label != 1) {
            throw ContractError("image '" + id + "' label must be 0 or 1");
        }
    }
};

/// Channel-planar tensor view of a sample: (3,H,W), no gradient.
inline TensorPtr image_to_tensor(const ImageSample& img) {
    std::vector<double> vals(3 * img.height * img.width);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                vals[(c * img.height + y) * img.width + x] = img.at(y, x, c);
    return Tensor::create({3, img.height, img.width}, std::move(vals));
}

// ---------------------------------------------------------------------------
// PNG import/export (8-bit per channel, libpng simplified API)
// ---------------------------------------------------------------------------

inline void write_png_rgb(const std::filesystem::path& path, std::size_t height, std::size_t width,
                          const std::vector<double>& pixels01) {
    std::vector<std::uint8_t> bytes(height * width * 3);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double v = std::min(std::max(pixels01[i], 0.0), 1.0);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        throw IoError("PNG write failed for " + path.string() + ": " + img.message);
    }
}

inline void write_png_rgb(const std::filesystem::path& path, const ImageSample& sample) {
    write_png_rgb(path, sample.height, sample.width, sample.pixels);
}

/// Reads an RGB PNG into interleaved [0,1] doubles.
inline void read_png_rgb(const std::filesystem::path& path, std::size_t& height, std::size_t& width,
                         std::vector<double>& pixels01) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("corrupt PNG " + path.string() + ": " + img.message);
    }
    height = img.height;
    width = img.width;
    pixels01.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        pixels01[i] = static_cast<double>(bytes[i]) / 255.0;
    }
}

inline void write_png_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                           const std::vector<double>& values01) {
    std::vector<std::uint8_t> bytes(height * width);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double v = std::min(std::max(values01[i], 0.0), 1.0);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        throw IoError("PNG write failed for " + path.string() + ": " + img.message);
    }
}

// ---------------------------------------------------------------------------
// Raw tensor dump: magic "SFRAW001", u32 rank, u64 dims[rank], f64 data.
// Used for golden spectra; little-endian, bit-exact round trip.
// ---------------------------------------------------------------------------

namespace detail {
constexpr char kRawMagic[8] = {'S', 'F', 'R', 'A', 'W', '0', '0', '1'};
}

inline void write_raw_tensor(const std::filesystem::path& path, const Shape& shape,
                             const std::vector<double>& values) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("raw dump: value count does not match shape " + shape_str(shape));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open raw dump for writing: " + path.string());
    os.write(detail::kRawMagic, sizeof(detail::kRawMagic));
    const std::uint32_t rank = static_cast<std::uint32_t>(shape.size());
    os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (std::size_t d : shape) {
        const std::uint64_t d64 = d;
        os.write(reinterpret_cast<const char*>(&d64), sizeof(d64));
    }
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!os) throw IoError("raw dump write failed: " + path.string());
}

inline void read_raw_tensor(const std::filesystem::path& path, Shape& shape,
                            std::vector<double>& values) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open raw dump: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kRawMagic, sizeof(magic)) != 0) {
        throw IoError("not a specfuse raw tensor dump: " + path.string());
    }
    std::uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    shape.resize(rank);
    for (auto& d : shape) {
        std::uint64_t d64 = 0;
        is.read(reinterpret_cast<char*>(&d64), sizeof(d64));
        d = static_cast<std::size_t>(d64);
    }
    if (!is) throw IoError("truncated raw tensor dump: " + path.string());
    values.resize(shape_numel(shape));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw IoError("truncated raw tensor dump: " + path.string());
}

} // namespace specfuse
