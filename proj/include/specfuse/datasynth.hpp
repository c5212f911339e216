#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specfuse/image.hpp"
#include "specfuse/rng.hpp"
#include "specfuse/spectral.hpp"

namespace specfuse {

/// Recipe for one synthetic corpus: four forgery families, class-balanced,
/// fully determined by (seed, sample id).
struct CorpusSpec {
    std::size_t image_size = 32;
    std::size_t samples_per_domain_per_class = 500;
    std::uint64_t seed = 1234;
    // Indexed by Domain; 0 disables the perturbation (allowed only for
    // direct generator calls, not corpus builds).
    std::array<double, 4> artifact_strength{0.8, 0.8, 0.8, 0.8};

    double strength(Domain d) const { return artifact_strength[static_cast<std::size_t>(d)]; }

    void validate(bool for_corpus = true) const {
        if (!is_power_of_two(image_size) || image_size < 8) {
            throw ConfigError("corpus.image_size must be a power of two >= 8");
        }
        if (samples_per_domain_per_class == 0) {
            throw ConfigError("corpus.samples_per_domain_per_class must be positive");
        }
        for (Domain d : kAllDomains) {
            const double s = strength(d);
            const double lo = for_corpus ? 0.0 : -1e-12;
            if (!(s > lo && s <= 1.0)) {
                throw ConfigError("corpus.artifact_strength." + to_string(d) +
                                  " must lie in (0,1]");
            }
        }
    }
};

namespace detail {

inline std::string sample_id(Domain d, bool fake, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%s-%05zu", to_string(d).c_str(), fake ? "fake" : "real",
                  index);
    return buf;
}

inline double clamp01(double v) { return std::min(std::max(v, 0.0), 1.0); }

inline double soft_clip(double v) {
    // Smooth squashing onto (0,1); keeps real images free of hard edges.
    return 1.0 / (1.0 + std::exp(-4.0 * (v - 0.5)));
}

inline ImageSample generate_smooth_image(std::size_t size, Rng rng, std::string id, Domain domain) {
    ImageSample img;
    img.height = size;
    img.width = size;
    img.pixels.assign(size * size * 3, 0.0);
    img.label = 0;
    img.domain = domain;
    img.id = std::move(id);

    std::array<double, 3> bg{};
    for (double& b : bg) b = rng.uniform(0.3, 0.7);
    const double gx = rng.uniform(-0.25, 0.25);
    const double gy = rng.uniform(-0.25, 0.25);

    struct Blob {
        double cx, cy, inv2s2;
        std::array<double, 3> amp;
    };
    std::vector<Blob> blobs(3 + rng.uniform_int(4)); // 3..6 blobs
    for (Blob& b : blobs) {
        b.cx = rng.uniform(0.0, static_cast<double>(size));
        b.cy = rng.uniform(0.0, static_cast<double>(size));
        const double sigma = rng.uniform(0.12, 0.35) * static_cast<double>(size);
        b.inv2s2 = 1.0 / (2.0 * sigma * sigma);
        for (double& a : b.amp) a = rng.uniform(-0.45, 0.45);
    }

    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double fx = static_cast<double>(x) / static_cast<double>(size) - 0.5;
            const double fy = static_cast<double>(y) / static_cast<double>(size) - 0.5;
            for (std::size_t c = 0; c < 3; ++c) {
                double v = bg[c] + gx * fx + gy * fy;
                for (const Blob& b : blobs) {
                    const double dx = static_cast<double>(x) - b.cx;
                    const double dy = static_cast<double>(y) - b.cy;
                    v += b.amp[c] * std::exp(-(dx * dx + dy * dy) * b.inv2s2);
                }
                img.at(y, x, c) = soft_clip(v);
            }
        }
    }
    return img;
}

} // namespace detail

/// Smooth low-frequency "pristine" image: random background, gentle
/// gradient and 3-6 Gaussian blobs with random chroma, softly clipped.
inline ImageSample generate_real(const CorpusSpec& spec, Domain domain, std::size_t index) {
    spec.validate(false);
    std::string id = detail::sample_id(domain, false, index);
    Rng rng = Rng::stream(spec.seed, id);
    return detail::generate_smooth_image(spec.image_size, rng, std::move(id), domain);
}

/// Everything needed to rebuild (or verify) one fake: its pristine base and
/// the family-specific perturbation parameters.
struct FakeRecipe {
    ImageSample base;

    // t2i: additive oblique tones; bins (ky,kx) and the conjugate mirror.
    struct Tone {
        std::size_t kx = 0, ky = 0;
        double phase = 0.0;
    };
    std::vector<Tone> tones;
    double tone_amplitude = 0.0; // per tone, at strength 1

    // fs / fe: rectangle [x0, x0+w) x [y0, y0+h).
    std::size_t rect_x = 0, rect_y = 0, rect_w = 0, rect_h = 0;
    ImageSample donor;        // fs only
    double sharpen_gain = 0.0; // fe only, at strength 1
};

inline FakeRecipe fake_recipe(const CorpusSpec& spec, Domain family, std::size_t index) {
    spec.validate(false);
    const std::size_t n = spec.image_size;
    std::string id = detail::sample_id(family, true, index);
    Rng rng = Rng::stream(spec.seed, id);

    FakeRecipe r;
    r.base = detail::generate_smooth_image(n, rng.substream("base"), id, family);
    r.base.label = 1;

    Rng art = rng.substream("artifact");
    switch (family) {
        case Domain::t2i: {
            // Two pure tones in the outer frequency band; ky is the
            // effective row frequency (sign folded in mod H). The amplitude
            // is kept faint: barely visible as pixels, unmistakable as
            // spectral spikes.
            r.tone_amplitude = 0.02;
            for (int t = 0; t < 2; ++t) {
                FakeRecipe::Tone tone;
                tone.kx = n / 4 + art.uniform_int(n / 4);  // [n/4, n/2)
                std::size_t ky = n / 4 + art.uniform_int(n / 4);
                if (art.uniform() < 0.5) ky = n - ky; // random orientation
                tone.ky = ky;
                tone.phase = art.uniform(0.0, 6.283185307179586);
                if (!r.tones.empty() && r.tones[0].kx == tone.kx && r.tones[0].ky == tone.ky) {
                    tone.kx = (tone.kx == n / 2 - 1) ? n / 4 : tone.kx + 1;
                }
                r.tones.push_back(tone);
            }
            break;
        }
        case Domain::i2i:
            break; // fully determined by the base
        case Domain::fs: {
            r.donor = detail::generate_smooth_image(n, rng.substream("donor"), id + "-donor",
                                                    family);
            r.rect_w = n / 4 + art.uniform_int(n / 4 + 1); // [n/4, n/2]
            r.rect_h = n / 4 + art.uniform_int(n / 4 + 1);
            r.rect_x = art.uniform_int(n - r.rect_w + 1);
            r.rect_y = art.uniform_int(n - r.rect_h + 1);
            break;
        }
        case Domain::fe: {
            r.sharpen_gain = 1.5;
            r.rect_w = n / 4 + art.uniform_int(n / 4 + 1);
            r.rect_h = n / 4 + art.uniform_int(n / 4 + 1);
            r.rect_x = art.uniform_int(n - r.rect_w + 1);
            r.rect_y = art.uniform_int(n - r.rect_h + 1);
            break;
        }
    }
    return r;
}

/// Forged sample of the given family at spec.artifact_strength:
///   t2i: faint additive periodic tones (strong pure bins in the spectrum)
///   i2i: blend toward a 2x nearest-neighbor upscale of the half-res base
///   fs:  donor patch pasted over a rectangle with a 1-pixel hard seam
///   fe:  local unsharp-mask sharpening inside a rectangle
inline ImageSample generate_fake(const CorpusSpec& spec, Domain family, std::size_t index) {
    const double s = spec.strength(family);
    FakeRecipe r = fake_recipe(spec, family, index);
    const std::size_t n = spec.image_size;
    ImageSample img = r.base; // carries id, label=1, domain

    switch (family) {
        case Domain::t2i: {
            const double amp = s * r.tone_amplitude;
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    double wave = 0.0;
                    for (const auto& tone : r.tones) {
                        const double arg =
                            6.283185307179586 *
                                (static_cast<double>(tone.kx) * static_cast<double>(x) /
                                     static_cast<double>(n) +
                                 static_cast<double>(tone.ky) * static_cast<double>(y) /
                                     static_cast<double>(n)) +
                            tone.phase;
                        wave += std::sin(arg);
                    }
                    for (std::size_t c = 0; c < 3; ++c) {
                        img.at(y, x, c) = detail::clamp01(r.base.at(y, x, c) + amp * wave);
                    }
                }
            }
            break;
        }
        case Domain::i2i: {
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    const std::size_t by = (y / 2) * 2, bx = (x / 2) * 2;
                    for (std::size_t c = 0; c < 3; ++c) {
                        const double block = 0.25 * (r.base.at(by, bx, c) + r.base.at(by, bx + 1, c) +
                                                     r.base.at(by + 1, bx, c) +
                                                     r.base.at(by + 1, bx + 1, c));
                        img.at(y, x, c) = (1.0 - s) * r.base.at(y, x, c) + s * block;
                    }
                }
            }
            break;
        }
        case Domain::fs: {
            for (std::size_t y = r.rect_y; y < r.rect_y + r.rect_h; ++y) {
                for (std::size_t x = r.rect_x; x < r.rect_x + r.rect_w; ++x) {
                    const bool seam = (y == r.rect_y || y + 1 == r.rect_y + r.rect_h ||
                                       x == r.rect_x || x + 1 == r.rect_x + r.rect_w);
                    for (std::size_t c = 0; c < 3; ++c) {
                        const double target =
                            seam ? 0.35 * r.donor.at(y, x, c) : r.donor.at(y, x, c);
                        img.at(y, x, c) = (1.0 - s) * r.base.at(y, x, c) + s * target;
                    }
                }
            }
            break;
        }
        case Domain::fe: {
            for (std::size_t y = r.rect_y; y < r.rect_y + r.rect_h; ++y) {
                for (std::size_t x = r.rect_x; x < r.rect_x + r.rect_w; ++x) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        double acc = 0.0;
                        for (int dy = -1; dy <= 1; ++dy) {
                            for (int dx = -1; dx <= 1; ++dx) {
                                // clamped-edge 3x3 box blur
                                std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
                                std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
                                yy = std::min<std::ptrdiff_t>(std::max<std::ptrdiff_t>(yy, 0),
                                                              static_cast<std::ptrdiff_t>(n) - 1);
                                xx = std::min<std::ptrdiff_t>(std::max<std::ptrdiff_t>(xx, 0),
                                                              static_cast<std::ptrdiff_t>(n) - 1);
                                acc += r.base.at(static_cast<std::size_t>(yy),
                                                 static_cast<std::size_t>(xx), c);
                            }
                        }
                        const double blur = acc / 9.0;
                        const double v = r.base.at(y, x, c) +
                                         s * r.sharpen_gain * (r.base.at(y, x, c) - blur);
                        img.at(y, x, c) = detail::clamp01(v);
                    }
                }
            }
            break;
        }
    }
    return img;
}

/// Fraction of (non-DC) spectral energy in the outer half of the frequency
/// radius. Separates smooth reals from grid-artifact fakes.
inline double high_frequency_energy_ratio(const ImageSample& img) {
    ComplexSpectrum spec = fft2d(to_grayscale(img));
    const std::size_t h = spec.height, w = spec.width;
    const double rmax = std::sqrt(static_cast<double>(h * h + w * w)) / 2.0;
    double total = 0.0, high = 0.0;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            if (u == 0 && v == 0) continue; // DC carries no artifact signal
            const double fu = static_cast<double>(std::min(u, h - u));
            const double fv = static_cast<double>(std::min(v, w - v));
            const double e = std::norm(spec.at(u, v));
            total += e;
            if (std::sqrt(fu * fu + fv * fv) >= 0.5 * rmax) high += e;
        }
    }
    return total > 0.0 ? high / total : 0.0;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class Protocol { in_domain, cross_domain };

inline std::string to_string(Protocol p) {
    return p == Protocol::in_domain ? "in-domain" : "cross-domain";
}

inline Protocol protocol_from(const std::string& s) {
    if (s == "in-domain") return Protocol::in_domain;
    if (s == "cross-domain") return Protocol::cross_domain;
    throw ConfigError("unknown protocol '" + s + "' (expected in-domain or cross-domain)");
}

struct SplitSpec {
    Protocol protocol = Protocol::in_domain;
    Domain train_domain = Domain::t2i;
    Domain test_domain = Domain::t2i; // cross-domain only
};

struct CorpusSplit {
    std::vector<ImageSample> train;
    std::vector<ImageSample> test;
    SplitSpec spec;
};

/// All samples (reals and fakes, interleaved) of one domain for index
/// range [begin, end).
inline std::vector<ImageSample> generate_domain_samples(const CorpusSpec& spec, Domain d,
                                                        std::size_t begin, std::size_t end) {
    std::vector<ImageSample> out;
    out.reserve(2 * (end - begin));
    for (std::size_t i = begin; i < end; ++i) {
        out.push_back(generate_real(spec, d, i));
        out.push_back(generate_fake(spec, d, i));
    }
    return out;
}

/// In-domain: 80/20 split within one family, both sides class-balanced.
/// Cross-domain: train on all of one family, test on all of another.
/// Sample ids never appear on both sides.
inline CorpusSplit build_split(const CorpusSpec& spec, const SplitSpec& split) {
    spec.validate(true);
    CorpusSplit out;
    out.spec = split;
    const std::size_t n = spec.samples_per_domain_per_class;
    if (split.protocol == Protocol::in_domain) {
        const std::size_t n_train = n * 8 / 10;
        out.train = generate_domain_samples(spec, split.train_domain, 0, n_train);
        out.test = generate_domain_samples(spec, split.train_domain, n_train, n);
    } else {
        if (split.train_domain == split.test_domain) {
            throw ConfigError("cross-domain protocol requires distinct train and test domains");
        }
        out.train = generate_domain_samples(spec, split.train_domain, 0, n);
        out.test = generate_domain_samples(spec, split.test_domain, 0, n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus directory: <root>/<domain>/<split>/<id>.png + manifest.tsv
// (tab-separated: id, label, domain, split).
// ---------------------------------------------------------------------------

inline void export_corpus(const CorpusSplit& split, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.tsv");
    if (!manifest) throw IoError("cannot write manifest: " + (dir / "manifest.tsv").string());
    manifest << "id\tlabel\tdomain\tsplit\n";
    auto dump = [&](const std::vector<ImageSample>& samples, const std::string& part) {
        for (const ImageSample& s : samples) {
            const fs::path sub = dir / to_string(s.domain) / part;
            fs::create_directories(sub);
            write_png_rgb(sub / (s.id + ".png"), s);
            manifest << s.id << '\t' << s.label << '\t' << to_string(s.domain) << '\t' << part
                     << '\n';
        }
    };
    dump(split.train, "train");
    dump(split.test, "test");
    if (!manifest) throw IoError("manifest write failed: " + (dir / "manifest.tsv").string());
}

inline CorpusSplit import_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path mpath = dir / "manifest.tsv";
    std::ifstream manifest(mpath);
    if (!manifest) throw IoError("missing manifest: " + mpath.string());

    CorpusSplit out;
    std::string line;
    std::getline(manifest, line); // header
    if (line != "id\tlabel\tdomain\tsplit") {
        throw IoError("manifest header mismatch in " + mpath.string());
    }
    std::size_t lineno = 1;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string id, label_s, domain_s, part;
        if (!std::getline(row, id, '\t') || !std::getline(row, label_s, '\t') ||
            !std::getline(row, domain_s, '\t') || !std::getline(row, part, '\t')) {
            throw IoError("malformed manifest row " + std::to_string(lineno) + " in " +
                          mpath.string());
        }
        ImageSample s;
        s.id = id;
        s.label = (label_s == "1") ? 1 : (label_s == "0" ? 0 : -1);
        if (s.label < 0) throw IoError("bad label in manifest row " + std::to_string(lineno));
        s.domain = domain_from(domain_s);
        const fs::path png = dir / domain_s / part / (id + ".png");
        if (!fs::exists(png)) throw IoError("manifest entry has no image file: " + png.string());
        read_png_rgb(png, s.height, s.width, s.pixels);
        s.validate();
        if (part == "train") {
            out.train.push_back(std::move(s));
        } else if (part == "test") {
            out.test.push_back(std::move(s));
        } else {
            throw IoError("unknown split '" + part + "' in manifest row " + std::to_string(lineno));
        }
    }

    // Reconstruct the protocol from what the manifest holds.
    auto domain_of = [](const std::vector<ImageSample>& v) {
        return v.empty() ? Domain::t2i : v.front().domain;
    };
    out.spec.train_domain = domain_of(out.train);
    out.spec.test_domain = domain_of(out.test);
    out.spec.protocol = (out.spec.train_domain == out.spec.test_domain) ? Protocol::in_domain
                                                                        : Protocol::cross_domain;
    return out;
}

} // namespace specfuse
