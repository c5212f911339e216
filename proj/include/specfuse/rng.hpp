#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace specfuse {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Seedable, splittable random stream.
///
/// The engine is std::mt19937_64 (bit-exact across platforms by the
/// standard); the distributions are implemented here because the
/// std::*_distribution classes are implementation-defined and would break
/// cross-build reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : Rng(detail::splitmix64(seed), MixedTag{}) {}

    /// Derives an independent stream from (seed, label), e.g. one stream
    /// per corpus sample id or per parameter name.
    static Rng stream(std::uint64_t seed, std::string_view label) {
        return Rng(detail::splitmix64(detail::splitmix64(seed) ^ detail::fnv1a64(label)),
                   MixedTag{});
    }

    /// Derives a further independent stream from this stream's identity.
    /// Independent of how many values were already drawn.
    Rng substream(std::string_view label) const {
        return Rng(detail::splitmix64(origin_ ^ detail::fnv1a64(label)), MixedTag{});
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    /// Deterministic Fisher-Yates shuffle (std::shuffle draws from
    /// implementation-defined distributions, so it is avoided).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    struct MixedTag {};
    Rng(std::uint64_t mixed, MixedTag) : origin_(mixed), engine_(mixed) {}

    std::uint64_t origin_;
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

} // namespace specfuse
