#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace bisac {

/// Deterministic 64-bit generator (xorshift-multiply mixing, splitmix64).
/// All randomness in the library flows through this so that runs are
/// bit-reproducible for a fixed master seed on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard real Gaussian (Box-Muller, one value cached).
    double next_gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    /// Circular complex Gaussian with E|z|^2 = variance.
    std::complex<double> next_cgaussian(double variance = 1.0) {
        const double s = std::sqrt(variance / 2.0);
        return {s * next_gaussian(), s * next_gaussian()};
    }

    /// Unit-modulus QPSK symbol, phases pi/4 + k pi/2.
    std::complex<double> next_qpsk() {
        static constexpr double inv_sqrt2 = 0.7071067811865475244;
        switch (next_u64() & 3u) {
            case 0: return {inv_sqrt2, inv_sqrt2};
            case 1: return {-inv_sqrt2, inv_sqrt2};
            case 2: return {-inv_sqrt2, -inv_sqrt2};
            default: return {inv_sqrt2, -inv_sqrt2};
        }
    }

    /// Independent child stream; distinct tags give decorrelated streams.
    Rng fork(std::uint64_t tag) {
        Rng child(next_u64() ^ (0xA0761D6478BD642FULL * (tag + 1)));
        return child;
    }

private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

/// Stable sub-seed derivation without consuming the parent stream.
inline std::uint64_t subseed(std::uint64_t master, std::uint64_t tag) {
    Rng r(master ^ (0x9E3779B97F4A7C15ULL * (tag + 0x632BE59BD9B4E019ULL)));
    return r.next_u64();
}

}  // namespace bisac
