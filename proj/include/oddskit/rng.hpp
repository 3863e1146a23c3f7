#pragma once

// ---------------------------------------------------------------------------
// Deterministic random number plumbing.
//
// Every stochastic routine takes (seed, stream) and derives an independent
// substream via splitmix64 mixing, so e.g. Brownian draws and jump draws of
// one path come from separate engines and antithetic variates can flip the
// Gaussian stream without touching the jump stream.
// Normals come from a single uniform through an inverse-CDF approximation:
// exactly one engine draw per variate, no hidden distribution state.
// ---------------------------------------------------------------------------

#include <cmath>
#include <cstdint>
#include <random>

namespace oddskit {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stable substream seed for (seed, a, b), e.g. a = path index, b = role.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (0x51f15eedULL + b));
}

// Inverse normal CDF (Acklam's rational approximation, |rel err| < 1.2e-9).
inline double inverse_normal_cdf(double u) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double q, r;
    if (u < plow) {
        q = std::sqrt(-2.0 * std::log(u));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (u > 1.0 - plow) {
        q = std::sqrt(-2.0 * std::log(1.0 - u));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = u - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

class rng_stream {
  public:
    explicit rng_stream(std::uint64_t seed) : eng_(seed) {}

    // Uniform on the open interval (0, 1); one engine draw.
    double uniform() {
        const std::uint64_t bits = eng_() >> 11; // 53 random bits
        return (static_cast<double>(bits) + 0.5) * 0x1p-53;
    }

    double normal() { return inverse_normal_cdf(uniform()); }

    // Exponential with unit rate.
    double exponential() { return -std::log(uniform()); }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
};

} // namespace oddskit
