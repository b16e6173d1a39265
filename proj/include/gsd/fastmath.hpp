#pragma once

#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>

namespace gsd {

// Vectorizable double-precision exp (Cephes-style rational approximation,
// ~2 ulp). libm's exp is correctly rounded but compiles to a scalar call
// that dominates the softmax and activation loops; this version inlines
// into SIMD code. Deterministic: pure arithmetic, no tables.
inline double fast_exp(double x) {
    constexpr double kLog2E = 1.4426950408889634073599;
    constexpr double kC1 = 6.93145751953125e-1;        // ln2 high part
    constexpr double kC2 = 1.42860682030941723212e-6;  // ln2 low part
    constexpr double kMaxArg = 708.0;

    if (!(x < kMaxArg)) {
        // +inf and NaN propagate; large finite arguments overflow to +inf.
        return x != x ? x : std::numeric_limits<double>::infinity();
    }
    if (x < -kMaxArg) return 0.0;

    double n = std::floor(kLog2E * x + 0.5);
    x -= n * kC1;
    x -= n * kC2;

    const double xx = x * x;
    double px = x * (((1.26177193074810590878e-4 * xx + 3.02994407707441961300e-2) * xx) +
                     9.99999999999999999910e-1);
    const double qx = (((3.00198505138664455042e-6 * xx + 2.52448340349684104192e-3) * xx +
                        2.27265548208155028766e-1) *
                           xx +
                       2.00000000000000000005e0);
    const double e = px / (qx - px);
    double r = 1.0 + 2.0 * e;

    // Multiply by 2^n through the exponent bits.
    const auto bits = static_cast<std::int64_t>(n);
    const std::uint64_t pow2 = static_cast<std::uint64_t>(bits + 1023) << 52;
    return r * std::bit_cast<double>(pow2);
}

// Branch-free logistic built on fast_exp; exact at the extremes (overflow
// of exp yields 0 or 1).
inline double fast_sigmoid(double z) { return 1.0 / (1.0 + fast_exp(-z)); }

}  // namespace gsd
