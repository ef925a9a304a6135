#pragma once

// Elliptic integral of the first kind and the Jacobi elliptic functions.
//
// The second argument is always the PARAMETER m (k^2 in modulus notation),
// following Abramowitz & Stegun ch. 16-17 and DLMF 22.
//
//   F(phi | m) = int_0^phi dtheta / sqrt(1 - m sin^2 theta)
//   am(F(phi | m), m) = phi,  sn = sin am,  cn = cos am,  dn = sqrt(1 - m sn^2)
//
// Both F and the Jacobi functions are evaluated with the descending Landen
// (arithmetic-geometric mean) ladder, stopped once the running modulus
// c_n / a_n drops below 1e-14.  Parameters within 1e-12 of 1 use the
// separatrix closed forms.  Parameters m > 1 go through the reciprocal
// transformation, which maps them back into (0, 1).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dicke/error.hpp"

namespace dicke::elliptic {

struct JacobiTriple {
    double sn = 0.0;
    double cn = 1.0;
    double dn = 1.0;
};

inline constexpr double kModulusTolerance = 1e-14;
inline constexpr double kSeparatrixTolerance = 1e-12;

namespace detail {

inline void require_unit_parameter(double m, const char* who) {
    if (!(m >= 0.0 && m <= 1.0)) {
        throw DomainError(std::string(who) + ": parameter m = " + std::to_string(m) +
                          " outside [0, 1]; use reciprocal_transform for m > 1");
    }
}

inline bool at_separatrix(double m) noexcept { return std::abs(1.0 - m) < kSeparatrixTolerance; }

// Descending Landen ladder a_n, c_n with b_n implicit.
struct Ladder {
    static constexpr int kMaxDepth = 24;
    std::array<double, kMaxDepth + 1> a{};
    std::array<double, kMaxDepth + 1> c{};
    int depth = 0;
};

inline Ladder landen_ladder(double m) noexcept {
    Ladder l;
    l.a[0] = 1.0;
    l.c[0] = std::sqrt(m);
    double b = std::sqrt(1.0 - m);
    int n = 0;
    while (std::abs(l.c[n] / l.a[n]) > kModulusTolerance && n < Ladder::kMaxDepth) {
        const double an = l.a[n];
        l.a[n + 1] = 0.5 * (an + b);
        l.c[n + 1] = 0.5 * (an - b);
        b = std::sqrt(an * b);
        ++n;
    }
    l.depth = n;
    return l;
}

// Amplitude for |u| <= K (no period reduction).
inline double amplitude_core(double u, const Ladder& l) noexcept {
    double phi = std::ldexp(l.a[l.depth] * u, l.depth);
    for (int n = l.depth; n >= 1; --n) {
        const double t = std::clamp(l.c[n] * std::sin(phi) / l.a[n], -1.0, 1.0);
        phi = 0.5 * (std::asin(t) + phi);
    }
    return phi;
}

// F(phi | m) for 0 <= phi <= pi/2 and 0 < m < 1 (Landen with tangent
// tracking, as in Cephes ellik).
inline double incomplete_principal(double phi, double m, double kc) {
    constexpr double pi = std::numbers::pi;
    const double b0 = std::sqrt(1.0 - m);
    double t = std::tan(phi);
    if (std::abs(t) > 10.0) {
        // Complementary amplitude: F(phi) = K - F(atan(1/(b0 tan phi))).
        const double e = 1.0 / (b0 * t);
        if (std::abs(e) < 10.0) return kc - incomplete_principal(std::atan(e), m, kc);
    }
    double a = 1.0;
    double b = b0;
    double c = std::sqrt(m);
    double d = 1.0;
    double mod = 0.0;
    int guard = 0;
    while (std::abs(c / a) > kModulusTolerance && guard++ < Ladder::kMaxDepth) {
        const double ratio = b / a;
        phi = phi + std::atan(t * ratio) + mod * pi;
        mod = std::trunc((phi + 0.5 * pi) / pi);
        const double denom = 1.0 - ratio * t * t;
        t = (std::abs(denom) > 10.0 * std::numeric_limits<double>::epsilon())
                ? t * (1.0 + ratio) / denom
                : std::tan(phi);
        c = 0.5 * (a - b);
        const double gm = std::sqrt(a * b);
        a = 0.5 * (a + b);
        b = gm;
        d += d;
    }
    return (std::atan(t) + mod * pi) / (d * a);
}

}  // namespace detail

/// Complete integral K(m) = F(pi/2 | m) via the AGM.
inline double ellint_k(double m) {
    if (!(m >= 0.0 && m <= 1.0)) {
        throw DomainError("ellint_k: parameter m = " + std::to_string(m) + " outside [0, 1)");
    }
    if (m == 1.0) throw DomainError("ellint_k: K(m) diverges at m = 1");
    const auto l = detail::landen_ladder(m);
    return std::numbers::pi / (2.0 * l.a[l.depth]);
}

/// Incomplete integral F(phi | m); odd in phi, F(phi + pi) = F(phi) + 2K.
inline double ellint_f(double phi, double m) {
    constexpr double pi = std::numbers::pi;
    detail::require_unit_parameter(m, "ellint_f");
    if (m == 0.0) return phi;
    if (detail::at_separatrix(m)) {
        if (std::abs(phi) >= 0.5 * pi) return std::copysign(std::numeric_limits<double>::infinity(), phi);
        return std::atanh(std::sin(phi));
    }
    const double kc = ellint_k(m);
    const double n = std::round(phi / pi);
    const double r = phi - n * pi;
    const double ar = std::abs(r);
    const double principal = (0.5 * pi - ar <= 4.0 * std::numeric_limits<double>::epsilon())
                                 ? kc
                                 : detail::incomplete_principal(ar, m, kc);
    return 2.0 * n * kc + std::copysign(principal, r);
}

namespace detail {

// Reduce u to [-K, K]: u = r + 2K n.
struct Reduced {
    double r;
    double n;
};

inline Reduced reduce_half_period(double u, double kc) noexcept {
    if (std::abs(u) <= kc) return {u, 0.0};
    const double n = std::round(u / (2.0 * kc));
    return {u - 2.0 * kc * n, n};
}

}  // namespace detail

/// Jacobi amplitude am(u, m): continuous and unbounded in u for m < 1.
inline double jacobi_am(double u, double m) {
    detail::require_unit_parameter(m, "jacobi_am");
    if (m == 0.0) return u;
    if (detail::at_separatrix(m)) return std::atan(std::sinh(u));  // Gudermannian
    const auto l = detail::landen_ladder(m);
    const double kc = std::numbers::pi / (2.0 * l.a[l.depth]);
    const auto red = detail::reduce_half_period(u, kc);
    return detail::amplitude_core(red.r, l) + red.n * std::numbers::pi;
}

/// (sn, cn, dn)(u | m) for 0 <= m <= 1.
inline JacobiTriple jacobi_sn_cn_dn(double u, double m) {
    detail::require_unit_parameter(m, "jacobi_sn_cn_dn");
    if (m == 0.0) return {std::sin(u), std::cos(u), 1.0};
    if (detail::at_separatrix(m)) {
        const double sech = 1.0 / std::cosh(u);
        return {std::tanh(u), sech, sech};
    }
    const auto l = detail::landen_ladder(m);
    const double kc = std::numbers::pi / (2.0 * l.a[l.depth]);
    const auto red = detail::reduce_half_period(u, kc);
    const double phi = detail::amplitude_core(red.r, l);
    JacobiTriple j;
    j.sn = std::sin(phi);
    j.cn = std::cos(phi);
    // Stays accurate where cn vanishes, unlike the ladder ratio cn / cos(phi1 - phi0).
    j.dn = std::sqrt(j.cn * j.cn + (1.0 - m) * j.sn * j.sn);
    if (std::fmod(std::abs(red.n), 2.0) == 1.0) {
        j.sn = -j.sn;
        j.cn = -j.cn;
    }
    return j;
}

/// Jacobi triple for m > 1 from the parameter 1/m:
///   sn(u|m) = sn(sqrt(m) u | 1/m) / sqrt(m)
///   cn(u|m) = dn(sqrt(m) u | 1/m)
///   dn(u|m) = cn(sqrt(m) u | 1/m)
inline JacobiTriple reciprocal_transform(double u, double m) {
    if (!(m > 1.0) || !std::isfinite(m)) {
        throw DomainError("reciprocal_transform: requires finite m > 1, got " + std::to_string(m));
    }
    const double root = std::sqrt(m);
    const auto r = jacobi_sn_cn_dn(root * u, 1.0 / m);
    return {r.sn / root, r.dn, r.cn};
}

/// Any parameter m >= 0, dispatching to the reciprocal transform above 1.
inline JacobiTriple jacobi(double u, double m) {
    if (m > 1.0 && !detail::at_separatrix(m)) return reciprocal_transform(u, m);
    return jacobi_sn_cn_dn(u, std::min(m, 1.0));
}

/// Real period of sn(., m) for any m >= 0 (infinite at m = 1).
inline double sn_period(double m) {
    if (detail::at_separatrix(m)) return std::numeric_limits<double>::infinity();
    if (m > 1.0) return 4.0 * ellint_k(1.0 / m) / std::sqrt(m);
    return 4.0 * ellint_k(m);
}

}  // namespace dicke::elliptic
