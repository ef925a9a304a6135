#pragma once

// Closed-form "bound luminosity" orbits of the slaved spin flow
//
//   dSz/dt = -eps g^2 Sx Sy,  dSx/dt = omega0 Sy + eps g^2 Sy Sz,  dSy/dt = -omega0 Sx
//
// with the oscillator locked to q = 0, p = -g Sy.
//
// Two conserved quantities fix the orbit: the sphere S^2 and the parabolic
// sheet Sz = a Sy^2 + C with a = eps g^2 / (2 omega0).  Eliminating Sy and Sx
// leaves a cubic for dSz/dt:
//
//   (dSz/dt)^2 = 4 omega0^2 (Sz - C) (a (S^2 - Sz^2) - (Sz - C)).
//
// The problem is solved in the frame where eps > 0 (Sz -> sign(eps) Sz maps
// eps -> -eps exactly), with turning points C' = sign(eps) C and the roots
// r- < r+ of the sphere factor.  With
//
//   k = (r+ - r-) / (r+ - C'),   u = u_rate t,   u_rate = omega0 sqrt(a' (r+ - C'))
//
// the orbit is
//
//   Sz = sign(eps) [ r+ - (r+ - r-) sn^2(u, k) ]
//   Sy = sigma sqrt((r+ - C') / a') dn(u, k)
//   Sx = -(dSy/dt) / omega0
//
// k < 1 is the rotating branch (Sy never vanishes), k > 1 is libration and is
// evaluated through the reciprocal transform, k = 1 is the separatrix.  When
// g >> g_c the sphere roots approach +-S and k, u_rate approach the pendulum
// values 2 / (1 + E'/(omega0 S)) and sqrt(eps g^2 omega0 S / k).

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dicke/elliptic.hpp"
#include "dicke/error.hpp"
#include "dicke/model.hpp"

namespace dicke {

struct BoundLuminosityParams {
    double energy = 0.0;    ///< E = -omega0 C
    double c_const = 0.0;   ///< C = Sz - eps g^2 Sy^2 / (2 omega0)
    double k_param = 0.0;   ///< pendulum parameter 2 / (1 + sign(eps) E / (omega0 S)); regime label
    double u_rate = 0.0;    ///< du/dt of the elliptic argument
    int eps_sign = 0;
    int sy_sign = 1;        ///< sign of Sy at t = 0

    double root_upper = 0.0;     ///< r+ (eps > 0 frame), the turning point reached at t = 0
    double root_lower = 0.0;     ///< r-
    double k_elliptic = 0.0;     ///< elliptic parameter of the waveform
    double sy_amplitude = 0.0;   ///< |Sy| at t = 0
    double pendulum_u_rate = 0.0;  ///< g_c / (g sqrt(k_param)), kept for comparison only

    [[nodiscard]] bool rotating() const noexcept { return k_param < 1.0; }
    [[nodiscard]] bool separatrix() const noexcept {
        return std::abs(k_elliptic - 1.0) < elliptic::kSeparatrixTolerance;
    }
};

namespace detail {

inline BoundLuminosityParams bl_from_c(const ModelParams& m, double c, int sy_sign) {
    m.validate();
    if (m.epsilon == 0.0) {
        throw DegenerateError("bound luminosity: epsilon = 0 has no bound-luminosity regime (pure precession)");
    }
    if (!(m.g > 0.0)) throw DegenerateError("bound luminosity: requires g > 0");
    if (!std::isfinite(c)) throw ValidationError("bound luminosity: C is not finite");

    const double s = m.spin_s;
    const int es = sign_of(m.epsilon);
    const double a = std::abs(m.epsilon) * m.g * m.g / (2.0 * m.omega0);
    const double cc = es * c;

    BoundLuminosityParams b;
    b.c_const = c;
    b.energy = -m.omega0 * c;
    b.eps_sign = es;
    b.sy_sign = sy_sign < 0 ? -1 : 1;

    const double e_frame = es * b.energy;
    const double denom = 1.0 + e_frame / (m.omega0 * s);
    if (std::abs(denom) < 1e-14) {
        throw DegenerateError("bound luminosity: E = -omega0 S (frame energy), spin at rest at the stable pole");
    }
    b.k_param = 2.0 / denom;

    const double inv_a = 1.0 / a;
    const double disc = inv_a * inv_a + 4.0 * (s * s + cc * inv_a);
    if (disc < 0.0) {
        throw DegenerateError("bound luminosity: energy " + std::to_string(b.energy) +
                              " lies outside the range reachable on the spin sphere");
    }
    const double sq = std::sqrt(disc);
    b.root_lower = -0.5 * (inv_a + sq);
    b.root_upper = -(s * s + cc * inv_a) / b.root_lower;  // product of roots

    const double reach = b.root_upper - cc;
    if (!(reach > 1e-14 * s) || b.root_upper < b.root_lower) {
        throw DegenerateError("bound luminosity: orbit collapses to a stable pole (no motion)");
    }
    b.k_elliptic = (b.root_upper - b.root_lower) / reach;
    b.u_rate = m.omega0 * std::sqrt(a * reach);
    b.sy_amplitude = std::sqrt(reach / a);

    const double gc = *critical_coupling(m);
    b.pendulum_u_rate = b.k_param > 0.0 ? gc / (m.g * std::sqrt(b.k_param))
                                        : std::numeric_limits<double>::quiet_NaN();
    return b;
}

inline void check_consistent(const ModelParams& m, const BoundLuminosityParams& b) {
    const auto ref = bl_from_c(m, b.c_const, b.sy_sign);
    auto close = [](double x, double y) {
        return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)});
    };
    if (b.eps_sign != ref.eps_sign || !close(b.energy, ref.energy) || !close(b.k_param, ref.k_param) ||
        !close(b.u_rate, ref.u_rate) || !close(b.k_elliptic, ref.k_elliptic) ||
        !close(b.root_upper, ref.root_upper) || !close(b.root_lower, ref.root_lower) ||
        !close(b.sy_amplitude, ref.sy_amplitude) || !(b.u_rate > 0.0)) {
        throw ValidationError("BoundLuminosityParams inconsistent with model parameters");
    }
}

}  // namespace detail

/// Constants of the orbit through spin0 (which must lie on the sphere of radius S).
/// The branch of Sy at t = 0 follows the sign of spin0.sy.
inline BoundLuminosityParams bl_constants(const ModelParams& m, const SpinVector& spin0) {
    m.validate();
    const double n = spin_norm(spin0);
    if (std::abs(n - m.spin_s) > 1e-9 * m.spin_s) {
        throw ValidationError("bl_constants: |spin0| = " + std::to_string(n) + " differs from S");
    }
    const double a = m.epsilon * m.g * m.g / (2.0 * m.omega0);
    const double c = spin0.sz - a * spin0.sy * spin0.sy;
    return detail::bl_from_c(m, c, spin0.sy < 0.0 ? -1 : 1);
}

/// Constants of the orbit with reduced energy E.
inline BoundLuminosityParams bl_constants_from_energy(const ModelParams& m, double energy, int sy_sign = 1) {
    return detail::bl_from_c(m, -energy / m.omega0, sy_sign);
}

/// State on the slaved manifold at time t; t = 0 is the turning point
/// Sz = sign(eps) r+ where Sx = 0.
inline PhaseState bl_state(const ModelParams& m, const BoundLuminosityParams& b, double t) {
    detail::check_consistent(m, b);
    const double u = b.u_rate * t;
    const auto j = elliptic::jacobi(u, b.k_elliptic);
    const double sz_frame = b.root_upper - (b.root_upper - b.root_lower) * j.sn * j.sn;
    PhaseState s;
    s.sz = b.eps_sign * sz_frame;
    s.sy = b.sy_sign * b.sy_amplitude * j.dn;
    // d(dn)/du = -k sn cn, and dSy/dt = -omega0 Sx.
    s.sx = b.sy_sign * b.sy_amplitude * b.k_elliptic * b.u_rate * j.sn * j.cn / m.omega0;
    s.p = -m.g * s.sy;
    s.q = 0.0;
    return s;
}

/// Period of the full state (Sx, Sy, Sz).  On the libration branch Sz
/// repeats twice per period while Sy changes sign.
inline double bl_period(const ModelParams& m, const BoundLuminosityParams& b) {
    detail::check_consistent(m, b);
    if (b.separatrix()) throw DegenerateError("bl_period: separatrix orbit (k = 1) has infinite period");
    if (b.k_elliptic < 1.0) return 2.0 * elliptic::ellint_k(b.k_elliptic) / b.u_rate;
    const double root = std::sqrt(b.k_elliptic);
    return 4.0 * elliptic::ellint_k(1.0 / b.k_elliptic) / (root * b.u_rate);
}

/// Period of Sz(t) alone: equal to bl_period when rotating, half of it when librating.
inline double bl_sz_period(const ModelParams& m, const BoundLuminosityParams& b) {
    const double t = bl_period(m, b);
    return b.k_elliptic < 1.0 ? t : 0.5 * t;
}

struct ExchangeEnergies {
    double dipole = 0.0;   ///< p Sy = -g Sy^2
    double zeeman = 0.0;   ///< -omega0 Sz
};

inline ExchangeEnergies bl_energies(const ModelParams& m, const BoundLuminosityParams& b, double t) {
    const auto s = bl_state(m, b, t);
    return {s.p * s.sy, -m.omega0 * s.sz};
}

/// Potential of the Sy oscillator in the scaled coordinate x = Sy/S (mass 1/omega0):
///   U = (omega0/8) r^4 x^4 + (omega0/2) (1 + sign(eps) r^2 C/S) x^2,  r = g/g_c.
inline double quartic_potential(const ModelParams& m, double c_const, double x) {
    if (m.epsilon == 0.0) throw DomainError("quartic_potential: requires epsilon != 0");
    const double gc = *critical_coupling(m);
    const double r2 = (m.g / gc) * (m.g / gc);
    const double x2 = x * x;
    const double quadratic = 1.0 + sign_of(m.epsilon) * r2 * c_const / m.spin_s;
    return m.omega0 / 8.0 * r2 * r2 * x2 * x2 + 0.5 * m.omega0 * quadratic * x2;
}

/// Coefficient of x^2 in quartic_potential, divided by omega0/2.
inline double quartic_curvature_factor(const ModelParams& m, double c_const) {
    if (m.epsilon == 0.0) throw DomainError("quartic_curvature_factor: requires epsilon != 0");
    const double gc = *critical_coupling(m);
    const double r2 = (m.g / gc) * (m.g / gc);
    return 1.0 + sign_of(m.epsilon) * r2 * c_const / m.spin_s;
}

/// True iff sign(eps) C < -(g_c/g)^2 S (strict).
inline bool is_double_well(const ModelParams& m, double c_const) {
    if (m.epsilon == 0.0) throw DomainError("is_double_well: requires epsilon != 0");
    if (m.g == 0.0) return false;
    const double gc = *critical_coupling(m);
    return sign_of(m.epsilon) * c_const < -(gc * gc) / (m.g * m.g) * m.spin_s;
}

/// Minima of the quartic potential at x = +-sqrt(-2 (1 + r^2 C'/S)) / r^2 (double well only).
inline double quartic_well_position(const ModelParams& m, double c_const) {
    if (!is_double_well(m, c_const)) return 0.0;
    const double gc = *critical_coupling(m);
    const double r2 = (m.g / gc) * (m.g / gc);
    return std::sqrt(-2.0 * quartic_curvature_factor(m, c_const)) / r2;
}

}  // namespace dicke
