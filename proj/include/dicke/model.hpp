#pragma once

// Classical limit of the extended Dicke model: one oscillator mode (q, p)
// coupled to a collective spin S of fixed length.
//
//   H = (p^2 + omega^2 q^2)/2 + g p Sy - omega0 Sz + (1 + eps) g^2 Sy^2 / 2
//
// Units: hbar = 1. All five constants are explicit; nothing is rescaled here.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "dicke/error.hpp"

namespace dicke {

struct ModelParams {
    double omega = 1.0;    ///< resonator frequency
    double omega0 = 1.0;   ///< two-level splitting
    double g = 0.0;        ///< coupling constant
    double epsilon = -1.0; ///< direct spin-spin interaction; -1 is the ordinary Dicke model
    double spin_s = 1.0;   ///< total spin length S

    /// Throws ValidationError naming the first violated constraint.
    void validate() const {
        auto fail = [](const std::string& what) { throw ValidationError("ModelParams: " + what); };
        if (!std::isfinite(omega) || !(omega > 0.0)) fail("omega must be finite and > 0");
        if (!std::isfinite(omega0) || !(omega0 > 0.0)) fail("omega0 must be finite and > 0");
        if (!std::isfinite(g) || !(g >= 0.0)) fail("g must be finite and >= 0");
        if (!std::isfinite(epsilon)) fail("epsilon must be finite");
        if (!std::isfinite(spin_s) || !(spin_s > 0.0)) fail("spin_s must be finite and > 0");
    }

    [[nodiscard]] bool valid() const noexcept {
        try {
            validate();
            return true;
        } catch (const ValidationError&) {
            return false;
        }
    }
};

/// Spin block of a phase-space point.
struct SpinVector {
    double sx = 0.0;
    double sy = 0.0;
    double sz = 0.0;

    friend bool operator==(const SpinVector&, const SpinVector&) = default;
};

/// A point (Sx, Sy, Sz, p, q) on S^2 x R^2, or its time derivative.
struct PhaseState {
    double sx = 0.0;
    double sy = 0.0;
    double sz = 0.0;
    double p = 0.0;
    double q = 0.0;

    [[nodiscard]] constexpr SpinVector spin() const noexcept { return {sx, sy, sz}; }

    [[nodiscard]] constexpr std::array<double, 5> to_array() const noexcept {
        return {sx, sy, sz, p, q};
    }
    static constexpr PhaseState from_array(const std::array<double, 5>& a) noexcept {
        return {a[0], a[1], a[2], a[3], a[4]};
    }

    friend bool operator==(const PhaseState&, const PhaseState&) = default;
};

/// Max-norm of all five components.
inline double max_abs(const PhaseState& s) noexcept {
    return std::max({std::abs(s.sx), std::abs(s.sy), std::abs(s.sz), std::abs(s.p), std::abs(s.q)});
}

inline double max_abs(const SpinVector& s) noexcept {
    return std::max({std::abs(s.sx), std::abs(s.sy), std::abs(s.sz)});
}

/// Quasiclassical equations of motion of the full system.
inline PhaseState eom_rhs(const ModelParams& m, const PhaseState& s) noexcept {
    const double g2 = m.g * m.g;
    const double self = (1.0 + m.epsilon) * g2;
    PhaseState d;
    d.sz = -m.g * s.p * s.sx - self * s.sx * s.sy;
    d.sx = m.g * s.p * s.sz + m.omega0 * s.sy + self * s.sy * s.sz;
    d.sy = -m.omega0 * s.sx;
    d.p = -m.omega * m.omega * s.q;
    d.q = s.p + m.g * s.sy;
    return d;
}

/// Spin flow with the oscillator slaved to q = 0, p = -g Sy.
inline SpinVector reduced_eom_rhs(const ModelParams& m, const SpinVector& s) noexcept {
    const double eg2 = m.epsilon * m.g * m.g;
    SpinVector d;
    d.sz = -eg2 * s.sx * s.sy;
    d.sx = m.omega0 * s.sy + eg2 * s.sy * s.sz;
    d.sy = -m.omega0 * s.sx;
    return d;
}

inline double hamiltonian(const ModelParams& m, const PhaseState& s) noexcept {
    const double g2 = m.g * m.g;
    return 0.5 * (s.p * s.p + m.omega * m.omega * s.q * s.q) + m.g * s.p * s.sy -
           m.omega0 * s.sz + 0.5 * (1.0 + m.epsilon) * g2 * s.sy * s.sy;
}

/// Energy on the slaved manifold: -omega0 Sz + eps g^2 Sy^2 / 2.
inline double reduced_energy(const ModelParams& m, const SpinVector& s) noexcept {
    return -m.omega0 * s.sz + 0.5 * m.epsilon * m.g * m.g * s.sy * s.sy;
}

inline double spin_norm(const SpinVector& s) noexcept { return std::hypot(s.sx, s.sy, s.sz); }
inline double spin_norm(const PhaseState& s) noexcept { return spin_norm(s.spin()); }

/// Critical coupling sqrt(omega0 / (|eps| S)); std::nullopt encodes the
/// infinite value reached at eps = 0.
inline std::optional<double> critical_coupling(const ModelParams& m) noexcept {
    if (m.epsilon == 0.0) return std::nullopt;
    return std::sqrt(m.omega0 / (std::abs(m.epsilon) * m.spin_s));
}

/// Returns a copy with g set to ratio * g_c. Throws DomainError when g_c is infinite.
inline ModelParams with_coupling_ratio(ModelParams m, double ratio) {
    const auto gc = critical_coupling(m);
    if (!gc) throw DomainError("with_coupling_ratio: critical coupling is infinite for epsilon = 0");
    m.g = ratio * *gc;
    return m;
}

inline int sign_of(double x) noexcept { return (x > 0.0) - (x < 0.0); }

}  // namespace dicke
