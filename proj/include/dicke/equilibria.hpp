#pragma once

// Fixed points of the full flow and their stability from the effective
// potential U(gamma) = -omega0 S cos(gamma) + (eps g^2 / 2) S^2 sin^2(gamma),
// where Sz = S cos(gamma), Sy = S sin(gamma).

#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "dicke/model.hpp"

namespace dicke {

enum class FixedPointKind { pole_plus, pole_minus, superradiant_plus, superradiant_minus };
enum class Stability { minimum, maximum, degenerate };

inline constexpr std::string_view to_string(FixedPointKind k) noexcept {
    switch (k) {
        case FixedPointKind::pole_plus: return "pole_plus";
        case FixedPointKind::pole_minus: return "pole_minus";
        case FixedPointKind::superradiant_plus: return "superradiant_plus";
        case FixedPointKind::superradiant_minus: return "superradiant_minus";
    }
    return "unknown";
}

inline constexpr std::string_view to_string(Stability s) noexcept {
    switch (s) {
        case Stability::minimum: return "minimum";
        case Stability::maximum: return "maximum";
        case Stability::degenerate: return "degenerate";
    }
    return "unknown";
}

struct FixedPoint {
    PhaseState state;
    FixedPointKind kind = FixedPointKind::pole_plus;
    Stability stability = Stability::degenerate;
    double gamma = 0.0;      ///< angle in the z-y plane
    double curvature = 0.0;  ///< d^2U/dgamma^2 used for the label
};

inline constexpr double kCurvatureStep = 1e-5;
inline constexpr double kDegenerateCurvature = 1e-8;

inline double effective_potential_u(const ModelParams& m, double gamma) noexcept {
    const double s = m.spin_s;
    const double sg = std::sin(gamma);
    return -m.omega0 * s * std::cos(gamma) + 0.5 * m.epsilon * m.g * m.g * s * s * sg * sg;
}

/// Central second difference of U with step h.  The numerator
/// U(gamma+h) - 2U(gamma) + U(gamma-h) is evaluated through the exact
/// identities cos(x+h) + cos(x-h) - 2cos x = -4 sin^2(h/2) cos x and
/// sin^2(x+h) + sin^2(x-h) - 2 sin^2 x = 2 sin^2(h) cos 2x, so no digits
/// are lost to cancellation.
inline double effective_potential_curvature(const ModelParams& m, double gamma,
                                            double h = kCurvatureStep) noexcept {
    const double s = m.spin_s;
    const double sh2 = std::sin(0.5 * h);
    const double sh = std::sin(h);
    const double num = 4.0 * m.omega0 * s * std::cos(gamma) * sh2 * sh2 +
                       m.epsilon * m.g * m.g * s * s * std::cos(2.0 * gamma) * sh * sh;
    return num / (h * h);
}

inline Stability classify_extremum(const ModelParams& m, double gamma) noexcept {
    const double c = effective_potential_curvature(m, gamma);
    if (std::abs(c) < kDegenerateCurvature) return Stability::degenerate;
    return c > 0.0 ? Stability::minimum : Stability::maximum;
}

/// |Sy| of the superradiant points, S sqrt(1 - g_c^4/g^4) above threshold, else 0.
inline double order_parameter(const ModelParams& m) noexcept {
    const auto gc = critical_coupling(m);
    if (!gc || !(m.g > *gc)) return 0.0;
    const double r = *gc / m.g;
    const double r2 = r * r;
    return m.spin_s * std::sqrt(1.0 - r2 * r2);
}

/// Existence condition S^2 - omega0^2 / (eps^2 g^4) > 0.
inline bool has_superradiant_points(const ModelParams& m) noexcept {
    if (m.epsilon == 0.0 || m.g == 0.0) return false;
    const double ratio = m.omega0 / (m.epsilon * m.g * m.g);
    return m.spin_s * m.spin_s - ratio * ratio > 0.0;
}

/// Poles always; the superradiant pair x+- when it exists.
inline std::vector<FixedPoint> fixed_points(const ModelParams& m) {
    const double s = m.spin_s;
    std::vector<FixedPoint> out;
    auto add = [&](PhaseState st, FixedPointKind kind, double gamma) {
        FixedPoint fp;
        fp.state = st;
        fp.kind = kind;
        fp.gamma = gamma;
        fp.curvature = effective_potential_curvature(m, gamma);
        fp.stability = classify_extremum(m, gamma);
        out.push_back(fp);
    };
    add({0.0, 0.0, s, 0.0, 0.0}, FixedPointKind::pole_plus, 0.0);
    add({0.0, 0.0, -s, 0.0, 0.0}, FixedPointKind::pole_minus, std::numbers::pi);

    if (has_superradiant_points(m)) {
        const double sz = -m.omega0 / (m.epsilon * m.g * m.g);
        const double sy = std::sqrt(s * s - sz * sz);
        const double gamma = std::atan2(sy, sz);
        add({0.0, sy, sz, -m.g * sy, 0.0}, FixedPointKind::superradiant_plus, gamma);
        add({0.0, -sy, sz, m.g * sy, 0.0}, FixedPointKind::superradiant_minus, -gamma);
    }
    return out;
}

struct StabilityEntry {
    FixedPointKind kind;
    double gamma;
    double curvature;
    Stability stability;
};

/// Extremum labels of U for every fixed point returned by fixed_points.
inline std::vector<StabilityEntry> classify_stability(const ModelParams& m) {
    std::vector<StabilityEntry> out;
    for (const auto& fp : fixed_points(m)) out.push_back({fp.kind, fp.gamma, fp.curvature, fp.stability});
    return out;
}

}  // namespace dicke
