#pragma once

// Period of a slaved orbit measured from the numerical flow, used to check
// the closed-form elliptic time scale against the ODE.

#include <cmath>
#include <limits>
#include <vector>

#include "dicke/analytic.hpp"
#include "dicke/dynamics.hpp"

namespace dicke {

struct RateCalibration {
    double analytic_period = 0.0;
    double measured_period = 0.0;
    double u_rate = 0.0;           ///< closed-form rate
    double measured_u_rate = 0.0;  ///< rate that reproduces the measured period
    double pendulum_u_rate = 0.0;  ///< large-coupling approximation, for reference
    double relative_discrepancy = 0.0;
    int periods = 0;
};

/// Integrates the slaved flow from bl_state(0) and times `periods` upward
/// zero crossings of Sx (one per full period on both branches).
inline RateCalibration calibrate_u_rate(const ModelParams& m, const BoundLuminosityParams& b, int periods = 4,
                                        double rel_tol = 1e-12, double abs_tol = 1e-14) {
    if (periods < 1) throw ValidationError("calibrate_u_rate: periods must be >= 1");
    RateCalibration r;
    r.analytic_period = bl_period(m, b);
    r.u_rate = b.u_rate;
    r.pendulum_u_rate = b.pendulum_u_rate;
    r.periods = periods;

    const PhaseState s0 = bl_state(m, b, 0.0);
    auto rhs = [&m](double, const Vec<3>& y, Vec<3>& dy) { detail::ReducedSystem::rhs(m, y, dy); };
    const double t_end = (periods + 0.5) * r.analytic_period;
    auto stepper = Dop853<3, decltype(rhs)>(rhs, rel_tol, abs_tol, r.analytic_period / 20.0);
    stepper.reset(0.0, {s0.sx, s0.sy, s0.sz});
    std::vector<double> crossings;
    while (stepper.time() < t_end && static_cast<int>(crossings.size()) < periods) {
        if (!stepper.step(t_end, 1e-14 * t_end)) throw ComputationError("calibrate_u_rate: step size underflow");
        const double x0 = stepper.previous_state()[0];
        const double x1 = stepper.state()[0];
        if (x0 < 0.0 && x1 >= 0.0) {
            crossings.push_back(detail::refine_root<3>(stepper, 0, stepper.previous_time(), stepper.time()).first);
        }
    }
    if (static_cast<int>(crossings.size()) < periods) {
        throw ComputationError("calibrate_u_rate: fewer Sx crossings than requested periods");
    }
    r.measured_period = crossings.back() / periods;
    r.measured_u_rate = b.u_rate * r.analytic_period / r.measured_period;
    r.relative_discrepancy = std::abs(r.measured_period - r.analytic_period) / r.analytic_period;
    return r;
}

}  // namespace dicke
