#include <cmath>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <gtest/gtest.h>

#include "dicke/analytic.hpp"
#include "dicke/calibration.hpp"
#include "dicke/dynamics.hpp"

using namespace dicke;

namespace {

struct Case {
    double epsilon;
    double ratio;
    bool rotating;
};

ModelParams model_for(const Case& c) { return with_coupling_ratio({1.0, 1.0, 0.0, c.epsilon, 1.0}, c.ratio); }

// Energy inside the requested regime: libration half way to the separatrix,
// rotation half way between the separatrix and the reachable maximum.
double energy_for(const ModelParams& m, bool rotating) {
    const double sign = m.epsilon > 0.0 ? 1.0 : -1.0;
    if (!rotating) return 0.5 * sign * m.omega0 * m.spin_s;
    const double eg2 = std::abs(m.epsilon) * m.g * m.g;
    const double e_max = m.omega0 * m.omega0 / (2.0 * eg2) + 0.5 * eg2 * m.spin_s * m.spin_s;
    return sign * 0.5 * (m.omega0 * m.spin_s + e_max);
}

std::vector<Case> cases() {
    std::vector<Case> out;
    for (double e : {1.0, -1.0, 0.5}) {
        for (double r : {1.05, 1.5, 3.0}) {
            for (bool rot : {false, true}) out.push_back({e, r, rot});
        }
    }
    return out;
}

}  // namespace

TEST(BoundLuminosity, RegimeLabels) {
    for (const auto& c : cases()) {
        const auto m = model_for(c);
        const auto b = bl_constants_from_energy(m, energy_for(m, c.rotating));
        EXPECT_EQ(b.rotating(), c.rotating);
        EXPECT_EQ(b.k_elliptic < 1.0, c.rotating);
        EXPECT_FALSE(b.separatrix());
    }
}

TEST(BoundLuminosity, StaysOnSphereAndEnergyShell) {
    for (const auto& c : cases()) {
        const auto m = model_for(c);
        const double e = energy_for(m, c.rotating);
        const auto b = bl_constants_from_energy(m, e);
        const double period = bl_period(m, b);
        for (int i = 0; i <= 50; ++i) {
            const auto s = bl_state(m, b, 0.137 * period * i);
            ASSERT_NEAR(spin_norm(s), 1.0, 1e-12);
            ASSERT_NEAR(reduced_energy(m, s.spin()), e, 1e-12);
            ASSERT_DOUBLE_EQ(s.p, -m.g * s.sy);
            ASSERT_EQ(s.q, 0.0);
        }
    }
}

TEST(BoundLuminosity, SatisfiesSlavedEquationsByFiniteDifferences) {
    const double h = 1e-5;
    for (const auto& c : cases()) {
        const auto m = model_for(c);
        const auto b = bl_constants_from_energy(m, energy_for(m, c.rotating), -1);
        const double period = bl_period(m, b);
        for (double f : {0.05, 0.31, 0.62, 0.9}) {
            const double t = f * period;
            const auto a = bl_state(m, b, t + h);
            const auto z = bl_state(m, b, t - h);
            const auto d = reduced_eom_rhs(m, bl_state(m, b, t).spin());
            const double tol = 1e-7 * std::max(1.0, max_abs(d));
            EXPECT_NEAR((a.sx - z.sx) / (2 * h), d.sx, tol);
            EXPECT_NEAR((a.sy - z.sy) / (2 * h), d.sy, tol);
            EXPECT_NEAR((a.sz - z.sz) / (2 * h), d.sz, tol);
        }
    }
}

TEST(BoundLuminosity, PeriodicInFullState) {
    for (const auto& c : cases()) {
        const auto m = model_for(c);
        const auto b = bl_constants_from_energy(m, energy_for(m, c.rotating));
        const double period = bl_period(m, b);
        for (double t : {0.0, 0.3, 1.7}) {
            const auto s0 = bl_state(m, b, t);
            const auto s1 = bl_state(m, b, t + period);
            EXPECT_NEAR(s1.sx, s0.sx, 1e-10);
            EXPECT_NEAR(s1.sy, s0.sy, 1e-10);
            EXPECT_NEAR(s1.sz, s0.sz, 1e-10);
        }
        const auto half = bl_state(m, b, 0.5 * period);
        if (c.rotating) {
            EXPECT_GT(half.sy * bl_state(m, b, 0.0).sy, 0.0);
        } else {
            EXPECT_NEAR(half.sz, bl_state(m, b, 0.0).sz, 1e-10);
            EXPECT_NEAR(half.sy, -bl_state(m, b, 0.0).sy, 1e-10);
        }
    }
}

TEST(BoundLuminosity, AgreesWithIntegratedSlavedFlow) {
    for (const auto& c : cases()) {
        const auto m = model_for(c);
        const auto b = bl_constants_from_energy(m, energy_for(m, c.rotating));
        const double period = bl_period(m, b);
        IntegratorConfig ic{1e-12, 1e-14, period / 20.0, false, 3.0 * period, period / 40.0};
        const auto traj = integrate_reduced(m, bl_state(m, b, 0.0).spin(), ic);
        double err = 0.0;
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const auto a = bl_state(m, b, traj.times[i]);
            const auto& n = traj.states[i];
            err = std::max({err, std::abs(a.sx - n.sx), std::abs(a.sy - n.sy), std::abs(a.sz - n.sz)});
        }
        EXPECT_LT(err, 1e-8) << "eps=" << c.epsilon << " ratio=" << c.ratio << " rot=" << c.rotating;
    }
}

TEST(BoundLuminosity, ConstantsFromStateMatchConstantsFromEnergy) {
    const auto m = model_for({-1.0, 1.5, false});
    const auto b = bl_constants_from_energy(m, -0.3, -1);
    const auto s = bl_state(m, b, 0.77);
    const auto b2 = bl_constants(m, s.spin());
    EXPECT_NEAR(b2.energy, b.energy, 1e-13);
    EXPECT_NEAR(b2.k_elliptic, b.k_elliptic, 1e-12);
    EXPECT_THROW(bl_constants(m, {0.0, 0.0, 0.5}), ValidationError);
}

TEST(BoundLuminosity, PendulumLimitAtLargeCoupling) {
    const auto m = model_for({1.0, 200.0, false});
    const auto b = bl_constants_from_energy(m, 0.4);
    EXPECT_NEAR(b.k_elliptic, b.k_param, 1e-3 * b.k_param);
    EXPECT_NEAR(b.u_rate, std::sqrt(m.epsilon * m.g * m.g * m.omega0 * m.spin_s / b.k_param), 1e-3 * b.u_rate);
}

TEST(BoundLuminosity, DegenerateInputs) {
    const auto m = model_for({-1.0, 1.5, false});
    EXPECT_THROW(bl_period(m, bl_constants_from_energy(m, -1.0)), DegenerateError);
    EXPECT_THROW(bl_constants_from_energy({1, 1, 1, 0.0, 1}, 0.2), DegenerateError);
    EXPECT_THROW(bl_constants_from_energy({1, 1, 0, -1.0, 1}, 0.2), DegenerateError);
}

TEST(BoundLuminosity, SeparatrixApproachesPoleMonotonically) {
    const auto m = model_for({-1.0, 1.5, false});
    const auto b = bl_constants_from_energy(m, -1.0);
    ASSERT_TRUE(b.separatrix());
    const double start = bl_state(m, b, 0.0).sz;
    const double step = bl_state(m, b, 0.1).sz - start;
    ASSERT_NE(step, 0.0);
    double prev = start;
    for (int i = 1; i <= 400; ++i) {
        const double sz = bl_state(m, b, 0.1 * i).sz;
        EXPECT_GE((sz - prev) * step, -1e-15);
        prev = sz;
    }
    EXPECT_NEAR(std::abs(prev), 1.0, 1e-8);
}

TEST(BoundLuminosity, ExchangeEnergiesAntiPhaseForNegativeEpsilon) {
    const auto m = model_for({-1.0, 1.5, false});
    const auto b = bl_constants_from_energy(m, -0.5);
    const double period = bl_period(m, b);
    for (int i = 0; i < 40; ++i) {
        const double t = period * i / 40.0;
        const auto e = bl_energies(m, b, t);
        // E_dip = p Sy = -g Sy^2, so E = E_Z - eps g E_dip / 2; with eps < 0 the two move oppositely.
        EXPECT_NEAR(e.zeeman - 0.5 * m.epsilon * m.g * e.dipole, -0.5, 1e-12);
    }
}

TEST(RateCalibration, MeasuredPeriodMatchesClosedForm) {
    for (const auto& c : std::vector<Case>{{1.0, 1.05, true}, {-1.0, 1.5, false}, {-0.5, 3.0, true}}) {
        const auto m = model_for(c);
        const auto b = bl_constants_from_energy(m, energy_for(m, c.rotating));
        const auto r = calibrate_u_rate(m, b);
        EXPECT_LT(r.relative_discrepancy, 1e-9);
        EXPECT_NEAR(r.measured_u_rate, r.u_rate, 1e-9 * r.u_rate);
    }
}

TEST(QuarticPotential, DoubleWellBoundaryAndMinima) {
    const auto m = model_for({-1.0, 1.5, false});
    const double boundary = m.spin_s / (1.5 * 1.5);  // sign(eps) C < -(g_c/g)^2 S
    EXPECT_TRUE(is_double_well(m, boundary + 1e-9));
    EXPECT_FALSE(is_double_well(m, boundary - 1e-9));
    EXPECT_EQ(quartic_well_position(m, 0.0), 0.0);

    for (double c : {0.6, 0.9}) {
        ASSERT_TRUE(is_double_well(m, c));
        const double xw = quartic_well_position(m, c);
        auto u = [&](double x) { return quartic_potential(m, c, x); };
        const auto r = boost::math::tools::brent_find_minima(u, 0.01, 3.0, 50);
        EXPECT_NEAR(r.first, xw, 1e-7);
        EXPECT_LT(u(xw), 0.0);
        EXPECT_DOUBLE_EQ(u(-xw), u(xw));
    }
    EXPECT_THROW(quartic_potential({1, 1, 1, 0.0, 1}, 0.1, 0.5), DomainError);
}

TEST(QuarticPotential, SignOfEpsilonFlipsC) {
    const auto mn = model_for({-1.0, 1.5, false});
    const auto mp = model_for({1.0, 1.5, false});
    for (double x : {0.2, 0.7}) EXPECT_DOUBLE_EQ(quartic_potential(mn, 0.4, x), quartic_potential(mp, -0.4, x));
}

TEST(BoundLuminosity, ConstantsForReferenceStates) {
    const ModelParams m{1.0, 1.0, 2.0, 1.0, 1.0};
    const auto b = bl_constants(m, {0.0, 1.0, 0.0});
    EXPECT_DOUBLE_EQ(b.c_const, -2.0);
    EXPECT_DOUBLE_EQ(b.energy, 2.0);
    EXPECT_NEAR(b.k_param, 2.0 / 3.0, 1e-15);
    EXPECT_GT(b.u_rate, 0.0);
    const auto pole = bl_constants(m, {0.0, 0.0, -1.0});
    EXPECT_DOUBLE_EQ(pole.energy, 1.0);
    EXPECT_DOUBLE_EQ(pole.k_param, 1.0);
    EXPECT_TRUE(pole.separatrix());
}

TEST(BoundLuminosity, EpsilonSignMirrorsSz) {
    const ModelParams mp{1.0, 1.0, 1.7, 1.0, 1.0};
    const ModelParams mn{1.0, 1.0, 1.7, -1.0, 1.0};
    for (double e : {0.4, 1.3}) {
        const auto bp = bl_constants_from_energy(mp, e);
        const auto bn = bl_constants_from_energy(mn, -e);
        for (double t : {0.0, 0.4, 2.9, 11.0}) {
            EXPECT_NEAR(bl_state(mn, bn, t).sz, -bl_state(mp, bp, t).sz, 1e-13);
            EXPECT_NEAR(bl_state(mn, bn, t).sy, bl_state(mp, bp, t).sy, 1e-13);
        }
    }
}

TEST(BoundLuminosity, LibrationStaysAwayFromPoles) {
    for (double eps : {1.0, -1.0}) {
        const auto m = model_for({eps, 1.5, false});
        const auto b = bl_constants_from_energy(m, energy_for(m, false));
        const double period = bl_period(m, b);
        double top = 0.0;
        for (int i = 0; i <= 1000; ++i) top = std::max(top, std::abs(bl_state(m, b, period * i / 1000.0).sz));
        EXPECT_LT(top, 1.0 - 1e-3);
    }
}
