#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dicke/poincare.hpp"

using namespace dicke;

namespace {

ModelParams at_ratio(double eps, double ratio) { return with_coupling_ratio({1.0, 1.0, 0.0, eps, 1.0}, ratio); }

SectionConfig small_section(double energy) {
    SectionConfig c;
    c.energy = energy;
    c.n_trajectories = 4;
    c.n_crossings = 60;
    c.seed = 21;
    return c;
}

}  // namespace

TEST(MomentumOnSection, BothRootsAreOnShell) {
    const auto m = at_ratio(-0.5, 1.0);
    const SpinVector s{0.6, 0.0, 0.8};
    const auto p = momentum_on_section(m, s, 1.0);
    EXPECT_TRUE(p.distinct);
    EXPECT_NEAR(hamiltonian(m, {s.sx, s.sy, s.sz, p.upper, 0.0}), 1.0, 1e-14);
    EXPECT_NEAR(hamiltonian(m, {s.sx, s.sy, s.sz, p.lower, 0.0}), 1.0, 1e-14);
    EXPECT_GE(p.upper, p.lower);
    EXPECT_THROW(momentum_on_section(m, {0.0, 0.0, 1.0}, -2.0), OffShellError);
}

TEST(SampleOnShell, OnShellOnSectionOnSphere) {
    const auto m = at_ratio(-0.5, 1.4);
    for (auto root : {RootChoice::upper, RootChoice::lower, RootChoice::both}) {
        const auto states = sample_on_shell(m, 1.0, 25, 4, root);
        ASSERT_EQ(states.size(), 25u);
        for (const auto& s : states) {
            EXPECT_NEAR(hamiltonian(m, s), 1.0, 1e-12);
            EXPECT_EQ(s.q, 0.0);
            EXPECT_NEAR(spin_norm(s), 1.0, 1e-14);
            if (root == RootChoice::upper) {
                EXPECT_GE(s.p, -m.g * s.sy);
            } else if (root == RootChoice::lower) {
                EXPECT_LE(s.p, -m.g * s.sy);
            }
        }
    }
}

TEST(SampleOnShell, ItemStreamsAreStableUnderGrowth) {
    const auto m = at_ratio(-0.5, 1.0);
    const auto a = sample_on_shell(m, 1.0, 5, 99);
    const auto b = sample_on_shell(m, 1.0, 12, 99);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    const auto c = sample_on_shell(m, 1.0, 5, 100);
    EXPECT_NE(a[0], c[0]);
}

TEST(SampleOnShell, FailsBelowTheMinimumEnergy) {
    const auto m = at_ratio(-0.5, 0.5);
    EXPECT_THROW(sample_on_shell(m, -5.0, 2, 1), ComputationError);
    EXPECT_THROW(sample_on_shell(m, 1.0, 0, 1), ValidationError);
}

TEST(SpinAngles, Conventions) {
    const auto [t0, p0] = spin_angles({0.0, 0.0, 1.0});
    EXPECT_EQ(t0, 0.0);
    EXPECT_EQ(p0, 0.0);
    const auto [t1, p1] = spin_angles({0.0, 1.0, 0.0});
    EXPECT_NEAR(t1, 0.5 * std::numbers::pi, 1e-15);
    EXPECT_NEAR(p1, 0.5 * std::numbers::pi, 1e-15);
    EXPECT_EQ(spin_angles({-1.0, -0.0, 0.0}).second, std::numbers::pi);
}

TEST(PoincareSection, PointsLieOnSectionAndShell) {
    const auto m = at_ratio(-0.5, 1.0);
    const auto res = poincare_section(m, small_section(1.0));
    ASSERT_EQ(res.trajectories.size(), 4u);
    EXPECT_EQ(res.points.size(), 240u);
    for (const auto& p : res.points) {
        EXPECT_LT(std::abs(p.state.q), 1e-9);
        EXPECT_NEAR(hamiltonian(m, p.state), 1.0, 1e-8);
        const auto [theta, phi] = spin_angles(p.state.spin());
        EXPECT_EQ(theta, p.theta);
        EXPECT_EQ(phi, p.phi);
    }
    for (const auto& t : res.trajectories) {
        EXPECT_FALSE(t.failed);
        EXPECT_EQ(t.n_points, 60u);
    }
}

TEST(PoincareSection, ThreadCountDoesNotChangeResult) {
    const auto m = at_ratio(-0.5, 1.4);
    auto cfg = small_section(1.0);
    const auto a = poincare_section(m, cfg);
    cfg.threads = 3;
    const auto b = poincare_section(m, cfg);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        EXPECT_EQ(a.points[i].traj_id, b.points[i].traj_id);
        EXPECT_EQ(a.points[i].t, b.points[i].t);
        EXPECT_EQ(a.points[i].state, b.points[i].state);
    }
}

TEST(PoincareSection, TransientSkipDropsLeadingCrossings) {
    const auto m = at_ratio(-0.5, 1.0);
    auto cfg = small_section(1.0);
    cfg.n_trajectories = 1;
    const auto full = poincare_section(m, cfg);
    cfg.transient_skip = 10;
    cfg.n_crossings = 50;
    const auto skipped = poincare_section(m, cfg);
    ASSERT_EQ(skipped.points.size(), 50u);
    EXPECT_EQ(skipped.points.front().t, full.points[10].t);
}

TEST(RegularityScore, CurveVersusScatter) {
    std::vector<SectionPoint> curve, scatter;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = 2.0 * std::numbers::pi * u(rng);
        curve.push_back({1.2 + 0.4 * std::cos(a), 0.8 * std::sin(a), 0.0, 0, {}});
        scatter.push_back({std::numbers::pi * u(rng), std::numbers::pi * (2.0 * u(rng) - 1.0), 0.0, 1, {}});
    }
    EXPECT_LT(*regularity_score(curve), 0.3);
    EXPECT_GT(*regularity_score(scatter), 0.9);
    curve.resize(kRegularityMinPoints - 1);
    EXPECT_FALSE(regularity_score(curve).has_value());
    auto all = scatter;
    all.insert(all.end(), curve.begin(), curve.end());
    const auto scores = regularity_scores(all, 2);
    EXPECT_FALSE(scores[0].has_value());
    EXPECT_GT(*scores[1], 0.9);
}

TEST(Lyapunov, ChaoticVersusRegular) {
    LyapunovConfig cfg;
    cfg.horizon = 4000.0;
    const auto chaotic = at_ratio(-0.5, 1.4);
    const auto fast = lyapunov_exponent(chaotic, sample_on_shell(chaotic, 1.0, 1, 1)[0], cfg);
    EXPECT_GT(fast.lambda, 1e-2);
    EXPECT_FALSE(fast.warning);
    ASSERT_FALSE(fast.trace.empty());
    EXPECT_EQ(fast.trace.back().first, 4000.0);
    EXPECT_EQ(fast.trace.back().second, fast.lambda);

    // Uncoupled oscillator and precessing spin: separation grows at most linearly.
    const ModelParams free{1.0, 1.0, 0.0, -0.5, 1.0};
    const auto slow = lyapunov_exponent(free, {0.6, 0.0, 0.8, 1.0, 0.0}, cfg);
    EXPECT_LT(slow.lambda, 5e-3);
}

TEST(Lyapunov, DeterministicAndValidated) {
    const auto m = at_ratio(-0.5, 1.0);
    LyapunovConfig cfg;
    cfg.horizon = 200.0;
    const auto s = sample_on_shell(m, 1.0, 1, 2)[0];
    EXPECT_EQ(lyapunov_exponent(m, s, cfg).lambda, lyapunov_exponent(m, s, cfg).lambda);
    cfg.renorm_interval = 0.0;
    EXPECT_THROW(lyapunov_exponent(m, s, cfg), ValidationError);
}
