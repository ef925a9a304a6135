#pragma once

// Sections of the full flow through q = 0 at fixed energy, expressed in the
// spin angles theta = acos(Sz/S), phi = atan2(Sy, Sx), together with two
// chaos indicators: the largest Lyapunov exponent (two nearby trajectories,
// periodically rescaled) and a grid-occupancy regularity score.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dicke/dynamics.hpp"
#include "dicke/error.hpp"
#include "dicke/model.hpp"

namespace dicke {

/// The spin direction cannot carry energy E at q = 0 for any real p.
class OffShellError : public DomainError {
public:
    using DomainError::DomainError;
};

enum class RootChoice { upper, lower, both };

struct SectionMomenta {
    double upper = 0.0;  ///< p >= -g Sy, contains the slaved locus p = -g Sy
    double lower = 0.0;
    bool distinct = false;
};

/// Solves H(spin, p, q = 0) = E for p.
inline SectionMomenta momentum_on_section(const ModelParams& m, const SpinVector& spin, double energy) {
    // p^2/2 + g Sy p + (1 + eps) g^2 Sy^2 / 2 - omega0 Sz - E = 0
    // has discriminant 2 (E - reduced_energy(spin)).
    const double delta = 2.0 * (energy - reduced_energy(m, spin));
    if (delta < 0.0) {
        throw OffShellError("momentum_on_section: spin state not reachable at energy " + std::to_string(energy));
    }
    const double root = std::sqrt(delta);
    const double centre = -m.g * spin.sy;
    return {centre + root, centre - root, root > 0.0};
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for work item `item` under `seed`.
inline std::mt19937_64 item_stream(std::uint64_t seed, std::uint64_t item) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(item + 0x632be59bd9b4e019ULL)));
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline SpinVector uniform_spin(std::mt19937_64& rng, double s) {
    const double z = 2.0 * unit_uniform(rng) - 1.0;
    const double az = 2.0 * std::numbers::pi * unit_uniform(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * r * std::cos(az), s * r * std::sin(az), s * z};
}

/// Runs body(i) for i in [0, n) on up to `threads` workers; the first
/// exception is rethrown after all workers join.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline constexpr std::uint64_t kAttemptsPerState = 10000;

}  // namespace detail

/// Draws n on-shell states with q = 0.  State i depends only on (seed, i).
inline std::vector<PhaseState> sample_on_shell(const ModelParams& m, double energy, std::size_t n,
                                               std::uint64_t seed, RootChoice root = RootChoice::upper) {
    m.validate();
    if (n < 1) throw ValidationError("sample_on_shell: n must be >= 1");
    std::vector<PhaseState> out;
    out.reserve(n);
    std::uint64_t attempts = 0;
    std::uint64_t accepted = 0;
    for (std::size_t i = 0; out.size() < n; ++i) {
        auto rng = detail::item_stream(seed, i);
        bool found = false;
        for (std::uint64_t k = 0; k < detail::kAttemptsPerState && !found; ++k) {
            ++attempts;
            const SpinVector s = detail::uniform_spin(rng, m.spin_s);
            const double delta = 2.0 * (energy - reduced_energy(m, s));
            if (delta < 0.0) continue;
            const auto p = momentum_on_section(m, s, energy);
            found = true;
            ++accepted;
            auto push = [&](double pv) {
                if (out.size() < n) out.push_back({s.sx, s.sy, s.sz, pv, 0.0});
            };
            if (root == RootChoice::lower) {
                push(p.lower);
            } else {
                push(p.upper);
                if (root == RootChoice::both) push(p.lower);
            }
        }
        if (!found) {
            const double rate = attempts ? static_cast<double>(accepted) / static_cast<double>(attempts) : 0.0;
            throw ComputationError("sample_on_shell: energy shell too small at E = " + std::to_string(energy) +
                                   " (acceptance rate " + std::to_string(rate) + " after " +
                                   std::to_string(attempts) + " draws)");
        }
    }
    return out;
}

struct SectionConfig {
    double energy = 1.0;
    std::size_t n_trajectories = 20;
    std::size_t n_crossings = 1000;
    std::uint64_t seed = 1;
    CrossingDirection direction = CrossingDirection::up;
    std::size_t transient_skip = 0;
    RootChoice root = RootChoice::upper;
    IntegratorConfig integrator{1e-10, 1e-12, 1.0, false, 0.0, 1.0};
    double max_time = 0.0;  ///< integration horizon per trajectory; 0 picks 20 pi / omega per crossing
    unsigned threads = 1;

    void validate() const {
        if (n_trajectories < 1) throw ValidationError("SectionConfig: n_trajectories must be >= 1");
        if (n_crossings < 1) throw ValidationError("SectionConfig: n_crossings must be >= 1");
        if (!std::isfinite(energy)) throw ValidationError("SectionConfig: energy must be finite");
        if (!(max_time >= 0.0) || !std::isfinite(max_time)) {
            throw ValidationError("SectionConfig: max_time must be finite and >= 0");
        }
    }
};

struct SectionPoint {
    double theta = 0.0;
    double phi = 0.0;
    double t = 0.0;
    std::size_t traj_id = 0;
    PhaseState state;
};

struct TrajectorySummary {
    std::size_t traj_id = 0;
    PhaseState initial;
    std::size_t n_points = 0;
    double energy_drift = 0.0;  ///< max relative drift of H along the trajectory
    bool failed = false;
    std::string error;
};

struct SectionResult {
    std::vector<SectionPoint> points;  ///< grouped by traj_id, increasing t inside a group
    std::vector<TrajectorySummary> trajectories;
};

/// (theta, phi) of a spin; phi = 0 on the axis.
inline std::pair<double, double> spin_angles(const SpinVector& s) {
    const double n = spin_norm(s);
    const double theta = n > 0.0 ? std::acos(std::clamp(s.sz / n, -1.0, 1.0)) : 0.0;
    double phi = (s.sx == 0.0 && s.sy == 0.0) ? 0.0 : std::atan2(s.sy, s.sx);
    if (phi <= -std::numbers::pi) phi = std::numbers::pi;
    return {theta, phi};
}

/// Section points of trajectory `traj_id` started at `start`.
inline std::vector<SectionPoint> section_of(const ModelParams& m, const PhaseState& start, std::size_t traj_id,
                                            const SectionConfig& cfg, TrajectorySummary* summary = nullptr) {
    IntegratorConfig ic = cfg.integrator;
    const std::size_t wanted = cfg.n_crossings + cfg.transient_skip;
    ic.t_end = cfg.max_time > 0.0 ? cfg.max_time
                                  : 20.0 * std::numbers::pi / m.omega * static_cast<double>(wanted);
    const auto set = find_crossings(m, start, ic, cfg.direction, wanted);
    std::vector<SectionPoint> pts;
    for (std::size_t i = cfg.transient_skip; i < set.crossings.size(); ++i) {
        const auto& c = set.crossings[i];
        const auto [theta, phi] = spin_angles(c.state.spin());
        pts.push_back({theta, phi, c.t, traj_id, c.state});
    }
    if (summary) {
        summary->n_points = pts.size();
        summary->energy_drift = set.stats.max_energy_drift;
    }
    return pts;
}

/// Samples cfg.n_trajectories starts on the shell and records their crossings.
/// A trajectory whose integration fails is reported in `trajectories` and
/// contributes no points; the batch continues.
inline SectionResult poincare_section(const ModelParams& m, const SectionConfig& cfg) {
    m.validate();
    cfg.validate();
    cfg.integrator.validate();
    const auto starts = sample_on_shell(m, cfg.energy, cfg.n_trajectories, cfg.seed, cfg.root);
    std::vector<std::vector<SectionPoint>> per(starts.size());
    SectionResult result;
    result.trajectories.resize(starts.size());
    detail::parallel_for(starts.size(), cfg.threads, [&](std::size_t i) {
        auto& summary = result.trajectories[i];
        summary.traj_id = i;
        summary.initial = starts[i];
        try {
            per[i] = section_of(m, starts[i], i, cfg, &summary);
        } catch (const ComputationError& e) {
            summary.failed = true;
            summary.error = e.what();
        }
    });
    for (auto& v : per) result.points.insert(result.points.end(), v.begin(), v.end());
    return result;
}

struct LyapunovConfig {
    double horizon = 2e4;
    double renorm_interval = 1.0;
    double offset = 1e-8;
    std::uint64_t seed = 1;
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = 1.0;
    std::size_t trace_every = 100;  ///< renormalizations between trace entries
    double energy_bound = 1e-6;     ///< companion |H - H0| / max(1, |H0|) above this raises the warning

    void validate() const {
        if (!(renorm_interval > 0.0) || !std::isfinite(renorm_interval)) {
            throw ValidationError("LyapunovConfig: renorm_interval must be finite and > 0");
        }
        if (!(horizon >= renorm_interval) || !std::isfinite(horizon)) {
            throw ValidationError("LyapunovConfig: horizon must be finite and >= renorm_interval");
        }
        if (!(offset > 0.0)) throw ValidationError("LyapunovConfig: offset must be > 0");
        if (trace_every < 1) throw ValidationError("LyapunovConfig: trace_every must be >= 1");
    }
};

struct LyapunovResult {
    double lambda = 0.0;
    std::vector<std::pair<double, double>> trace;  ///< (t, running estimate)
    bool warning = false;                          ///< companion left the energy shell
    double max_companion_energy_error = 0.0;
};

/// Largest Lyapunov exponent from a reference and a companion trajectory
/// offset by cfg.offset along a random direction tangent to the spin sphere.
inline LyapunovResult lyapunov_exponent(const ModelParams& m, const PhaseState& state0,
                                        const LyapunovConfig& cfg) {
    m.validate();
    cfg.validate();
    auto rng = detail::item_stream(cfg.seed, 0x4c79617075ULL);
    std::normal_distribution<double> normal;
    std::array<double, 5> dir{};
    for (double& d : dir) d = normal(rng);
    // Remove the radial spin component so the companion stays on the sphere to first order.
    const double n0 = spin_norm(state0);
    if (n0 > 0.0) {
        const double radial = (dir[0] * state0.sx + dir[1] * state0.sy + dir[2] * state0.sz) / n0;
        dir[0] -= radial * state0.sx / n0;
        dir[1] -= radial * state0.sy / n0;
        dir[2] -= radial * state0.sz / n0;
    }
    double norm = 0.0;
    for (double d : dir) norm += d * d;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw ComputationError("lyapunov_exponent: degenerate offset direction");

    Vec<10> y{};
    const auto a0 = state0.to_array();
    for (std::size_t i = 0; i < 5; ++i) {
        y[i] = a0[i];
        y[5 + i] = a0[i] + cfg.offset * dir[i] / norm;
    }
    auto rhs = [&m](double, const Vec<10>& x, Vec<10>& dx) {
        const auto d1 = eom_rhs(m, {x[0], x[1], x[2], x[3], x[4]});
        const auto d2 = eom_rhs(m, {x[5], x[6], x[7], x[8], x[9]});
        dx = {d1.sx, d1.sy, d1.sz, d1.p, d1.q, d2.sx, d2.sy, d2.sz, d2.p, d2.q};
    };
    Dop853<10, decltype(rhs)> stepper(rhs, cfg.rel_tol, cfg.abs_tol, cfg.max_step);
    stepper.reset(0.0, y);

    const double h0 = hamiltonian(m, state0);
    const double scale = std::max(1.0, std::abs(h0));
    LyapunovResult res;
    double log_sum = 0.0;
    const auto n_intervals = static_cast<std::uint64_t>(std::floor(cfg.horizon / cfg.renorm_interval + 1e-9));
    for (std::uint64_t k = 1; k <= n_intervals; ++k) {
        const double target = static_cast<double>(k) * cfg.renorm_interval;
        while (stepper.time() < target) {
            if (!stepper.step(target, 1e-14 * cfg.horizon)) {
                throw ComputationError("lyapunov_exponent: step size underflow at t = " +
                                       std::to_string(stepper.time()));
            }
        }
        y = stepper.state();
        double d2 = 0.0;
        for (std::size_t i = 0; i < 5; ++i) d2 += (y[5 + i] - y[i]) * (y[5 + i] - y[i]);
        const double d = std::sqrt(d2);
        if (!(d > 0.0) || !std::isfinite(d)) throw ComputationError("lyapunov_exponent: separation collapsed");
        log_sum += std::log(d / cfg.offset);
        const double e2 = hamiltonian(m, {y[5], y[6], y[7], y[8], y[9]});
        res.max_companion_energy_error = std::max(res.max_companion_energy_error, std::abs(e2 - h0) / scale);
        for (std::size_t i = 0; i < 5; ++i) y[5 + i] = y[i] + (y[5 + i] - y[i]) * (cfg.offset / d);
        stepper.reset_state(y);
        if (k % cfg.trace_every == 0 || k == n_intervals) res.trace.emplace_back(target, log_sum / target);
    }
    const double t_total = static_cast<double>(n_intervals) * cfg.renorm_interval;
    res.lambda = log_sum / t_total;
    res.warning = res.max_companion_energy_error > cfg.energy_bound;
    return res;
}

inline constexpr std::size_t kRegularityMinPoints = 50;
inline constexpr std::size_t kRegularityGrid = 100;

/// Occupied cells of a 100 x 100 (theta, phi) grid divided by the number a
/// uniform scatter of the same size would occupy on average.  Near 1 for
/// area-filling sets, small for points on a curve.  nullopt below 50 points.
inline std::optional<double> regularity_score(const std::vector<SectionPoint>& points) {
    if (points.size() < kRegularityMinPoints) return std::nullopt;
    constexpr std::size_t g = kRegularityGrid;
    std::vector<bool> occupied(g * g, false);
    std::size_t count = 0;
    for (const auto& p : points) {
        const auto i = std::min<std::size_t>(g - 1, static_cast<std::size_t>(p.theta / std::numbers::pi * g));
        const double u = (p.phi + std::numbers::pi) / (2.0 * std::numbers::pi);
        const auto j = std::min<std::size_t>(g - 1, static_cast<std::size_t>(std::max(0.0, u) * g));
        if (!occupied[i * g + j]) {
            occupied[i * g + j] = true;
            ++count;
        }
    }
    const double cells = static_cast<double>(g * g);
    const double expected = cells * -std::expm1(static_cast<double>(points.size()) * std::log1p(-1.0 / cells));
    return std::min(1.0, static_cast<double>(count) / expected);
}

/// Splits points by traj_id and scores each group; result[i] belongs to traj_id i.
inline std::vector<std::optional<double>> regularity_scores(const std::vector<SectionPoint>& points,
                                                            std::size_t n_trajectories) {
    std::vector<std::vector<SectionPoint>> groups(n_trajectories);
    for (const auto& p : points) {
        if (p.traj_id < n_trajectories) groups[p.traj_id].push_back(p);
    }
    std::vector<std::optional<double>> out;
    out.reserve(n_trajectories);
    for (const auto& g : groups) out.push_back(regularity_score(g));
    return out;
}

}  // namespace dicke
