#pragma once

// Subcommands of dicke_dyn.  Each writes its artifacts under Options::out and
// returns the written paths; errors surface as the library exception types,
// which the entry point maps to exit codes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dicke/analytic.hpp"
#include "dicke/cli/config.hpp"
#include "dicke/cli/table.hpp"
#include "dicke/dynamics.hpp"
#include "dicke/equilibria.hpp"
#include "dicke/model.hpp"
#include "dicke/poincare.hpp"

namespace dicke::cli {

enum class Format { csv, json };

struct Options {
    std::filesystem::path out = ".";
    Format format = Format::csv;
};

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline void echo_model(Table& t, const ModelParams& m) {
    t.add_meta("omega", m.omega);
    t.add_meta("omega0", m.omega0);
    t.add_meta("g", m.g);
    t.add_meta("epsilon", m.epsilon);
    t.add_meta("spin_s", m.spin_s);
    const auto gc = critical_coupling(m);
    t.add_meta("g_c", gc ? format_double(*gc) : std::string("inf"));
}

inline Json model_json(const ModelParams& m) {
    Json j;
    j["omega"] = m.omega;
    j["omega0"] = m.omega0;
    j["g"] = m.g;
    j["epsilon"] = m.epsilon;
    j["spin_s"] = m.spin_s;
    return j;
}

inline Json state_json(const PhaseState& s) {
    Json j;
    j["sx"] = s.sx;
    j["sy"] = s.sy;
    j["sz"] = s.sz;
    j["p"] = s.p;
    j["q"] = s.q;
    return j;
}

inline std::filesystem::path write_table(const Table& t, const Options& opt, const std::string& stem) {
    const bool json = opt.format == Format::json;
    const auto path = opt.out / (stem + (json ? ".json" : ".csv"));
    write_atomic(path, json ? dump_json(to_json(t)) : to_csv(t));
    return path;
}

inline std::string direction_name(CrossingDirection d) {
    switch (d) {
        case CrossingDirection::up: return "up";
        case CrossingDirection::down: return "down";
        case CrossingDirection::both: return "both";
    }
    return "up";
}

inline std::string root_name(RootChoice r) {
    switch (r) {
        case RootChoice::upper: return "upper";
        case RootChoice::lower: return "lower";
        case RootChoice::both: return "both";
    }
    return "upper";
}

}  // namespace detail

/// fixed_points.json: g_c, every fixed point with its label, and the order parameter.
inline std::vector<std::filesystem::path> cmd_fixed_points(const RunConfig& cfg, const Options& opt) {
    const auto& m = cfg.model;
    m.validate();
    Json j;
    j["schema"] = "dicke-dyn/fixed-points";
    j["schema_version"] = kSchemaVersion;
    j["params"] = detail::model_json(m);
    const auto gc = critical_coupling(m);
    j["g_c"] = gc ? Json(*gc) : Json(nullptr);
    j["g_c_infinite"] = !gc.has_value();
    j["order_parameter"] = order_parameter(m);
    Json list = Json::array();
    for (const auto& fp : fixed_points(m)) {
        Json e;
        e["kind"] = std::string(to_string(fp.kind));
        e["stability"] = std::string(to_string(fp.stability));
        e["gamma"] = fp.gamma;
        e["curvature"] = fp.curvature;
        e["state"] = detail::state_json(fp.state);
        e["residual"] = max_abs(eom_rhs(m, fp.state));
        list.push_back(std::move(e));
    }
    j["fixed_points"] = std::move(list);
    const auto path = opt.out / "fixed_points.json";
    write_atomic(path, dump_json(j));
    return {path};
}

/// Energy used by bound-luminosity when none is configured: half way to the
/// separatrix on the libration side.
inline double default_bl_energy(const ModelParams& m) {
    return (m.epsilon < 0.0 ? -0.5 : 0.5) * m.omega0 * m.spin_s;
}

/// bound_luminosity.csv: analytic orbit over the configured number of periods,
/// with the numerically integrated slaved flow alongside when requested.
/// For epsilon = 0 the slaved flow is integrated instead (pure precession).
inline std::vector<std::filesystem::path> cmd_bound_luminosity(const RunConfig& cfg, const Options& opt) {
    const auto& m = cfg.model;
    const auto& s = cfg.bound_luminosity;
    m.validate();
    Table t;
    t.kind = "bound_luminosity";
    detail::echo_model(t, m);
    t.columns = {"t", "t_over_T", "Sz", "Sy", "Sx", "p", "q", "E_dip", "E_Z"};

    if (m.epsilon == 0.0) {
        const double energy = s.energy.value_or(0.0);
        const double sz = std::clamp(-energy / m.omega0, -m.spin_s, m.spin_s);
        const SpinVector spin0{0.0, s.sy_sign * std::sqrt(std::max(0.0, m.spin_s * m.spin_s - sz * sz)), sz};
        const double period = 2.0 * std::numbers::pi / m.omega0;
        IntegratorConfig ic = cfg.integrator;
        ic.t_end = s.periods * period;
        ic.sample_dt = period / s.samples_per_period;
        ic.max_step = std::min(ic.max_step, period / 20.0);
        const auto traj = integrate_reduced(m, spin0, ic);
        t.add_meta("source", "numeric");
        t.add_meta("energy", reduced_energy(m, spin0));
        t.add_meta("period", period);
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const auto& v = traj.states[i];
            const double p = -m.g * v.sy;
            t.rows.push_back({traj.times[i], traj.times[i] / period, v.sz, v.sy, v.sx, p, 0.0, p * v.sy,
                              -m.omega0 * v.sz});
        }
        return {detail::write_table(t, opt, "bound_luminosity")};
    }

    const double energy = s.energy.value_or(default_bl_energy(m));
    const auto b = bl_constants_from_energy(m, energy, s.sy_sign);
    const double period = bl_period(m, b);
    t.add_meta("source", "analytic");
    t.add_meta("energy", b.energy);
    t.add_meta("c_const", b.c_const);
    t.add_meta("k_param", b.k_param);
    t.add_meta("k_elliptic", b.k_elliptic);
    t.add_meta("u_rate", b.u_rate);
    t.add_meta("pendulum_u_rate", b.pendulum_u_rate);
    t.add_meta("period", period);
    t.add_meta("regime", b.k_elliptic < 1.0 ? "rotation" : "libration");
    t.add_meta("sy_sign", std::to_string(b.sy_sign));

    const double dt = period / s.samples_per_period;
    const double t_end = s.periods * period;
    std::vector<double> times;
    for (std::uint64_t k = 0; static_cast<double>(k) * dt < t_end; ++k) times.push_back(static_cast<double>(k) * dt);
    times.push_back(t_end);

    std::optional<SpinTrajectory> numeric;
    if (s.numeric) {
        IntegratorConfig ic = cfg.integrator;
        ic.t_end = t_end;
        ic.sample_dt = dt;
        ic.max_step = std::min(ic.max_step, period / 20.0);
        numeric = integrate_reduced(m, bl_state(m, b, 0.0).spin(), ic);
        t.columns.insert(t.columns.end(), {"Sz_num", "Sy_num", "Sx_num"});
        t.add_meta("rel_tol", ic.rel_tol);
        t.add_meta("abs_tol", ic.abs_tol);
        times = numeric->times;
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double ti = times[i];
        const auto st = bl_state(m, b, ti);
        std::vector<Cell> row{ti, ti / period, st.sz, st.sy, st.sx, st.p, st.q, st.p * st.sy, -m.omega0 * st.sz};
        if (numeric) {
            const auto& v = numeric->states[i];
            row.insert(row.end(), {v.sz, v.sy, v.sx});
        }
        t.rows.push_back(std::move(row));
    }
    return {detail::write_table(t, opt, "bound_luminosity")};
}

/// simulate.csv: sampled trajectory of the full (or slaved) flow with H and |S| per row.
inline std::vector<std::filesystem::path> cmd_simulate(const RunConfig& cfg, const Options& opt) {
    const auto& m = cfg.model;
    const auto& ic = cfg.integrator;
    Table t;
    t.kind = "simulate";
    detail::echo_model(t, m);
    t.add_meta("mode", cfg.simulate.reduced ? "reduced" : "full");
    t.add_meta("rel_tol", ic.rel_tol);
    t.add_meta("abs_tol", ic.abs_tol);
    t.add_meta("max_step", ic.max_step);
    t.add_meta("renormalize_spin", ic.renormalize_spin ? "true" : "false");
    t.add_meta("t_end", ic.t_end);
    t.add_meta("sample_dt", ic.sample_dt);
    t.columns = {"t", "sx", "sy", "sz", "p", "q", "H", "spin_norm"};

    auto finish = [&](const Trajectory& traj) {
        t.add_meta("accepted_steps", std::to_string(traj.stats.accepted_steps));
        t.add_meta("rejected_steps", std::to_string(traj.stats.rejected_steps));
        t.add_meta("max_energy_drift", traj.stats.max_energy_drift);
        t.add_meta("max_spin_drift", traj.stats.max_spin_drift);
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const auto& s = traj.states[i];
            const double h = cfg.simulate.reduced ? reduced_energy(m, s.spin()) : hamiltonian(m, s);
            t.rows.push_back({traj.times[i], s.sx, s.sy, s.sz, s.p, s.q, h, spin_norm(s)});
        }
        return detail::write_table(t, opt, "simulate");
    };
    auto lift = [&](const SpinTrajectory& st) {
        Trajectory traj;
        traj.times = st.times;
        traj.stats = st.stats;
        for (const auto& v : st.states) traj.states.push_back({v.sx, v.sy, v.sz, -m.g * v.sy, 0.0});
        return traj;
    };

    if (cfg.simulate.reduced) {
        try {
            return {finish(lift(integrate_reduced(m, cfg.simulate.initial.spin(), ic)))};
        } catch (const SpinStiffnessError& e) {
            t.add_meta("status", "stiff");
            finish(lift(e.partial()));
            throw;
        }
    }
    try {
        return {finish(integrate(m, cfg.simulate.initial, ic))};
    } catch (const StiffnessError& e) {
        t.add_meta("status", "stiff");
        finish(e.partial());
        throw;
    }
}

/// potential.csv: U(gamma) on [-2 pi, 2 pi] with extremum markers, and the
/// quartic potential for each configured C (double-well inset rows only
/// where the well is double).
inline std::vector<std::filesystem::path> cmd_potential(const RunConfig& cfg, const Options& opt) {
    const auto& m = cfg.model;
    const auto& s = cfg.potential;
    m.validate();
    Table t;
    t.kind = "potential";
    detail::echo_model(t, m);
    t.columns = {"series", "param", "x", "U", "marker"};
    const double two_pi = 2.0 * std::numbers::pi;
    const std::size_t n = s.gamma_points;
    for (std::size_t i = 0; i < n; ++i) {
        const double gamma = -two_pi + 2.0 * two_pi * static_cast<double>(i) / static_cast<double>(n - 1);
        t.rows.push_back({std::string("effective"), std::string(""), gamma, effective_potential_u(m, gamma),
                          std::string("")});
    }
    for (const auto& fp : fixed_points(m)) {
        for (int shift = -2; shift <= 2; ++shift) {
            const double gamma = fp.gamma + shift * two_pi;
            if (gamma < -two_pi - 1e-12 || gamma > two_pi + 1e-12) continue;
            t.rows.push_back({std::string("effective_extremum"), std::string(to_string(fp.kind)), gamma,
                              effective_potential_u(m, gamma), std::string(to_string(fp.stability))});
        }
    }
    if (m.epsilon != 0.0 && m.g > 0.0) {
        for (double c : s.c_values) {
            for (std::size_t i = 0; i < s.x_points; ++i) {
                const double x = -s.x_max + 2.0 * s.x_max * static_cast<double>(i) / static_cast<double>(s.x_points - 1);
                t.rows.push_back({std::string("quartic"), c, x, quartic_potential(m, c, x), std::string("")});
            }
            if (is_double_well(m, c)) {
                const double xw = quartic_well_position(m, c);
                const std::size_t inset = 201;
                for (std::size_t i = 0; i < inset; ++i) {
                    const double x = -1.5 * xw + 3.0 * xw * static_cast<double>(i) / static_cast<double>(inset - 1);
                    t.rows.push_back({std::string("double_well"), c, x, quartic_potential(m, c, x), std::string("")});
                }
                t.rows.push_back({std::string("quartic_extremum"), c, -xw, quartic_potential(m, c, -xw),
                                  std::string("minimum")});
                t.rows.push_back({std::string("quartic_extremum"), c, 0.0, 0.0, std::string("maximum")});
                t.rows.push_back({std::string("quartic_extremum"), c, xw, quartic_potential(m, c, xw),
                                  std::string("minimum")});
            } else {
                t.rows.push_back({std::string("quartic_extremum"), c, 0.0, 0.0, std::string("minimum")});
            }
        }
    }
    return {detail::write_table(t, opt, "potential")};
}


/// One section file per (g_ratio, energy) cell plus poincare_summary.json.
/// Throws ComputationError only when every cell failed.
inline std::vector<std::filesystem::path> cmd_poincare(const RunConfig& cfg, const Options& opt) {
    const auto& base = cfg.model;
    const auto& ps = cfg.poincare;
    base.validate();
    if (base.epsilon == 0.0) throw ValidationError("poincare: g_ratios need a finite g_c (epsilon != 0)");

    std::vector<std::filesystem::path> written;
    Json summary;
    summary["schema"] = "dicke-dyn/poincare-summary";
    summary["schema_version"] = kSchemaVersion;
    summary["params"] = detail::model_json(base);
    Json settings;
    settings["n_trajectories"] = ps.n_trajectories;
    settings["n_crossings"] = ps.n_crossings;
    settings["transient_skip"] = ps.transient_skip;
    settings["direction"] = detail::direction_name(ps.direction);
    settings["root"] = detail::root_name(ps.root);
    settings["seed"] = cfg.seed;
    settings["rel_tol"] = cfg.integrator.rel_tol;
    settings["abs_tol"] = cfg.integrator.abs_tol;
    settings["lyapunov"] = ps.lyapunov;
    settings["lyapunov_horizon"] = ps.lyapunov_horizon;
    settings["renorm_interval"] = ps.renorm_interval;
    settings["lambda_threshold"] = ps.lambda_threshold;
    settings["score_threshold"] = ps.score_threshold;
    summary["settings"] = settings;

    Json cells = Json::array();
    std::size_t index = 0;
    std::size_t succeeded = 0;
    for (double energy : ps.energies) {
        for (double ratio : ps.g_ratios) {
            const ModelParams m = with_coupling_ratio(base, ratio);
            char stem[64];
            std::snprintf(stem, sizeof stem, "poincare_cell_%03zu", index);
            Json cell;
            cell["index"] = index;
            cell["g_ratio"] = ratio;
            cell["g"] = m.g;
            cell["energy"] = energy;

            SectionConfig sc;
            sc.energy = energy;
            sc.n_trajectories = ps.n_trajectories;
            sc.n_crossings = ps.n_crossings;
            sc.seed = cfg.seed;
            sc.direction = ps.direction;
            sc.transient_skip = ps.transient_skip;
            sc.root = ps.root;
            sc.integrator = cfg.integrator;
            sc.max_time = ps.max_time;
            sc.threads = cfg.threads;

            SectionResult res;
            try {
                res = poincare_section(m, sc);
            } catch (const ComputationError& e) {
                cell["status"] = "failed";
                cell["error"] = e.what();
                cells.push_back(std::move(cell));
                ++index;
                continue;
            }

            Table t;
            t.kind = "poincare_cell";
            detail::echo_model(t, m);
            t.add_meta("g_ratio", ratio);
            t.add_meta("energy", energy);
            t.add_meta("direction", detail::direction_name(ps.direction));
            t.add_meta("seed", std::to_string(cfg.seed));
            t.columns = {"traj_id", "t", "theta", "phi", "sx", "sy", "sz", "p", "q"};
            for (const auto& p : res.points) {
                t.rows.push_back({static_cast<std::int64_t>(p.traj_id), p.t, p.theta, p.phi, p.state.sx, p.state.sy,
                                  p.state.sz, p.state.p, p.state.q});
            }
            const auto path = detail::write_table(t, opt, stem);
            written.push_back(path);

            const auto scores = regularity_scores(res.points, res.trajectories.size());
            std::vector<std::optional<double>> lambdas(res.trajectories.size());
            if (ps.lyapunov) {
                dicke::detail::parallel_for(res.trajectories.size(), cfg.threads, [&](std::size_t i) {
                    if (res.trajectories[i].failed) return;
                    LyapunovConfig lc;
                    lc.horizon = ps.lyapunov_horizon;
                    lc.renorm_interval = ps.renorm_interval;
                    lc.seed = dicke::detail::splitmix64(cfg.seed) ^ i;
                    lc.rel_tol = cfg.integrator.rel_tol;
                    lc.abs_tol = cfg.integrator.abs_tol;
                    lc.max_step = cfg.integrator.max_step;
                    try {
                        lambdas[i] = lyapunov_exponent(m, res.trajectories[i].initial, lc).lambda;
                    } catch (const ComputationError&) {
                        lambdas[i] = std::nullopt;
                    }
                });
            }

            Json trajs = Json::array();
            double score_sum = 0.0;
            std::size_t scored = 0;
            std::size_t chaotic = 0;
            std::size_t classified = 0;
            for (std::size_t i = 0; i < res.trajectories.size(); ++i) {
                const auto& tr = res.trajectories[i];
                Json e;
                e["traj_id"] = tr.traj_id;
                e["n_points"] = tr.n_points;
                e["energy_drift"] = tr.energy_drift;
                e["failed"] = tr.failed;
                if (tr.failed) e["error"] = tr.error;
                e["score"] = scores[i] ? Json(*scores[i]) : Json(nullptr);
                if (ps.lyapunov) e["lambda"] = lambdas[i] ? Json(*lambdas[i]) : Json(nullptr);
                if (scores[i]) {
                    score_sum += *scores[i];
                    ++scored;
                }
                if (ps.lyapunov && lambdas[i]) {
                    ++classified;
                    chaotic += *lambdas[i] > ps.lambda_threshold;
                } else if (!ps.lyapunov && scores[i]) {
                    ++classified;
                    chaotic += *scores[i] > ps.score_threshold;
                }
                trajs.push_back(std::move(e));
            }
            cell["status"] = "ok";
            cell["file"] = path.filename().string();
            cell["n_points"] = res.points.size();
            cell["mean_score"] = scored ? Json(score_sum / static_cast<double>(scored)) : Json(nullptr);
            cell["chaos_indicator"] = ps.lyapunov ? "lyapunov" : "regularity";
            cell["chaotic_fraction"] =
                classified ? Json(static_cast<double>(chaotic) / static_cast<double>(classified)) : Json(nullptr);
            cell["trajectories"] = std::move(trajs);
            cells.push_back(std::move(cell));
            ++succeeded;
            ++index;
        }
    }
    summary["cells"] = std::move(cells);
    const auto spath = opt.out / "poincare_summary.json";
    write_atomic(spath, dump_json(summary));
    written.push_back(spath);
    if (succeeded == 0) throw ComputationError("poincare: every cell failed; see poincare_summary.json");
    return written;
}

/// lyapunov.csv: running estimate of the largest exponent.
inline std::vector<std::filesystem::path> cmd_lyapunov(const RunConfig& cfg, const Options& opt) {
    const auto& m = cfg.model;
    const auto& ls = cfg.lyapunov;
    m.validate();
    const PhaseState start = ls.initial ? *ls.initial
                                        : sample_on_shell(m, ls.energy, ls.trajectory + 1, cfg.seed)[ls.trajectory];
    LyapunovConfig lc;
    lc.horizon = ls.horizon;
    lc.renorm_interval = ls.renorm_interval;
    lc.trace_every = ls.trace_every;
    lc.seed = cfg.seed;
    lc.rel_tol = cfg.integrator.rel_tol;
    lc.abs_tol = cfg.integrator.abs_tol;
    lc.max_step = cfg.integrator.max_step;
    const auto r = lyapunov_exponent(m, start, lc);

    Table t;
    t.kind = "lyapunov";
    detail::echo_model(t, m);
    t.add_meta("sx0", start.sx);
    t.add_meta("sy0", start.sy);
    t.add_meta("sz0", start.sz);
    t.add_meta("p0", start.p);
    t.add_meta("q0", start.q);
    t.add_meta("horizon", ls.horizon);
    t.add_meta("renorm_interval", ls.renorm_interval);
    t.add_meta("lambda", r.lambda);
    t.add_meta("warning", r.warning ? "true" : "false");
    t.add_meta("max_companion_energy_error", r.max_companion_energy_error);
    t.columns = {"t", "lambda"};
    for (const auto& [time, value] : r.trace) t.rows.push_back({time, value});
    return {detail::write_table(t, opt, "lyapunov")};
}

}  // namespace dicke::cli
