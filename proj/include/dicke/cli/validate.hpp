#pragma once

// Re-reads emitted artifacts and re-checks the invariants each kind must
// satisfy.  Tolerances are loose enough for the default integrator settings
// and tight enough to catch a wrong column or a corrupted file.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dicke/analytic.hpp"
#include "dicke/cli/table.hpp"
#include "dicke/equilibria.hpp"
#include "dicke/model.hpp"
#include "dicke/poincare.hpp"

namespace dicke::cli {

inline constexpr double kValidateExact = 1e-12;     ///< recomputed closed forms
inline constexpr double kValidateInvariant = 1e-6;  ///< integrated invariants

struct ValidationReport {
    std::filesystem::path file;
    std::string kind;
    std::vector<std::string> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
};

namespace detail {

inline ModelParams model_from_meta(const Table& t) {
    ModelParams m;
    m.omega = t.meta_double("omega");
    m.omega0 = t.meta_double("omega0");
    m.g = t.meta_double("g");
    m.epsilon = t.meta_double("epsilon");
    m.spin_s = t.meta_double("spin_s");
    return m;
}

inline ModelParams model_from_json(const Json& j) {
    ModelParams m;
    m.omega = j.at("omega").get<double>();
    m.omega0 = j.at("omega0").get<double>();
    m.g = j.at("g").get<double>();
    m.epsilon = j.at("epsilon").get<double>();
    m.spin_s = j.at("spin_s").get<double>();
    return m;
}

class Checker {
public:
    explicit Checker(ValidationReport& r) : r_(r) {}

    void close(const std::string& what, std::size_t row, double got, double want, double tol) {
        const double scale = std::max(1.0, std::abs(want));
        if (!(std::abs(got - want) <= tol * scale)) {
            if (r_.violations.size() < 20) {
                r_.violations.push_back(what + " at row " + std::to_string(row) + ": " + format_double(got) +
                                        " vs " + format_double(want));
            } else if (r_.violations.size() == 20) {
                r_.violations.emplace_back("further violations suppressed");
            }
        }
    }
    void require(bool cond, const std::string& what) {
        if (!cond) r_.violations.push_back(what);
    }

private:
    ValidationReport& r_;
};

inline void check_bound_luminosity(const Table& t, Checker& c) {
    const auto m = model_from_meta(t);
    const double s2 = m.spin_s * m.spin_s;
    const double energy = t.meta_double("energy");
    const double period = t.meta_double("period");
    const auto it = t.column("t"), ir = t.column("t_over_T"), iz = t.column("Sz"), iy = t.column("Sy"),
               ix = t.column("Sx"), ip = t.column("p"), iq = t.column("q"), id = t.column("E_dip"),
               ie = t.column("E_Z");
    const bool numeric = t.has_column("Sz_num");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const SpinVector s{t.number(r, ix), t.number(r, iy), t.number(r, iz)};
        c.close("t_over_T", r, t.number(r, ir), t.number(r, it) / period, kValidateExact);
        c.close("spin length", r, s.sx * s.sx + s.sy * s.sy + s.sz * s.sz, s2, kValidateInvariant);
        c.close("energy", r, reduced_energy(m, s), energy, kValidateInvariant);
        c.close("p = -g Sy", r, t.number(r, ip), -m.g * s.sy, kValidateExact);
        c.close("q", r, t.number(r, iq), 0.0, kValidateExact);
        c.close("E_dip", r, t.number(r, id), t.number(r, ip) * s.sy, kValidateExact);
        c.close("E_Z", r, t.number(r, ie), -m.omega0 * s.sz, kValidateExact);
        if (numeric) {
            c.close("Sz_num", r, t.number(r, t.column("Sz_num")), s.sz, kValidateInvariant);
            c.close("Sy_num", r, t.number(r, t.column("Sy_num")), s.sy, kValidateInvariant);
            c.close("Sx_num", r, t.number(r, t.column("Sx_num")), s.sx, kValidateInvariant);
        }
    }
}

inline void check_simulate(const Table& t, Checker& c) {
    const auto m = model_from_meta(t);
    const bool reduced = t.meta_value("mode") == "reduced";
    const auto it = t.column("t"), ix = t.column("sx"), iy = t.column("sy"), iz = t.column("sz"),
               ip = t.column("p"), iq = t.column("q"), ih = t.column("H"), in = t.column("spin_norm");
    c.require(!t.rows.empty(), "simulate: no rows");
    if (t.rows.empty()) return;
    const double h0 = t.number(0, ih);
    const double n0 = t.number(0, in);
    double prev_t = -INFINITY;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const PhaseState s{t.number(r, ix), t.number(r, iy), t.number(r, iz), t.number(r, ip), t.number(r, iq)};
        const double h = reduced ? reduced_energy(m, s.spin()) : hamiltonian(m, s);
        c.require(t.number(r, it) > prev_t, "simulate: times not increasing at row " + std::to_string(r));
        prev_t = t.number(r, it);
        c.close("H column", r, t.number(r, ih), h, kValidateExact);
        c.close("spin_norm column", r, t.number(r, in), spin_norm(s), kValidateExact);
        c.close("H conservation", r, h, h0, kValidateInvariant);
        c.close("spin_norm conservation", r, spin_norm(s), n0, kValidateInvariant);
    }
}

inline void check_poincare_cell(const Table& t, Checker& c) {
    const auto m = model_from_meta(t);
    const double energy = t.meta_double("energy");
    const auto ith = t.column("theta"), iph = t.column("phi"), ix = t.column("sx"), iy = t.column("sy"),
               iz = t.column("sz"), ip = t.column("p"), iq = t.column("q");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const PhaseState s{t.number(r, ix), t.number(r, iy), t.number(r, iz), t.number(r, ip), t.number(r, iq)};
        const auto [theta, phi] = spin_angles(s.spin());
        c.close("theta", r, t.number(r, ith), theta, kValidateExact);
        c.close("phi", r, t.number(r, iph), phi, kValidateExact);
        c.close("on section (q)", r, s.q, 0.0, kValidateInvariant);
        c.close("on shell (H)", r, hamiltonian(m, s), energy, kValidateInvariant);
        c.close("spin length", r, spin_norm(s), m.spin_s, kValidateInvariant);
    }
}

inline void check_potential(const Table& t, Checker& c) {
    const auto m = model_from_meta(t);
    const auto is = t.column("series"), ipar = t.column("param"), ix = t.column("x"), iu = t.column("U");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string series = t.text(r, is);
        const double x = t.number(r, ix);
        if (series == "effective" || series == "effective_extremum") {
            c.close("U(gamma)", r, t.number(r, iu), effective_potential_u(m, x), kValidateExact);
        } else if (series == "quartic" || series == "double_well" || series == "quartic_extremum") {
            const double cc = t.number(r, ipar);
            c.close("U(x)", r, t.number(r, iu), quartic_potential(m, cc, x), kValidateExact);
            if (series == "double_well") c.require(is_double_well(m, cc), "double_well rows for a single-well C");
        } else {
            c.require(false, "potential: unknown series '" + series + "'");
        }
    }
}

inline void check_lyapunov(const Table& t, Checker& c) {
    const auto it = t.column("t"), il = t.column("lambda");
    double prev = -INFINITY;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        c.require(t.number(r, it) > prev, "lyapunov: times not increasing at row " + std::to_string(r));
        c.require(std::isfinite(t.number(r, il)), "lyapunov: non-finite lambda at row " + std::to_string(r));
        prev = t.number(r, it);
    }
    c.require(std::isfinite(t.meta_double("lambda")), "lyapunov: non-finite final lambda");
}

inline void check_table(const Table& t, Checker& c) {
    if (t.kind == "bound_luminosity") {
        check_bound_luminosity(t, c);
    } else if (t.kind == "simulate") {
        check_simulate(t, c);
    } else if (t.kind == "poincare_cell") {
        check_poincare_cell(t, c);
    } else if (t.kind == "potential") {
        check_potential(t, c);
    } else if (t.kind == "lyapunov") {
        check_lyapunov(t, c);
    } else {
        c.require(false, "unknown table kind '" + t.kind + "'");
    }
}

inline void check_fixed_points(const Json& j, Checker& c) {
    const auto m = model_from_json(j.at("params"));
    c.require(j.at("g_c_infinite").get<bool>() == !critical_coupling(m).has_value(), "g_c_infinite flag");
    c.close("order_parameter", 0, j.at("order_parameter").get<double>(), order_parameter(m), kValidateExact);
    std::size_t r = 0;
    for (const auto& fp : j.at("fixed_points")) {
        const auto& s = fp.at("state");
        const PhaseState st{s.at("sx").get<double>(), s.at("sy").get<double>(), s.at("sz").get<double>(),
                            s.at("p").get<double>(), s.at("q").get<double>()};
        c.close("fixed-point residual", r, max_abs(eom_rhs(m, st)), 0.0, kValidateExact);
        c.close("fixed-point spin length", r, spin_norm(st), m.spin_s, kValidateExact);
        ++r;
    }
}

inline void check_poincare_summary(const Json& j, const std::filesystem::path& dir, Checker& c) {
    auto unit = [&](const Json& v, const std::string& what) {
        if (v.is_null()) return;
        const double x = v.get<double>();
        c.require(x >= 0.0 && x <= 1.0, what + " outside [0, 1]");
    };
    for (const auto& cell : j.at("cells")) {
        if (cell.at("status") != "ok") continue;
        const auto file = cell.at("file").get<std::string>();
        c.require(std::filesystem::exists(dir / file), "summary references missing " + file);
        unit(cell.at("chaotic_fraction"), "chaotic_fraction");
        unit(cell.at("mean_score"), "mean_score");
        for (const auto& tr : cell.at("trajectories")) unit(tr.at("score"), "score");
    }
}

}  // namespace detail

/// Validates one artifact; parse failures are reported as violations.
inline ValidationReport validate_file(const std::filesystem::path& path) {
    ValidationReport rep;
    rep.file = path;
    detail::Checker c(rep);
    try {
        const std::string content = read_file(path);
        if (path.extension() == ".json") {
            const Json j = Json::parse(content);
            if (j.contains("schema")) {
                rep.kind = j.at("schema").get<std::string>();
                if (rep.kind == "dicke-dyn/fixed-points") {
                    detail::check_fixed_points(j, c);
                } else if (rep.kind == "dicke-dyn/poincare-summary") {
                    detail::check_poincare_summary(j, path.parent_path(), c);
                } else {
                    c.require(false, "unknown schema '" + rep.kind + "'");
                }
            } else {
                const Table t = parse_table_json(j);
                rep.kind = t.kind;
                detail::check_table(t, c);
            }
        } else {
            const Table t = parse_csv(content);
            rep.kind = t.kind;
            detail::check_table(t, c);
        }
    } catch (const std::exception& e) {
        rep.violations.emplace_back(std::string("unreadable: ") + e.what());
    }
    return rep;
}

/// Validates a file, or every .csv/.json directly inside a directory (sorted).
inline std::vector<ValidationReport> validate_path(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw ValidationError("validate: no such file or directory: " + path.string());
    if (!fs::is_directory(path)) return {validate_file(path)};
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".csv" || ext == ".json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ValidationReport> out;
    for (const auto& f : files) out.push_back(validate_file(f));
    return out;
}

}  // namespace dicke::cli
