#pragma once

// INI run configuration.  Every section is optional; unknown sections and
// keys are rejected so typos fail loudly instead of silently using defaults.
//
//   [model]            omega omega0 g g_ratio epsilon spin_s
//   [integrator]       rel_tol abs_tol max_step renormalize_spin t_end sample_dt
//   [bound-luminosity] energy sy_sign periods samples_per_period numeric
//   [simulate]         sx sy sz p q reduced
//   [poincare]         energies g_ratios n_trajectories n_crossings transient_skip
//                      direction root max_time lyapunov lyapunov_horizon
//                      renorm_interval lambda_threshold score_threshold
//   [potential]        gamma_points c_values x_max x_points
//   [lyapunov]         energy trajectory sx sy sz p q horizon renorm_interval trace_every
//
// g_ratio sets g = g_ratio * g_c and may not be combined with g.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dicke/cli/table.hpp"
#include "dicke/dynamics.hpp"
#include "dicke/model.hpp"
#include "dicke/poincare.hpp"

namespace dicke::cli {

struct BoundLuminositySettings {
    std::optional<double> energy;  ///< default: half of omega0 S on the libration side
    int sy_sign = 1;
    int periods = 5;
    int samples_per_period = 200;
    bool numeric = false;
};

struct SimulateSettings {
    PhaseState initial{0.0, 0.6, 0.8, 0.0, 0.0};
    bool reduced = false;
};

struct PoincareSettings {
    std::vector<double> energies{1.0};
    std::vector<double> g_ratios{0.2, 0.6, 1.0, 1.4};
    std::size_t n_trajectories = 20;
    std::size_t n_crossings = 1000;
    std::size_t transient_skip = 0;
    CrossingDirection direction = CrossingDirection::up;
    RootChoice root = RootChoice::upper;
    double max_time = 0.0;
    bool lyapunov = false;
    double lyapunov_horizon = 3e4;
    double renorm_interval = 1.0;
    double lambda_threshold = 1e-2;
    double score_threshold = 0.5;
};

struct PotentialSettings {
    std::size_t gamma_points = 801;
    std::vector<double> c_values{-2.0, -1.0, 0.0};
    double x_max = 2.5;
    std::size_t x_points = 501;
};

struct LyapunovSettings {
    double energy = 1.0;
    std::size_t trajectory = 0;     ///< index of the shell sample used as the start
    std::optional<PhaseState> initial;  ///< explicit start overrides the shell sample
    double horizon = 3e4;
    double renorm_interval = 1.0;
    std::size_t trace_every = 100;
};

struct RunConfig {
    ModelParams model{1.0, 1.0, 0.5, -1.0, 1.0};
    IntegratorConfig integrator{1e-10, 1e-12, 1.0, false, 100.0, 0.1};
    BoundLuminositySettings bound_luminosity;
    SimulateSettings simulate;
    PoincareSettings poincare;
    PotentialSettings potential;
    LyapunovSettings lyapunov;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string source;  ///< path of the config file, empty for defaults
};

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"model", {"omega", "omega0", "g", "g_ratio", "epsilon", "spin_s"}},
        {"integrator", {"rel_tol", "abs_tol", "max_step", "renormalize_spin", "t_end", "sample_dt"}},
        {"bound-luminosity", {"energy", "sy_sign", "periods", "samples_per_period", "numeric"}},
        {"simulate", {"sx", "sy", "sz", "p", "q", "reduced"}},
        {"poincare",
         {"energies", "g_ratios", "n_trajectories", "n_crossings", "transient_skip", "direction", "root",
          "max_time", "lyapunov", "lyapunov_horizon", "renorm_interval", "lambda_threshold", "score_threshold"}},
        {"potential", {"gamma_points", "c_values", "x_max", "x_points"}},
        {"lyapunov",
         {"energy", "trajectory", "sx", "sy", "sz", "p", "q", "horizon", "renorm_interval", "trace_every"}},
        {"run", {"seed", "threads"}},
    };
    return keys;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

class Reader {
public:
    explicit Reader(const ptree& root) : root_(root) {}

    [[nodiscard]] std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto sec = root_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    }

    void number(const std::string& section, const std::string& key, double& out) const {
        if (auto v = raw(section, key)) out = parse(section, key, *v);
    }
    [[nodiscard]] std::optional<double> number(const std::string& section, const std::string& key) const {
        if (auto v = raw(section, key)) return parse(section, key, *v);
        return std::nullopt;
    }

    template <class Int>
    void integer(const std::string& section, const std::string& key, Int& out, long long min_value) const {
        if (auto v = raw(section, key)) {
            const double d = parse(section, key, *v);
            if (d != std::floor(d) || d < static_cast<double>(min_value)) {
                fail(section, key, "expected an integer >= " + std::to_string(min_value));
            }
            out = static_cast<Int>(d);
        }
    }

    void u64(const std::string& section, const std::string& key, std::uint64_t& out) const {
        if (auto v = raw(section, key)) {
            std::uint64_t x = 0;
            const auto res = std::from_chars(v->data(), v->data() + v->size(), x);
            if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
                fail(section, key, "expected an unsigned 64-bit integer");
            }
            out = x;
        }
    }

    void boolean(const std::string& section, const std::string& key, bool& out) const {
        if (auto v = raw(section, key)) {
            if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
                out = true;
            } else if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
                out = false;
            } else {
                fail(section, key, "expected a boolean");
            }
        }
    }

    void list(const std::string& section, const std::string& key, std::vector<double>& out) const {
        if (auto v = raw(section, key)) {
            std::vector<double> values;
            std::stringstream ss(*v);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (item.empty()) fail(section, key, "empty list entry");
                values.push_back(parse(section, key, item));
            }
            if (values.empty()) fail(section, key, "empty list");
            out = std::move(values);
        }
    }

    [[noreturn]] static void fail(const std::string& section, const std::string& key, const std::string& why) {
        throw ValidationError("config [" + section + "] " + key + ": " + why);
    }

private:
    static double parse(const std::string& section, const std::string& key, const std::string& v) {
        try {
            const double d = parse_double(v);
            if (!std::isfinite(d)) fail(section, key, "value must be finite");
            return d;
        } catch (const ValidationError&) {
            fail(section, key, "not a number: '" + v + "'");
        }
    }

    const ptree& root_;
};

inline PhaseState read_state(const Reader& r, const std::string& section, PhaseState s) {
    r.number(section, "sx", s.sx);
    r.number(section, "sy", s.sy);
    r.number(section, "sz", s.sz);
    r.number(section, "p", s.p);
    r.number(section, "q", s.q);
    return s;
}

}  // namespace detail

/// Builds a RunConfig from INI text.  Throws ValidationError on any problem.
inline RunConfig parse_config(const std::string& text, const std::string& source = "") {
    using detail::Reader;
    detail::ptree root;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError("config: " + std::string(e.what()));
    }
    for (const auto& [section, child] : root) {
        const auto it = detail::known_keys().find(section);
        if (it == detail::known_keys().end()) {
            if (child.empty()) throw ValidationError("config: keys must live in a [section]; found '" + section + "'");
            throw ValidationError("config: unknown section [" + section + "]");
        }
        for (const auto& kv : child) {
            if (!it->second.count(kv.first)) {
                throw ValidationError("config: unknown key '" + kv.first + "' in [" + section + "]");
            }
        }
    }

    const Reader r(root);
    RunConfig c;
    c.source = source;

    auto& m = c.model;
    r.number("model", "omega", m.omega);
    r.number("model", "omega0", m.omega0);
    r.number("model", "epsilon", m.epsilon);
    r.number("model", "spin_s", m.spin_s);
    const auto g = r.number("model", "g");
    const auto ratio = r.number("model", "g_ratio");
    if (g && ratio) throw ValidationError("config [model]: give either g or g_ratio, not both");
    if (g) m.g = *g;
    m.validate();
    if (ratio) {
        if (m.epsilon == 0.0) throw ValidationError("config [model] g_ratio: g_c is infinite for epsilon = 0");
        if (*ratio < 0.0) throw ValidationError("config [model] g_ratio: must be >= 0");
        m = with_coupling_ratio(m, *ratio);
    }

    auto& ic = c.integrator;
    r.number("integrator", "rel_tol", ic.rel_tol);
    r.number("integrator", "abs_tol", ic.abs_tol);
    r.number("integrator", "max_step", ic.max_step);
    r.boolean("integrator", "renormalize_spin", ic.renormalize_spin);
    r.number("integrator", "t_end", ic.t_end);
    r.number("integrator", "sample_dt", ic.sample_dt);
    ic.validate();

    auto& bl = c.bound_luminosity;
    bl.energy = r.number("bound-luminosity", "energy");
    r.integer("bound-luminosity", "sy_sign", bl.sy_sign, -1);
    if (bl.sy_sign != 1 && bl.sy_sign != -1) {
        Reader::fail("bound-luminosity", "sy_sign", "must be 1 or -1");
    }
    r.integer("bound-luminosity", "periods", bl.periods, 1);
    r.integer("bound-luminosity", "samples_per_period", bl.samples_per_period, 2);
    r.boolean("bound-luminosity", "numeric", bl.numeric);

    c.simulate.initial = detail::read_state(r, "simulate", c.simulate.initial);
    r.boolean("simulate", "reduced", c.simulate.reduced);

    auto& pc = c.poincare;
    r.list("poincare", "energies", pc.energies);
    r.list("poincare", "g_ratios", pc.g_ratios);
    for (double v : pc.g_ratios) {
        if (v < 0.0) Reader::fail("poincare", "g_ratios", "entries must be >= 0");
    }
    r.integer("poincare", "n_trajectories", pc.n_trajectories, 1);
    r.integer("poincare", "n_crossings", pc.n_crossings, 1);
    r.integer("poincare", "transient_skip", pc.transient_skip, 0);
    if (auto d = r.raw("poincare", "direction")) {
        if (*d == "up") {
            pc.direction = CrossingDirection::up;
        } else if (*d == "down") {
            pc.direction = CrossingDirection::down;
        } else if (*d == "both") {
            pc.direction = CrossingDirection::both;
        } else {
            Reader::fail("poincare", "direction", "expected up, down or both");
        }
    }
    if (auto d = r.raw("poincare", "root")) {
        if (*d == "upper") {
            pc.root = RootChoice::upper;
        } else if (*d == "lower") {
            pc.root = RootChoice::lower;
        } else if (*d == "both") {
            pc.root = RootChoice::both;
        } else {
            Reader::fail("poincare", "root", "expected upper, lower or both");
        }
    }
    r.number("poincare", "max_time", pc.max_time);
    if (pc.max_time < 0.0) Reader::fail("poincare", "max_time", "must be >= 0");
    r.boolean("poincare", "lyapunov", pc.lyapunov);
    r.number("poincare", "lyapunov_horizon", pc.lyapunov_horizon);
    r.number("poincare", "renorm_interval", pc.renorm_interval);
    if (!(pc.renorm_interval > 0.0) || pc.lyapunov_horizon < pc.renorm_interval) {
        Reader::fail("poincare", "lyapunov_horizon", "need lyapunov_horizon >= renorm_interval > 0");
    }
    r.number("poincare", "lambda_threshold", pc.lambda_threshold);
    r.number("poincare", "score_threshold", pc.score_threshold);

    auto& pot = c.potential;
    r.integer("potential", "gamma_points", pot.gamma_points, 2);
    r.list("potential", "c_values", pot.c_values);
    r.number("potential", "x_max", pot.x_max);
    if (!(pot.x_max > 0.0)) Reader::fail("potential", "x_max", "must be > 0");
    r.integer("potential", "x_points", pot.x_points, 2);

    auto& ly = c.lyapunov;
    r.number("lyapunov", "energy", ly.energy);
    r.integer("lyapunov", "trajectory", ly.trajectory, 0);
    for (const char* k : {"sx", "sy", "sz", "p", "q"}) {
        if (r.raw("lyapunov", k)) {
            ly.initial = detail::read_state(r, "lyapunov", PhaseState{});
            break;
        }
    }
    r.number("lyapunov", "horizon", ly.horizon);
    r.number("lyapunov", "renorm_interval", ly.renorm_interval);
    if (!(ly.renorm_interval > 0.0) || ly.horizon < ly.renorm_interval) {
        Reader::fail("lyapunov", "horizon", "need horizon >= renorm_interval > 0");
    }
    r.integer("lyapunov", "trace_every", ly.trace_every, 1);

    r.u64("run", "seed", c.seed);
    r.integer("run", "threads", c.threads, 1);
    return c;
}

/// Reads and parses a config file.
inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path), path.string());
}

}  // namespace dicke::cli
