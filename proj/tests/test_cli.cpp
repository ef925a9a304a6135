#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "dicke/cli/commands.hpp"
#include "dicke/cli/config.hpp"
#include "dicke/cli/table.hpp"
#include "dicke/cli/validate.hpp"

using namespace dicke;
using namespace dicke::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() /
                ("dicke_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Options options_for(const TempDir& d, Format f = Format::csv) {
    Options o;
    o.out = d.path();
    o.format = f;
    return o;
}

bool all_valid(const fs::path& p) {
    bool ok = true;
    for (const auto& r : validate_path(p)) {
        for (const auto& v : r.violations) ADD_FAILURE() << r.file << ": " << v;
        ok = ok && r.ok();
    }
    return ok;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + DICKE_DYN_EXE + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 10000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        ASSERT_EQ(parse_double(format_double(v)), v);
    }
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(parse_double("+1.5"), 1.5);
    EXPECT_THROW(parse_double("1,5"), ValidationError);
    EXPECT_THROW(parse_double(""), ValidationError);
}

TEST(Table, CsvRoundTripWithQuoting) {
    Table t;
    t.kind = "demo";
    t.add_meta("a", 0.25);
    t.add_meta("label", "x=y");
    t.columns = {"name", "value", "count"};
    t.rows.push_back({std::string("plain"), 1.0 / 3.0, std::int64_t{7}});
    t.rows.push_back({std::string("has,comma \"q\""), -2.5e-300, std::int64_t{-1}});
    const std::string csv = to_csv(t);
    EXPECT_NE(csv.find("\r\n"), std::string::npos);
    EXPECT_EQ(csv.find("\n"), csv.find("\r\n") + 1);
    const Table back = parse_csv(csv);
    EXPECT_EQ(back.kind, "demo");
    EXPECT_EQ(back.meta, t.meta);
    EXPECT_EQ(back.columns, t.columns);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.text(1, 0), "has,comma \"q\"");
    EXPECT_EQ(back.number(0, 1), 1.0 / 3.0);
    EXPECT_EQ(back.number(1, 1), -2.5e-300);
    EXPECT_EQ(back.number(1, 2), -1.0);
    EXPECT_EQ(to_csv(back), csv);
}

TEST(Table, JsonRoundTrip) {
    Table t;
    t.kind = "demo";
    t.add_meta("b", 1.0);
    t.columns = {"x", "y"};
    t.rows.push_back({0.1, std::string("s")});
    const Table back = parse_table_json(Json::parse(dump_json(to_json(t))));
    EXPECT_EQ(back.kind, t.kind);
    EXPECT_EQ(back.meta, t.meta);
    EXPECT_EQ(back.number(0, 0), 0.1);
    EXPECT_EQ(back.text(0, 1), "s");
}

TEST(Table, ParseRejectsRaggedRows) {
    EXPECT_THROW(parse_csv("# kind=k\r\na,b\r\n1\r\n"), ValidationError);
    EXPECT_THROW(parse_csv("# kind=k\r\n"), ValidationError);
}

TEST(Config, DefaultsAndOverrides) {
    const auto c = parse_config(
        "[model]\nepsilon = 0.5\ng_ratio = 2\n[poincare]\ng_ratios = 0.2, 1.4\nlyapunov = true\n"
        "[run]\nseed = 18446744073709551615\n",
        "inline");
    EXPECT_DOUBLE_EQ(c.model.g, 2.0 * std::sqrt(2.0));
    EXPECT_EQ(c.poincare.g_ratios, (std::vector<double>{0.2, 1.4}));
    EXPECT_TRUE(c.poincare.lyapunov);
    EXPECT_EQ(c.seed, std::numeric_limits<std::uint64_t>::max());
    EXPECT_EQ(parse_config("", "").integrator.rel_tol, 1e-10);
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(parse_config("[model]\nfoo = 1\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[nosuch]\na = 1\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[model]\ng = 1\ng_ratio = 1\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[model]\nepsilon = 0\ng_ratio = 1\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[model]\nomega = -1\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[integrator]\nrenormalize_spin = maybe\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[poincare]\nn_trajectories = 2.5\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[run]\nseed = -1\n", ""), ValidationError);
    EXPECT_THROW(parse_config("[bound-luminosity]\nsy_sign = 0\n", ""), ValidationError);
}

TEST(FixedPointsCommand, DocumentContents) {
    TempDir d;
    RunConfig cfg;
    cfg.model = {1, 1, std::sqrt(2.0), -1, 1};
    cmd_fixed_points(cfg, options_for(d));
    const auto j = Json::parse(read_file(d.path() / "fixed_points.json"));
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    EXPECT_EQ(j["fixed_points"].size(), 4u);
    EXPECT_NEAR(j["order_parameter"].get<double>(), std::sqrt(3.0) / 2.0, 1e-15);
    EXPECT_FALSE(j["g_c_infinite"].get<bool>());
    cfg.model.epsilon = 0.0;
    cmd_fixed_points(cfg, options_for(d));
    const auto j0 = Json::parse(read_file(d.path() / "fixed_points.json"));
    EXPECT_TRUE(j0["g_c"].is_null());
    EXPECT_TRUE(j0["g_c_infinite"].get<bool>());
    EXPECT_TRUE(all_valid(d.path()));
}

TEST(BoundLuminosityCommand, AnalyticAndNumericColumnsAgree) {
    TempDir d;
    RunConfig cfg;
    cfg.model = with_coupling_ratio({1, 1, 0, -1, 1}, 1.5);
    cfg.bound_luminosity.numeric = true;
    cfg.integrator.rel_tol = 1e-12;
    cfg.integrator.abs_tol = 1e-14;
    cmd_bound_luminosity(cfg, options_for(d));
    const Table t = parse_csv(read_file(d.path() / "bound_luminosity.csv"));
    ASSERT_TRUE(t.has_column("Sz_num"));
    double err = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        err = std::max(err, std::abs(t.number(r, t.column("Sz")) - t.number(r, t.column("Sz_num"))));
    }
    EXPECT_LT(err, 1e-6);
    EXPECT_EQ(t.number(t.rows.size() - 1, t.column("t_over_T")), 5.0);
    EXPECT_TRUE(all_valid(d.path()));
}

TEST(BoundLuminosityCommand, ExchangeEnergiesMoveInAntiPhase) {
    TempDir d;
    RunConfig cfg;
    cfg.model = with_coupling_ratio({1, 1, 0, -1, 1}, 1.5);
    cmd_bound_luminosity(cfg, options_for(d));
    const Table t = parse_csv(read_file(d.path() / "bound_luminosity.csv"));
    const auto id = t.column("E_dip"), iz = t.column("E_Z");
    for (std::size_t r = 1; r < t.rows.size(); ++r) {
        const double dd = t.number(r, id) - t.number(r - 1, id);
        const double dz = t.number(r, iz) - t.number(r - 1, iz);
        EXPECT_LE(dd * dz, 1e-15);
    }
}

TEST(BoundLuminosityCommand, RotationNearSeparatrixReachesThePole) {
    TempDir d;
    RunConfig cfg;
    cfg.model = with_coupling_ratio({1, 1, 0, 1, 1}, 3.0);
    cfg.bound_luminosity.energy = 1.01;
    cmd_bound_luminosity(cfg, options_for(d));
    const Table t = parse_csv(read_file(d.path() / "bound_luminosity.csv"));
    EXPECT_EQ(t.meta_value("regime"), "rotation");
    double lo = 1.0, hi = -1.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        lo = std::min(lo, t.number(r, t.column("Sz")));
        hi = std::max(hi, t.number(r, t.column("Sz")));
        EXPECT_GT(t.number(r, t.column("Sy")), 0.0);
    }
    EXPECT_LT(lo, -0.99);
    EXPECT_GT(hi, 0.5);
}

TEST(BoundLuminosityCommand, SeparatrixIsDegenerate) {
    TempDir d;
    RunConfig cfg;
    cfg.model = with_coupling_ratio({1, 1, 0, 1, 1}, 1.5);
    cfg.bound_luminosity.energy = 1.0;
    EXPECT_THROW(cmd_bound_luminosity(cfg, options_for(d)), DegenerateError);
}

TEST(PotentialCommand, ExtremumLabelsFollowEpsilon) {
    for (double eps : {-1.0, 1.0}) {
        TempDir d;
        RunConfig cfg;
        cfg.model = with_coupling_ratio({1, 1, 0, eps, 1}, 1.5);
        cmd_potential(cfg, options_for(d));
        const Table t = parse_csv(read_file(d.path() / "potential.csv"));
        int superradiant = 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            if (t.text(r, 0) == "effective_extremum" && t.text(r, 1).rfind("superradiant", 0) == 0) {
                ++superradiant;
                EXPECT_EQ(t.text(r, 4), eps < 0 ? "minimum" : "maximum");
            }
        }
        EXPECT_GT(superradiant, 0);
        EXPECT_TRUE(all_valid(d.path()));
    }
}

TEST(PotentialCommand, DoubleWellRowsOnlyWhenDoubleWell) {
    TempDir d;
    RunConfig cfg;
    cfg.model = with_coupling_ratio({1, 1, 0, -1, 1}, 1.5);
    cfg.potential.c_values = {0.0, 0.9};
    cmd_potential(cfg, options_for(d));
    const Table t = parse_csv(read_file(d.path() / "potential.csv"));
    std::set<std::string> inset_c;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.text(r, 0) == "double_well") inset_c.insert(t.text(r, 1));
    }
    EXPECT_EQ(inset_c, (std::set<std::string>{"0.90000000000000002"}));
}

TEST(SimulateCommand, FullAndReducedValidate) {
    for (bool reduced : {false, true}) {
        TempDir d;
        RunConfig cfg;
        cfg.model = with_coupling_ratio({1, 1, 0, -0.5, 1}, 1.2);
        cfg.simulate.reduced = reduced;
        cfg.integrator.t_end = 20.0;
        cmd_simulate(cfg, options_for(d, reduced ? Format::json : Format::csv));
        EXPECT_TRUE(all_valid(d.path()));
    }
}

TEST(PoincareCommand, FailedCellIsReportedAndOthersSucceed) {
    TempDir d;
    RunConfig cfg;
    cfg.model = {1, 1, 0, -0.5, 1};
    cfg.poincare.energies = {-50.0, 1.0};
    cfg.poincare.g_ratios = {1.0};
    cfg.poincare.n_trajectories = 2;
    cfg.poincare.n_crossings = 60;
    cmd_poincare(cfg, options_for(d));
    const auto j = Json::parse(read_file(d.path() / "poincare_summary.json"));
    ASSERT_EQ(j["cells"].size(), 2u);
    EXPECT_EQ(j["cells"][0]["status"], "failed");
    EXPECT_EQ(j["cells"][1]["status"], "ok");
    EXPECT_TRUE(fs::exists(d.path() / "poincare_cell_001.csv"));
    EXPECT_TRUE(all_valid(d.path()));

    cfg.poincare.energies = {-50.0};
    EXPECT_THROW(cmd_poincare(cfg, options_for(d)), ComputationError);
}

TEST(Validate, DetectsCorruption) {
    TempDir d;
    RunConfig cfg;
    cfg.model = with_coupling_ratio({1, 1, 0, -1, 1}, 1.5);
    cmd_bound_luminosity(cfg, options_for(d));
    const auto path = d.path() / "bound_luminosity.csv";
    Table t = parse_csv(read_file(path));
    t.rows[3][t.column("Sz")] = format_double(t.number(3, t.column("Sz")) + 1e-4);
    write_atomic(path, to_csv(t));
    EXPECT_FALSE(validate_file(path).ok());
    write_atomic(d.path() / "junk.csv", "# kind=unknown\r\na\r\n1\r\n");
    EXPECT_FALSE(validate_file(d.path() / "junk.csv").ok());
}

TEST(Executable, ExitCodes) {
    TempDir d;
    const std::string out = " --out \"" + d.path().string() + "\"";
    EXPECT_EQ(run_cli("fixed-points" + out), 0);
    EXPECT_EQ(run_cli("validate --input \"" + d.path().string() + "\""), 0);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("potential --format xml" + out), 2);

    const auto bad = d.path() / "bad.ini";
    write_atomic(bad, "[model]\nfoo = 1\n");
    EXPECT_EQ(run_cli("simulate --config \"" + bad.string() + "\"" + out), 2);

    const auto sep = d.path() / "sep.ini";
    write_atomic(sep, "[model]\ng_ratio = 1.5\n[bound-luminosity]\nenergy = -1\n");
    EXPECT_EQ(run_cli("bound-luminosity --config \"" + sep.string() + "\"" + out), 3);

    const auto none = d.path() / "none.ini";
    write_atomic(none, "[poincare]\nenergies = -50\n");
    EXPECT_EQ(run_cli("poincare --config \"" + none.string() + "\"" + out), 4);

    write_atomic(d.path() / "broken.csv", "# kind=simulate\r\nt\r\n");
    EXPECT_EQ(run_cli("validate --input \"" + (d.path() / "broken.csv").string() + "\""), 1);
}
