#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"

#include "tcm/cli.hpp"
#include "tcm/semiclassics.hpp"

namespace fs = std::filesystem;
using namespace tcm;
using namespace tcm::cli;

namespace {

class CliRun : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("tcm_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const std::string& name, const std::string& text) {
        const auto p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    int run(const std::string& args) {
        const std::string cmd = std::string(TCM_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                                " 2> " + (dir_ / "stderr.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string stderr_text() const { return slurp(dir_ / "stderr.txt"); }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    fs::path dir_;
};

const char* kSmallSim = "n_atoms = 4\ngamma_over_f = 0\nn_ph = 0.4\natoms = ground\nn_traj = 200\ntau_max = 2\ndtau = 0.01\nseed = 11\n";

} // namespace

TEST(ConfigParser, AcceptsCommentsAndWhitespace) {
    const auto m = parse_config_text("# header\n  n_atoms = 10  # trailing\n\nn_ph=100\r\n");
    EXPECT_EQ(m.at("n_atoms"), "10");
    EXPECT_EQ(m.at("n_ph"), "100");
    EXPECT_EQ(m.size(), 2u);
}

TEST(ConfigParser, Errors) {
    EXPECT_THROW(parse_config_text("n_atoms 10\n"), ConfigError);
    EXPECT_THROW(parse_config_text("n_atoms = 1\ngamma_over_f = 0\nn_atoms = 2\n"), ConfigError);
    EXPECT_THROW(parse_config_text("n_atoms =\n"), ConfigError);
    EXPECT_THROW(parse_config_text("= 3\n"), ConfigError);
}

TEST(ConfigSchema, ListsAllOffenders) {
    try {
        build_simulate(parse_config_text("n_atoms = 10\nbogus = 1\nother = 2\n"));
        FAIL();
    } catch (const ConfigError& e) {
        const std::string w = e.what();
        for (const char* k : {"bogus", "other", "n_ph", "n_traj", "tau_max"})
            EXPECT_NE(w.find(k), std::string::npos) << w;
    }
}

TEST(ConfigSchema, RangeErrorsNameTheKey) {
    const std::string base = "n_atoms = 10\ngamma_over_f = 0\natoms = ground\nn_traj = 10\ntau_max = 1\n";
    auto msg = [&](const std::string& extra) {
        try {
            build_simulate(parse_config_text(base + extra));
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(msg("n_ph = -1\n").find("n_ph"), std::string::npos);
    EXPECT_NE(msg("n_ph = 1\ndtau = 0\n").find("dtau"), std::string::npos);
    EXPECT_NE(msg("n_ph = 1\nscheme = rk4\n").find("scheme"), std::string::npos);
    EXPECT_NE(msg("n_ph = abc\n").find("n_ph"), std::string::npos);
    EXPECT_NE(msg("n_ph = 1\nobservables = rho_ee,nope\n").find("nope"), std::string::npos);
}

// Property: echo(build(echo(build(c)))) == echo(build(c)) for random valid configs.
TEST(ConfigSchema, EchoRoundTrip) {
    std::mt19937_64 gen(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        ConfigMap m;
        m["n_atoms"] = std::to_string(1 + static_cast<int>(u(gen) * 200));
        m["gamma_over_f"] = "0";
        m["n_ph"] = format_real(u(gen) * 300);
        m["atoms"] = u(gen) < 0.5 ? "ground" : "excited";
        m["n_traj"] = std::to_string(1 + static_cast<int>(u(gen) * 1e5));
        m["tau_max"] = format_real(0.1 + 30 * u(gen));
        m["dtau"] = format_real(1e-4 + 1e-2 * u(gen));
        m["seed"] = std::to_string(gen());
        if (u(gen) < 0.5) m["gamma_over_f"] = format_real(5 * u(gen));
        if (u(gen) < 0.5) m["noise_scheme"] = u(gen) < 0.5 ? "A" : "B";
        if (u(gen) < 0.5) m["gauge"] = u(gen) < 0.5 ? "on" : "off";
        if (u(gen) < 0.3) m["observables"] = "photon_proxy,rho_ee";
        const ConfigMap once = echo_simulate(build_simulate(m));
        const ConfigMap twice = echo_simulate(build_simulate(parse_config_text(config_to_text(once))));
        ASSERT_EQ(once, twice) << config_to_text(m);
    }
}

TEST(Csv, CellFormatting) {
    EXPECT_EQ(format_cell(0.0), "0");
    EXPECT_EQ(format_cell(std::nan("")), "nan");
    EXPECT_EQ(format_cell(-INFINITY), "-inf");
    EXPECT_EQ(std::stod(format_cell(0.1)), 0.1);
}

TEST_F(CliRun, SimulateMinimalConfigRowCount) {
    const auto cfg = write_config("c.cfg", "n_atoms = 10\ngamma_over_f = 0\nn_ph = 100\natoms = ground\nn_traj = 1000\ntau_max = 25\nseed = 1\n");
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0) << stderr_text();
    const auto t = read_csv((dir_ / "o" / "stats.csv").string());
    EXPECT_EQ(t.rows.size(), 25001u);
    EXPECT_EQ(t.header.front(), "tau");
    ASSERT_TRUE(t.index("rho_ee_mean_re"));
    ASSERT_TRUE(t.index("alive_fraction"));
    EXPECT_EQ(t.rows[0][*t.index("rho_ee_mean_re")], 0.0);
    EXPECT_EQ(t.rows[0][*t.index("alive_fraction")], 1.0);
    const auto summary = nlohmann::json::parse(slurp(dir_ / "o" / "summary.json"));
    EXPECT_EQ(summary["schema_version"], kStatsSchema);
    EXPECT_EQ(summary["n_traj"], 1000);
    EXPECT_EQ(summary["config"]["dtau"], "0.001");
    EXPECT_FALSE(fs::exists(dir_ / "o" / "stats.partial.csv"));
}

TEST_F(CliRun, SimulateIsReproducible) {
    const auto cfg = write_config("c.cfg", std::string(kSmallSim) + "progress_every_blocks = 1\n");
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --threads 1 --out " + (dir_ / "a").string()), 0);
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --threads 3 --out " + (dir_ / "b").string()), 0);
    const auto a = slurp(dir_ / "a" / "stats.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir_ / "b" / "stats.csv"));
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 12 --out " + (dir_ / "c").string()), 0);
    EXPECT_NE(a, slurp(dir_ / "c" / "stats.csv"));
    EXPECT_FALSE(fs::exists(dir_ / "a" / "progress.json"));
}

TEST_F(CliRun, ManifestListsOutputs) {
    const auto cfg = write_config("c.cfg", kSmallSim);
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0);
    const auto m = nlohmann::json::parse(slurp(dir_ / "o" / "manifest.json"));
    EXPECT_EQ(m["command"], "simulate");
    EXPECT_EQ(m["seed"], 11);
    EXPECT_EQ(m["code_version"], kCodeVersion);
    EXPECT_TRUE(m.contains("run_id"));
    EXPECT_TRUE(m.contains("started_at"));
    EXPECT_GE(m["wall_clock_seconds"].get<double>(), 0.0);
    for (const auto& name : m["outputs"]) EXPECT_TRUE(fs::exists(dir_ / "o" / name.get<std::string>())) << name;
    EXPECT_EQ(m["outputs"].size(), 3u);
}

TEST_F(CliRun, ConfigErrorsExitTwo) {
    const auto bad = write_config("bad.cfg", std::string(kSmallSim) + "mystery = 4\n");
    EXPECT_EQ(run("simulate --config " + bad.string() + " --out " + (dir_ / "o").string()), 2);
    EXPECT_NE(stderr_text().find("mystery"), std::string::npos);
    const auto neg = write_config("neg.cfg", "n_atoms = 4\ngamma_over_f = 0\nn_ph = -0.4\natoms = ground\nn_traj = 10\ntau_max = 1\n");
    EXPECT_EQ(run("simulate --config " + neg.string() + " --out " + (dir_ / "o").string()), 2);
    EXPECT_NE(stderr_text().find("n_ph"), std::string::npos);
    EXPECT_EQ(run("simulate --config " + (dir_ / "missing.cfg").string()), 2);
    EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(CliRun, TotalDivergenceExitsThree) {
    const auto cfg = write_config("c.cfg", "n_atoms = 4\ngamma_over_f = 0\nn_ph = 400\natoms = ground\nn_traj = 50\ntau_max = 1\n"
                                           "dtau = 0.01\nrunaway_bound = 2\n");
    EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string()), 3);
}

TEST_F(CliRun, ExactClosed) {
    const auto cfg = write_config("c.cfg", "n_atoms = 1\ngamma_over_f = 0\nn_ph = 0\natoms = excited\ntau_max = 3.141592653589793\ndtau = 0.01\n");
    ASSERT_EQ(run("exact-closed --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0) << stderr_text();
    const auto t = read_csv((dir_ / "o" / "exact.csv").string());
    ASSERT_EQ(t.header, (std::vector<std::string>{"tau", "p_e", "photons"}));
    for (const auto& r : t.rows) EXPECT_NEAR(r[1], std::cos(r[0]) * std::cos(r[0]), 1e-10);
    const auto mid = std::find_if(t.rows.begin(), t.rows.end(), [](const auto& r) { return std::abs(r[0] - 1.57) < 1e-9; });
    ASSERT_NE(mid, t.rows.end());
    EXPECT_LT((*mid)[1], 1e-5);

    const auto g = write_config("g.cfg", "n_atoms = 5\ngamma_over_f = 0\nn_ph = 0\natoms = ground\ntau_max = 5\ndtau = 0.5\n");
    ASSERT_EQ(run("exact-closed --config " + g.string() + " --out " + (dir_ / "g").string()), 0);
    for (const auto& r : read_csv((dir_ / "g" / "exact.csv").string()).rows) {
        EXPECT_EQ(r[1], 0.0);
        EXPECT_EQ(r[2], 0.0);
    }
    const auto over = write_config("over.cfg", "n_atoms = 2\ngamma_over_f = 0\nn_ph = 100\natoms = ground\ntau_max = 1\ncutoff = 50\n");
    EXPECT_EQ(run("exact-closed --config " + over.string() + " --out " + (dir_ / "x").string()), 2);
    EXPECT_NE(stderr_text().find("required cutoff"), std::string::npos);
}

TEST_F(CliRun, ExactOpenRejectsLargeN) {
    const auto cfg = write_config("c.cfg", "n_atoms = 7\nn_ph = 0\natoms = excited\ngamma_over_f = 1\ntau_max = 1\n");
    EXPECT_EQ(run("exact-open --config " + cfg.string() + " --out " + (dir_ / "o").string()), 2);
    const auto ok = write_config("ok.cfg", "n_atoms = 2\nn_ph = 0\natoms = excited\ngamma_over_f = 1\ntau_max = 2\ndtau = 0.1\n");
    ASSERT_EQ(run("exact-open --config " + ok.string() + " --out " + (dir_ / "p").string()), 0) << stderr_text();
    const auto s = nlohmann::json::parse(slurp(dir_ / "p" / "summary.json"));
    EXPECT_EQ(s["solver"], "open");
    EXPECT_LT(s["max_trace_deviation"].get<double>(), 1e-8);
}

TEST_F(CliRun, Potential) {
    const auto cfg = write_config("c.cfg", "E = 0.5\nkappa = 8\nw_min = -2\nw_max = 3\nn_points = 101\n");
    ASSERT_EQ(run("potential --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0) << stderr_text();
    const auto t = read_csv((dir_ / "o" / "potential.csv").string());
    ASSERT_EQ(t.rows.size(), 101u);
    bool saw_zero = false;
    for (const auto& r : t.rows) {
        const double w = r[0];
        EXPECT_NEAR(r[2], 2 * 0.5 * w * w - w * w * w + w, 1e-9);
        // kappa = 8: the cubic term cancels, leaving (2E - 1) w^2 + 2 w + w^4 / 4.
        EXPECT_NEAR(r[1], (2 * 0.5 - 1) * w * w + 2 * w + 0.25 * w * w * w * w, 1e-9);
        if (w == 0.0) {
            saw_zero = true;
            EXPECT_EQ(r[1], 0.0);
            EXPECT_EQ(r[2], 0.0);
        }
    }
    EXPECT_TRUE(saw_zero);
}

TEST_F(CliRun, SemiclassicalOverBarrier) {
    const double E = 0.5;
    const double wdot0 = std::sqrt(2 * (semiclassics::barrier_height(E) + 1.0));
    const auto cfg = write_config("c.cfg", "E = 0.5\nw0 = 0\nwdot0 = " + format_real(wdot0) + "\ntau_max = 20\n");
    ASSERT_EQ(run("semiclassical --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0) << stderr_text();
    const auto s = nlohmann::json::parse(slurp(dir_ / "o" / "summary.json"));
    EXPECT_TRUE(s["blew_up"].get<bool>());
    const double p = s["fit"]["exponent"].get<double>();
    EXPECT_GE(p, 1.8);
    EXPECT_LE(p, 2.2);
}

TEST_F(CliRun, Compare) {
    auto write_stats = [&](const std::string& name, double shift) {
        std::ofstream f(dir_ / name);
        f << "tau,rho_ee_mean_re,rho_ee_stderr_re\n";
        for (int i = 0; i <= 10; ++i)
            f << format_cell(0.1 * i) << "," << format_cell(0.5 + (i == 0 ? shift : 0.0)) << ",0.01\n";
    };
    write_stats("a.csv", 0.0);
    write_stats("b.csv", 0.0);
    write_stats("c.csv", 5 * std::sqrt(2.0) * 0.01 * 1.001);
    ASSERT_EQ(run("compare " + (dir_ / "a.csv").string() + " " + (dir_ / "b.csv").string() + " --out " + (dir_ / "o").string()), 0) << stderr_text();
    auto j = nlohmann::json::parse(slurp(dir_ / "o" / "compare.json"));
    EXPECT_EQ(j["max_deviation_sigma"].get<double>(), 0.0);
    EXPECT_EQ(j["violations"], 0);
    ASSERT_EQ(run("compare " + (dir_ / "c.csv").string() + " " + (dir_ / "b.csv").string() + " --out " + (dir_ / "p").string()), 0);
    j = nlohmann::json::parse(slurp(dir_ / "p" / "compare.json"));
    EXPECT_GT(j["max_deviation_sigma"].get<double>(), 5.0);
    EXPECT_EQ(j["first_violation_time"].get<double>(), 0.0);
    EXPECT_EQ(j["violations"], 1);
}
