#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tcm/cli.hpp"
#include "tcm/ensemble.hpp"
#include "tcm/exact.hpp"
#include "tcm/semiclassics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace tcm;
using namespace tcm::cli;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out = ".";
};

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    f << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

class Manifest {
public:
    Manifest(std::string command, const Common& c)
        : command_(std::move(command)), dir_(c.out), start_(std::chrono::steady_clock::now()),
          started_at_(utc_now()) {}

    fs::path path(const std::string& name) {
        outputs_.push_back(name);
        return dir_ / name;
    }

    void finish(const ConfigMap& echo, std::optional<std::uint64_t> seed) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json j;
        j["run_id"] = command_ + "-" + (seed ? std::to_string(*seed) + "-" : "") + started_at_;
        j["command"] = command_;
        j["code_version"] = kCodeVersion;
        j["seed"] = seed ? json(*seed) : json(nullptr);
        j["started_at"] = started_at_;
        j["wall_clock_seconds"] = wall;
        j["config"] = config_json(echo);
        outputs_.push_back("manifest.json");
        j["outputs"] = outputs_;
        write_json(dir_ / "manifest.json", j);
    }

private:
    std::string command_;
    fs::path dir_;
    std::chrono::steady_clock::time_point start_;
    std::string started_at_;
    std::vector<std::string> outputs_;
};

ConfigMap load(const Common& c) {
    if (c.config.empty()) throw ConfigError("--config is required");
    return read_config_file(c.config);
}

void prepare_out(const Common& c) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw ConfigError("cannot create output directory '" + c.out + "': " + ec.message());
}

json summary_base(const char* schema, const ConfigMap& echo) {
    json j;
    j["schema_version"] = schema;
    j["code_version"] = kCodeVersion;
    j["config"] = config_json(echo);
    return j;
}

int run_simulate(const Common& c) {
    ConfigMap given = load(c);
    if (c.seed) given["seed"] = std::to_string(*c.seed);
    SimulateConfig cfg = build_simulate(given);
    if (c.threads) cfg.ensemble.threads = *c.threads;
    prepare_out(c);
    Manifest manifest("simulate", c);
    const ConfigMap echo = echo_simulate(cfg);

    const fs::path partial_csv = fs::path(c.out) / "stats.partial.csv";
    const fs::path progress_json = fs::path(c.out) / "progress.json";
    ProgressCallback progress;
    if (cfg.progress_every_blocks > 0) {
        progress = [&](std::int64_t done, const EnsembleResult& r) {
            {
                std::ofstream f(partial_csv, std::ios::binary);
                write_stats_csv(f, r);
            }
            json p;
            p["trajectories_done"] = done;
            p["n_traj"] = cfg.ensemble.n_traj;
            p["threshold_time"] = json_real(r.threshold_time);
            write_json(progress_json, p);
            std::cerr << "simulate: " << done << "/" << cfg.ensemble.n_traj << " trajectories\n";
        };
    }
    const EnsembleResult r = run_ensemble(cfg.params, cfg.ensemble, progress, cfg.progress_every_blocks);
    std::error_code ec;
    fs::remove(partial_csv, ec);
    fs::remove(progress_json, ec);

    {
        std::ofstream f(manifest.path("stats.csv"), std::ios::binary);
        write_stats_csv(f, r);
    }
    json s = summary_base(kStatsSchema, echo);
    s["columns"] = stats_columns(r);
    s["n_traj"] = r.n_traj;
    s["threshold_time"] = json_real(r.threshold_time);
    s["final_alive_fraction"] = r.alive_fraction.back();
    write_json(manifest.path("summary.json"), s);
    manifest.finish(echo, cfg.ensemble.seed);

    if (r.alive_count.size() > 1 && r.alive_count[1] == 0)
        throw NumericalFailure("all trajectories diverged before the first grid point");
    return kExitOk;
}

int run_exact(const Common& c, bool open) {
    const ExactConfig cfg = build_exact(load(c), open);
    const auto grid = uniform_grid(cfg.tau_max, cfg.dtau);
    exact::ExactSeries series;
    if (open) {
        exact::OpenOptions o;
        o.cutoff = cfg.cutoff;
        o.max_dt = cfg.max_dt;
        o.coupling_scale = cfg.coupling_scale;
        series = exact::open_evolve(cfg.params, grid, o);
    } else {
        series = exact::closed_evolve(cfg.params, grid, {cfg.cutoff});
    }
    prepare_out(c);
    const char* name = open ? "exact-open" : "exact-closed";
    Manifest manifest(name, c);
    const ConfigMap echo = echo_exact(cfg, open);
    {
        std::ofstream f(manifest.path("exact.csv"), std::ios::binary);
        write_exact_csv(f, series);
    }
    json s = summary_base(kExactSchema, echo);
    s["solver"] = open ? "open" : "closed";
    s["photon_cutoff"] = exact::resolve_cutoff(cfg.params.n_ph, cfg.cutoff);
    if (open) {
        s["max_trace_deviation"] = series.max_trace_deviation;
        s["max_hermiticity_deviation"] = series.max_hermiticity_deviation;
    }
    write_json(manifest.path("summary.json"), s);
    manifest.finish(echo, std::nullopt);
    return kExitOk;
}

int run_semiclassical(const Common& c) {
    const SemiclassicalConfig cfg = build_semiclassical(load(c));
    semiclassics::InversionOptions opt;
    opt.dtau = cfg.dtau;
    opt.max_substep = std::min(cfg.dtau, 1e-3);
    opt.bound = cfg.bound;
    const auto r = semiclassics::inversion_ode_evolve(cfg.w0, cfg.wdot0, cfg.E, cfg.kappa, cfg.tau_max, opt);
    prepare_out(c);
    Manifest manifest("semiclassical", c);
    const ConfigMap echo = echo_semiclassical(cfg);
    {
        std::ofstream f(manifest.path("inversion.csv"), std::ios::binary);
        write_header(f, {"tau", "w", "wdot", "h"});
        for (std::size_t i = 0; i < r.tau.size(); ++i)
            write_row(f, {r.tau[i], r.w[i], r.wdot[i],
                          semiclassics::effective_hamiltonian(r.w[i], r.wdot[i], cfg.E, cfg.kappa)});
    }
    json s = summary_base("tcm-inversion/1", echo);
    s["h"] = semiclassics::effective_hamiltonian(cfg.w0, cfg.wdot0, cfg.E, cfg.kappa);
    if (cfg.kappa == 0.0) {
        s["barrier_position"] = semiclassics::barrier_position(cfg.E);
        s["barrier_height"] = semiclassics::barrier_height(cfg.E);
    }
    s["blew_up"] = r.blew_up;
    s["blow_up_time"] = json_real(r.blow_up_time);
    if (r.blew_up) {
        std::vector<double> aw(r.w.size());
        for (std::size_t i = 0; i < aw.size(); ++i) aw[i] = std::abs(r.w[i]);
        try {
            const auto fit = semiclassics::fit_singularity_exponent(r.tau, aw, cfg.bound);
            s["fit"] = {{"exponent", fit.exponent}, {"tau_s", fit.tau_s}, {"points", fit.points}};
        } catch (const FitUnavailable& e) {
            s["fit"] = {{"error", e.what()}};
        }
    }
    write_json(manifest.path("summary.json"), s);
    manifest.finish(echo, std::nullopt);
    return kExitOk;
}

int run_potential(const Common& c) {
    const PotentialConfig cfg = build_potential(load(c));
    prepare_out(c);
    Manifest manifest("potential", c);
    const ConfigMap echo = echo_potential(cfg);
    {
        std::ofstream f(manifest.path("potential.csv"), std::ios::binary);
        write_header(f, {"w", "U", "U_kappa0"});
        for (double w : potential_grid(cfg))
            write_row(f, {w, modified_potential(w, cfg.E, cfg.kappa), semiclassics::effective_potential(w, cfg.E)});
    }
    manifest.finish(echo, std::nullopt);
    return kExitOk;
}

int run_compare(const std::string& stochastic, const std::string& reference, const std::string& observable,
                double sigma, const Common& c) {
    const auto a = read_csv(stochastic);
    const auto b = read_csv(reference);
    const auto rep = compare_tables(a, b, observable, sigma);
    prepare_out(c);
    Manifest manifest("compare", c);
    json j = report_json(rep);
    j["stochastic_csv"] = stochastic;
    j["reference_csv"] = reference;
    write_json(manifest.path("compare.json"), j);
    manifest.finish({{"observable", observable}, {"sigma", format_real(sigma)}}, std::nullopt);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool with_config = true) {
    if (with_config) sub->add_option("--config", c.config, "config file (key = value)")->required();
    sub->add_option("--seed", c.seed, "override the config seed");
    sub->add_option("--threads", c.threads, "worker threads (default: TCM_THREADS or all cores)");
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Positive-P simulator and reference solvers for the Tavis-Cummings model"};
    app.require_subcommand(1);
    Common common;

    auto* sim = app.add_subcommand("simulate", "stochastic ensemble");
    add_common(sim, common);
    auto* closed = app.add_subcommand("exact-closed", "closed-system exact solver");
    add_common(closed, common);
    auto* open = app.add_subcommand("exact-open", "open-system exact solver (N <= 6)");
    add_common(open, common);
    auto* semi = app.add_subcommand("semiclassical", "noise-free inversion dynamics");
    add_common(semi, common);
    auto* pot = app.add_subcommand("potential", "effective potential table");
    add_common(pot, common);
    auto* cmp = app.add_subcommand("compare", "stochastic CSV against a reference CSV");
    add_common(cmp, common, false);
    std::string stochastic, reference, observable = "rho_ee";
    double sigma = 3.0;
    cmp->add_option("stochastic", stochastic, "stochastic stats CSV")->required();
    cmp->add_option("reference", reference, "exact or stochastic reference CSV")->required();
    cmp->add_option("--observable", observable, "observable name")->capture_default_str();
    cmp->add_option("--sigma", sigma, "violation level in combined stderr")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*sim) return run_simulate(common);
        if (*closed) return run_exact(common, false);
        if (*open) return run_exact(common, true);
        if (*semi) return run_semiclassical(common);
        if (*pot) return run_potential(common);
        if (*cmp) return run_compare(stochastic, reference, observable, sigma, common);
    } catch (const NumericalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UnsupportedSize& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CutoffOverflow& e) {
        std::cerr << "config error: " << e.what() << " (required cutoff " << e.required_cutoff << ")\n";
        return kExitConfig;
    } catch (const InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
