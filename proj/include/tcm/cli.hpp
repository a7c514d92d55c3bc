#pragma once

// Support code for the command-line front end: flat key = value config
// files, typed run configurations with a round-trippable echo, CSV
// serialization and the stochastic-vs-reference comparison.
//
// Requires nlohmann/json (vendor/json.hpp) on the include path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "tcm/ensemble.hpp"
#include "tcm/error.hpp"
#include "tcm/exact.hpp"
#include "tcm/model.hpp"

namespace tcm::cli {

inline constexpr const char* kCodeVersion = "0.1.0";
inline constexpr const char* kStatsSchema = "tcm-stats/1";
inline constexpr const char* kExactSchema = "tcm-exact/1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericalFailure : public Error {
public:
    using Error::Error;
};

using ConfigMap = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// key = value per line; '#' starts a comment; blank lines ignored.
inline ConfigMap parse_config_text(std::string_view text) {
    ConfigMap out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
        const std::string l = trim(line);
        if (l.empty()) continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(l).substr(0, eq));
        const std::string value = trim(std::string_view(l).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (value.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                              "' has no value");
        if (!out.emplace(key, value).second)
            throw ConfigError("config key '" + key + "' given more than once");
    }
    return out;
}

inline ConfigMap read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline std::string config_to_text(const ConfigMap& m) {
    std::string out;
    for (const auto& [k, v] : m) out += k + " = " + v + "\n";
    return out;
}

struct KeySpec {
    std::string name;
    bool required = false;
    std::string default_value;
};
using Schema = std::vector<KeySpec>;

/// Rejects unknown keys and reports missing required keys, listing all
/// offenders at once; fills defaults for the rest.
inline ConfigMap apply_schema(const ConfigMap& given, const Schema& schema) {
    std::vector<std::string> unknown, missing;
    for (const auto& [k, v] : given) {
        const bool known = std::any_of(schema.begin(), schema.end(),
                                       [&](const KeySpec& s) { return s.name == k; });
        if (!known) unknown.push_back(k);
    }
    ConfigMap out;
    for (const auto& s : schema) {
        if (auto it = given.find(s.name); it != given.end()) {
            out[s.name] = it->second;
        } else if (s.required) {
            missing.push_back(s.name);
        } else if (!s.default_value.empty()) {
            out[s.name] = s.default_value;
        }
    }
    auto join = [](const std::vector<std::string>& v) {
        std::string r;
        for (const auto& x : v) r += (r.empty() ? "" : ", ") + x;
        return r;
    };
    std::string msg;
    if (!unknown.empty()) msg += "unknown config keys: " + join(unknown);
    if (!missing.empty()) msg += (msg.empty() ? "" : "; ") + std::string("missing required config keys: ") + join(missing);
    if (!msg.empty()) throw ConfigError(msg);
    return out;
}

// Canonical text forms used by the echo.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV cell: 12 significant digits.
inline std::string format_cell(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline double get_real(const ConfigMap& m, const std::string& key) {
    const auto& s = m.at(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || !std::isfinite(v))
        throw ConfigError("config key '" + key + "': '" + s + "' is not a finite number");
    return v;
}

inline std::int64_t get_int(const ConfigMap& m, const std::string& key) {
    const auto& s = m.at(key);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size()) throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
    return v;
}

inline std::uint64_t get_u64(const ConfigMap& m, const std::string& key) {
    const auto& s = m.at(key);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        if (!s.empty() && s[0] != '-') v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty())
        throw ConfigError("config key '" + key + "': '" + s + "' is not an unsigned integer");
    return v;
}

inline bool get_bool(const ConfigMap& m, const std::string& key) {
    const auto& s = m.at(key);
    if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "off" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
}

inline void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config key '" + key + "': " + what);
}

inline AtomsInitial parse_atoms(const ConfigMap& m) {
    const auto& s = m.at("atoms");
    if (s == "ground") return AtomsInitial::AllGround;
    if (s == "excited") return AtomsInitial::AllExcited;
    throw ConfigError("config key 'atoms': expected ground or excited, got '" + s + "'");
}

inline std::string atoms_text(AtomsInitial a) {
    return a == AtomsInitial::AllGround ? "ground" : "excited";
}

inline Schema model_schema() {
    return {{"n_atoms", true, ""},
            {"n_ph", true, ""},
            {"gamma_over_f", true, ""},
            {"atoms", true, ""},
            {"field_phase", false, "0"}};
}

inline ModelParams build_model(const ConfigMap& m) {
    ModelParams p;
    const auto n = get_int(m, "n_atoms");
    require(n >= 1 && n <= 1000000000, "n_atoms", "must be a positive integer");
    p.n_atoms = static_cast<int>(n);
    p.n_ph = get_real(m, "n_ph");
    require(p.n_ph >= 0.0, "n_ph", "must be >= 0");
    p.gamma_over_f = get_real(m, "gamma_over_f");
    require(p.gamma_over_f >= 0.0, "gamma_over_f", "must be >= 0");
    p.atoms_initial = parse_atoms(m);
    p.field_phase = get_real(m, "field_phase");
    return p;
}

inline void echo_model(const ModelParams& p, ConfigMap& out) {
    out["n_atoms"] = std::to_string(p.n_atoms);
    out["n_ph"] = format_real(p.n_ph);
    out["gamma_over_f"] = format_real(p.gamma_over_f);
    out["atoms"] = atoms_text(p.atoms_initial);
    out["field_phase"] = format_real(p.field_phase);
}

// ---------------------------------------------------------------- simulate

struct SimulateConfig {
    ModelParams params;
    EnsembleConfig ensemble;
    /// Partial statistics are flushed after this many merged blocks (0: never).
    std::int64_t progress_every_blocks = 0;
};

inline Schema simulate_schema() {
    Schema s = model_schema();
    const Schema extra{{"n_traj", true, ""},
                       {"tau_max", true, ""},
                       {"dtau", false, "0.001"},
                       {"seed", false, "0"},
                       {"scheme", false, "srk2"},
                       {"noise_scheme", false, "B"},
                       {"runaway_bound", false, "1000000"},
                       {"record_every", false, "1"},
                       {"observables", false, "rho_ee,rho_eg,A,photon_proxy"},
                       {"gauge", false, "off"},
                       {"gauge_k", false, "1"},
                       {"gauge_x1", false, "-1"},
                       {"gauge_x2", false, "2"},
                       {"threads", false, "0"},
                       {"block_size", false, "64"},
                       {"progress_every_blocks", false, "0"}};
    s.insert(s.end(), extra.begin(), extra.end());
    return s;
}

inline std::vector<Observable> parse_observables(const std::string& text) {
    std::vector<Observable> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        bool found = false;
        for (Observable o : kAllObservables) {
            if (observable_name(o) == item) {
                if (std::find(out.begin(), out.end(), o) != out.end())
                    throw ConfigError("config key 'observables': '" + item + "' listed twice");
                out.push_back(o);
                found = true;
            }
        }
        if (!found) throw ConfigError("config key 'observables': unknown observable '" + item + "'");
    }
    if (out.empty()) throw ConfigError("config key 'observables': empty list");
    return out;
}

inline SimulateConfig build_simulate(const ConfigMap& given) {
    const ConfigMap m = apply_schema(given, simulate_schema());
    SimulateConfig c;
    c.params = build_model(m);
    auto& e = c.ensemble;
    e.n_traj = get_int(m, "n_traj");
    require(e.n_traj >= 1, "n_traj", "must be >= 1");
    e.tau_max = get_real(m, "tau_max");
    require(e.tau_max >= 0.0, "tau_max", "must be >= 0");
    e.step.dtau = get_real(m, "dtau");
    require(e.step.dtau > 0.0, "dtau", "must be > 0");
    e.seed = get_u64(m, "seed");
    const auto& scheme = m.at("scheme");
    if (scheme == "srk2") e.step.scheme = StepScheme::SRK2;
    else if (scheme == "euler") e.step.scheme = StepScheme::EulerMaruyama;
    else throw ConfigError("config key 'scheme': expected srk2 or euler, got '" + scheme + "'");
    const auto& ns = m.at("noise_scheme");
    if (ns == "A") e.step.noise_scheme = NoiseScheme::A;
    else if (ns == "B") e.step.noise_scheme = NoiseScheme::B;
    else throw ConfigError("config key 'noise_scheme': expected A or B, got '" + ns + "'");
    e.step.runaway_bound = get_real(m, "runaway_bound");
    require(e.step.runaway_bound > 1.0, "runaway_bound", "must be > 1");
    const auto re = get_int(m, "record_every");
    require(re >= 1 && re <= 1000000000, "record_every", "must be >= 1");
    e.record_every = static_cast<int>(re);
    e.observables = parse_observables(m.at("observables"));
    e.gauge.enabled = get_bool(m, "gauge");
    e.gauge.k = get_real(m, "gauge_k");
    require(e.gauge.k > 0.0, "gauge_k", "must be > 0");
    e.gauge.x1 = get_real(m, "gauge_x1");
    e.gauge.x2 = get_real(m, "gauge_x2");
    require(e.gauge.x1 < e.gauge.x2, "gauge_x1", "must be < gauge_x2");
    const auto th = get_int(m, "threads");
    require(th >= 0 && th <= 4096, "threads", "must be in [0, 4096]");
    e.threads = static_cast<int>(th);
    const auto bs = get_int(m, "block_size");
    require(bs >= 1 && bs <= 1000000, "block_size", "must be >= 1");
    e.block_size = static_cast<int>(bs);
    c.progress_every_blocks = get_int(m, "progress_every_blocks");
    require(c.progress_every_blocks >= 0, "progress_every_blocks", "must be >= 0");
    try {
        c.params.validate();
        e.validate();
    } catch (const InvalidArgument& ex) {
        throw ConfigError(ex.what());
    }
    return c;
}

inline ConfigMap echo_simulate(const SimulateConfig& c) {
    ConfigMap out;
    echo_model(c.params, out);
    const auto& e = c.ensemble;
    out["n_traj"] = std::to_string(e.n_traj);
    out["tau_max"] = format_real(e.tau_max);
    out["dtau"] = format_real(e.step.dtau);
    out["seed"] = std::to_string(e.seed);
    out["scheme"] = e.step.scheme == StepScheme::SRK2 ? "srk2" : "euler";
    out["noise_scheme"] = e.step.noise_scheme == NoiseScheme::A ? "A" : "B";
    out["runaway_bound"] = format_real(e.step.runaway_bound);
    out["record_every"] = std::to_string(e.record_every);
    std::string obs;
    for (Observable o : e.observables) obs += (obs.empty() ? "" : ",") + std::string(observable_name(o));
    out["observables"] = obs;
    out["gauge"] = e.gauge.enabled ? "on" : "off";
    out["gauge_k"] = format_real(e.gauge.k);
    out["gauge_x1"] = format_real(e.gauge.x1);
    out["gauge_x2"] = format_real(e.gauge.x2);
    out["threads"] = std::to_string(e.threads);
    out["block_size"] = std::to_string(e.block_size);
    out["progress_every_blocks"] = std::to_string(c.progress_every_blocks);
    return out;
}

// ------------------------------------------------------------------- exact

struct ExactConfig {
    ModelParams params;
    double tau_max = 0.0;
    double dtau = 0.01;
    std::optional<int> cutoff;
    double max_dt = 0.01;
    double coupling_scale = 1.0;
};

inline Schema exact_schema(bool open) {
    Schema s = model_schema();
    s.push_back({"tau_max", true, ""});
    s.push_back({"dtau", false, "0.01"});
    s.push_back({"cutoff", false, ""});
    if (open) {
        s.push_back({"max_dt", false, "0.01"});
        s.push_back({"coupling_scale", false, "1"});
    }
    return s;
}

inline ExactConfig build_exact(const ConfigMap& given, bool open) {
    const ConfigMap m = apply_schema(given, exact_schema(open));
    ExactConfig c;
    c.params = build_model(m);
    c.tau_max = get_real(m, "tau_max");
    require(c.tau_max >= 0.0, "tau_max", "must be >= 0");
    c.dtau = get_real(m, "dtau");
    require(c.dtau > 0.0, "dtau", "must be > 0");
    if (m.count("cutoff")) {
        const auto v = get_int(m, "cutoff");
        require(v >= 0 && v <= exact::kMaxCutoff, "cutoff", "must be in [0, " + std::to_string(exact::kMaxCutoff) + "]");
        c.cutoff = static_cast<int>(v);
    }
    if (open) {
        c.max_dt = get_real(m, "max_dt");
        require(c.max_dt > 0.0, "max_dt", "must be > 0");
        c.coupling_scale = get_real(m, "coupling_scale");
    }
    return c;
}

inline ConfigMap echo_exact(const ExactConfig& c, bool open) {
    ConfigMap out;
    echo_model(c.params, out);
    out["tau_max"] = format_real(c.tau_max);
    out["dtau"] = format_real(c.dtau);
    if (c.cutoff) out["cutoff"] = std::to_string(*c.cutoff);
    if (open) {
        out["max_dt"] = format_real(c.max_dt);
        out["coupling_scale"] = format_real(c.coupling_scale);
    }
    return out;
}

inline std::vector<double> uniform_grid(double tau_max, double dtau) {
    const auto n = grid_steps(tau_max, dtau);
    std::vector<double> g(static_cast<std::size_t>(n) + 1);
    for (std::int64_t i = 0; i <= n; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) * dtau;
    return g;
}

// ----------------------------------------------------------- semiclassical

struct SemiclassicalConfig {
    double E = 0.5;
    double kappa = 0.0;
    double w0 = 1.0;
    double wdot0 = 0.0;
    double tau_max = 10.0;
    double dtau = 1e-3;
    double bound = 1e6;
};

inline Schema semiclassical_schema() {
    return {{"E", true, ""},         {"w0", true, ""},          {"wdot0", true, ""},
            {"tau_max", true, ""},   {"kappa", false, "0"},     {"dtau", false, "0.001"},
            {"bound", false, "1000000"}};
}

inline SemiclassicalConfig build_semiclassical(const ConfigMap& given) {
    const ConfigMap m = apply_schema(given, semiclassical_schema());
    SemiclassicalConfig c;
    c.E = get_real(m, "E");
    c.w0 = get_real(m, "w0");
    c.wdot0 = get_real(m, "wdot0");
    c.tau_max = get_real(m, "tau_max");
    require(c.tau_max >= 0.0, "tau_max", "must be >= 0");
    c.kappa = get_real(m, "kappa");
    require(c.kappa >= 0.0, "kappa", "must be >= 0");
    c.dtau = get_real(m, "dtau");
    require(c.dtau > 0.0, "dtau", "must be > 0");
    c.bound = get_real(m, "bound");
    require(c.bound > 1e3, "bound", "must be > 1000");
    return c;
}

inline ConfigMap echo_semiclassical(const SemiclassicalConfig& c) {
    return {{"E", format_real(c.E)},         {"w0", format_real(c.w0)},
            {"wdot0", format_real(c.wdot0)}, {"tau_max", format_real(c.tau_max)},
            {"kappa", format_real(c.kappa)}, {"dtau", format_real(c.dtau)},
            {"bound", format_real(c.bound)}};
}

// --------------------------------------------------------------- potential

struct PotentialConfig {
    double E = 0.5;
    double kappa = 0.0;
    double w_min = -2.0;
    double w_max = 3.0;
    int n_points = 501;
};

inline Schema potential_schema() {
    return {{"E", true, ""},
            {"kappa", false, "0"},
            {"w_min", false, "-2"},
            {"w_max", false, "3"},
            {"n_points", false, "501"}};
}

inline PotentialConfig build_potential(const ConfigMap& given) {
    const ConfigMap m = apply_schema(given, potential_schema());
    PotentialConfig c;
    c.E = get_real(m, "E");
    c.kappa = get_real(m, "kappa");
    c.w_min = get_real(m, "w_min");
    c.w_max = get_real(m, "w_max");
    require(c.w_min < c.w_max, "w_min", "must be < w_max");
    const auto n = get_int(m, "n_points");
    require(n >= 2 && n <= 10000000, "n_points", "must be in [2, 1e7]");
    c.n_points = static_cast<int>(n);
    return c;
}

inline ConfigMap echo_potential(const PotentialConfig& c) {
    return {{"E", format_real(c.E)},
            {"kappa", format_real(c.kappa)},
            {"w_min", format_real(c.w_min)},
            {"w_max", format_real(c.w_max)},
            {"n_points", std::to_string(c.n_points)}};
}

/// Grid of n_points abscissae spanning [w_min, w_max]. If 0 lies inside
/// the range, the nearest grid point is moved onto it so the U(0) = 0 row
/// is always present.
inline std::vector<double> potential_grid(const PotentialConfig& c) {
    std::vector<double> w(static_cast<std::size_t>(c.n_points));
    const double h = (c.w_max - c.w_min) / (c.n_points - 1);
    for (int i = 0; i < c.n_points; ++i) w[static_cast<std::size_t>(i)] = c.w_min + i * h;
    w.back() = c.w_max;
    if (c.w_min <= 0.0 && c.w_max >= 0.0) {
        const auto k = static_cast<std::size_t>(std::llround(-c.w_min / h));
        w[std::min(k, w.size() - 1)] = 0.0;
    }
    return w;
}

// --------------------------------------------------------------------- CSV

inline std::vector<std::string> stats_columns(const EnsembleResult& r) {
    std::vector<std::string> cols{"tau"};
    for (const auto& s : r.masked) {
        const std::string n(observable_name(s.observable));
        for (const char* suffix : {"_mean_re", "_mean_im", "_stderr_re", "_stderr_im"})
            cols.push_back(n + suffix);
    }
    cols.push_back("alive_fraction");
    for (const auto& s : r.weighted) {
        const std::string n(observable_name(s.observable));
        for (const char* suffix : {"_wmean_re", "_wmean_im", "_wstderr_re", "_wstderr_im"})
            cols.push_back(n + suffix);
    }
    return cols;
}

inline void write_row(std::ostream& os, const std::vector<double>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_cell(row[i]);
    os << '\n';
}

inline void write_header(std::ostream& os, const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
}

inline void write_stats_csv(std::ostream& os, const EnsembleResult& r) {
    write_header(os, stats_columns(r));
    std::vector<double> row;
    for (std::size_t p = 0; p < r.tau.size(); ++p) {
        row.clear();
        row.push_back(r.tau[p]);
        for (const auto& s : r.masked) {
            row.push_back(s.mean[p].real());
            row.push_back(s.mean[p].imag());
            row.push_back(s.stderr_re[p]);
            row.push_back(s.stderr_im[p]);
        }
        row.push_back(r.alive_fraction[p]);
        for (const auto& s : r.weighted) {
            row.push_back(s.mean[p].real());
            row.push_back(s.mean[p].imag());
            row.push_back(s.stderr_re[p]);
            row.push_back(s.stderr_im[p]);
        }
        write_row(os, row);
    }
}

inline void write_exact_csv(std::ostream& os, const exact::ExactSeries& s) {
    write_header(os, {"tau", "p_e", "photons"});
    for (std::size_t i = 0; i < s.tau.size(); ++i) write_row(os, {s.tau[i], s.p_excited[i], s.photons[i]});
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::optional<std::size_t> index(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }
};

inline double parse_cell(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("CSV cell '" + s + "' is not a number");
    return v;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
    CsvTable t;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
        return out;
    };
    if (!std::getline(in, line)) throw ConfigError("CSV file '" + path + "' is empty");
    t.header = split(trim(line));
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line));
        if (cells.size() != t.header.size())
            throw ConfigError("CSV file '" + path + "': row width differs from header");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_cell(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ----------------------------------------------------------------- compare

struct CompareReport {
    std::string observable;
    std::size_t points = 0;
    double sigma_level = 3.0;
    double max_deviation_sigma = 0.0;
    double tau_at_max = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> first_violation_time;
    std::size_t violations = 0;
};

namespace detail {

struct SeriesColumns {
    std::size_t mean;
    std::optional<std::size_t> stderr_col;
};

inline SeriesColumns locate(const CsvTable& t, const std::string& obs, const std::string& which) {
    if (auto m = t.index(obs + "_mean_re")) return {*m, t.index(obs + "_stderr_re")};
    const std::string alt = obs == "rho_ee" ? "p_e" : obs == "photon_proxy" ? "photons" : "";
    if (!alt.empty())
        if (auto m = t.index(alt)) return {*m, std::nullopt};
    throw ConfigError(which + " CSV has no column for observable '" + obs + "'");
}

} // namespace detail

/// Deviation at each common grid time in units of the combined standard
/// error sqrt(se_a^2 + se_b^2); a reference without stderr columns counts as
/// exact. Rows are matched on tau; rows with undefined statistics are skipped.
inline CompareReport compare_tables(const CsvTable& a, const CsvTable& b, const std::string& obs,
                                    double sigma_level = 3.0) {
    const auto ta = a.index("tau"), tb = b.index("tau");
    if (!ta || !tb) throw ConfigError("compare: both CSV files need a tau column");
    const auto ca = detail::locate(a, obs, "stochastic");
    const auto cb = detail::locate(b, obs, "reference");
    CompareReport rep;
    rep.observable = obs;
    rep.sigma_level = sigma_level;
    std::size_t j = 0;
    for (const auto& ra : a.rows) {
        const double t = ra[*ta];
        const double tol = 1e-9 * std::max(1.0, std::abs(t));
        while (j < b.rows.size() && b.rows[j][*tb] < t - tol) ++j;
        if (j >= b.rows.size()) break;
        const auto& rb = b.rows[j];
        if (std::abs(rb[*tb] - t) > tol) continue;
        const double ma = ra[ca.mean], mb = rb[cb.mean];
        const double sa = ca.stderr_col ? ra[*ca.stderr_col] : 0.0;
        const double sb = cb.stderr_col ? rb[*cb.stderr_col] : 0.0;
        if (!std::isfinite(ma) || !std::isfinite(mb)) continue;
        const double se = std::sqrt((std::isfinite(sa) ? sa * sa : 0.0) + (std::isfinite(sb) ? sb * sb : 0.0));
        const double diff = std::abs(ma - mb);
        const double dev = diff == 0.0 ? 0.0 : (se > 0.0 ? diff / se : std::numeric_limits<double>::infinity());
        ++rep.points;
        if (rep.points == 1 || dev > rep.max_deviation_sigma) {
            rep.max_deviation_sigma = dev;
            rep.tau_at_max = t;
        }
        if (dev > sigma_level) {
            ++rep.violations;
            if (!rep.first_violation_time) rep.first_violation_time = t;
        }
    }
    if (rep.points == 0) throw ConfigError("compare: the two CSV files share no grid times");
    return rep;
}

inline nlohmann::ordered_json report_json(const CompareReport& r) {
    nlohmann::ordered_json j;
    j["observable"] = r.observable;
    j["points"] = r.points;
    j["sigma_level"] = r.sigma_level;
    j["max_deviation_sigma"] = std::isfinite(r.max_deviation_sigma) ? nlohmann::ordered_json(r.max_deviation_sigma)
                                                                      : nlohmann::ordered_json("inf");
    j["tau_at_max"] = r.tau_at_max;
    j["violations"] = r.violations;
    j["first_violation_time"] = r.first_violation_time ? nlohmann::ordered_json(*r.first_violation_time)
                                                       : nlohmann::ordered_json(nullptr);
    return j;
}

inline nlohmann::ordered_json config_json(const ConfigMap& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

inline ConfigMap config_from_json(const nlohmann::ordered_json& j) {
    ConfigMap m;
    for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<std::string>();
    return m;
}

/// JSON-safe real: non-finite values become strings.
inline nlohmann::ordered_json json_real(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

} // namespace tcm::cli
