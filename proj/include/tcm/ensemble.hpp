#pragma once

// Ensemble driver: propagates n_traj independent trajectories and reduces
// them to time-gridded statistics.
//
// Trajectories are grouped into fixed-size blocks by index. Each block is
// reduced sequentially and finished blocks are merged strictly in block
// order, so the floating-point association (and therefore every output
// bit) does not depend on the number of worker threads.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tcm/error.hpp"
#include "tcm/gauge.hpp"
#include "tcm/integrator.hpp"
#include "tcm/model.hpp"
#include "tcm/rng.hpp"

namespace tcm {

enum class Observable { RhoEE, RhoEG, A, PhotonProxy };

inline constexpr std::array<Observable, 4> kAllObservables{
    Observable::RhoEE, Observable::RhoEG, Observable::A, Observable::PhotonProxy};

inline std::string_view observable_name(Observable o) {
    switch (o) {
    case Observable::RhoEE: return "rho_ee";
    case Observable::RhoEG: return "rho_eg";
    case Observable::A: return "A";
    case Observable::PhotonProxy: return "photon_proxy";
    }
    return "?";
}

inline cplx observable_value(Observable o, const TrajectoryState& s, const ModelParams& params) {
    switch (o) {
    case Observable::RhoEE: return s.rho_ee;
    case Observable::RhoEG: return s.rho_eg;
    case Observable::A: return s.A;
    case Observable::PhotonProxy: return s.A_dag * s.A * static_cast<double>(params.n_atoms);
    }
    return {};
}

inline constexpr double kThresholdAliveFraction = 0.995;

struct EnsembleConfig {
    std::int64_t n_traj = 100000;
    std::uint64_t seed = 0;
    StepConfig step{};
    GaugeConfig gauge{};
    double tau_max = 25.0;
    std::vector<Observable> observables{kAllObservables.begin(), kAllObservables.end()};
    /// Statistics are recorded every `record_every` integration steps.
    int record_every = 1;
    /// 0 means: TCM_THREADS env var, else hardware concurrency.
    int threads = 0;
    /// Trajectories per reduction block. Changing it changes rounding.
    int block_size = 64;

    void validate() const {
        if (n_traj < 1) throw InvalidArgument("n_traj must be >= 1");
        if (record_every < 1) throw InvalidArgument("record_every must be >= 1");
        if (block_size < 1) throw InvalidArgument("block_size must be >= 1");
        if (observables.empty()) throw InvalidArgument("at least one observable is required");
        step.validate();
        gauge.validate();
        grid_steps(tau_max, step.dtau);
    }
};

struct ObservableSeries {
    Observable observable{};
    std::vector<cplx> mean;
    std::vector<double> stderr_re;
    std::vector<double> stderr_im;
};

struct EnsembleResult {
    std::vector<double> tau;
    std::vector<std::int64_t> alive_count;
    std::vector<double> alive_fraction;
    std::int64_t n_traj = 0;
    /// First grid time with alive_fraction < 0.995, +inf if never.
    double threshold_time = std::numeric_limits<double>::infinity();
    /// Masked means over surviving trajectories, without the gauge weight.
    std::vector<ObservableSeries> masked;
    /// Masked means weighted by exp(C0); filled only when the gauge is on.
    std::vector<ObservableSeries> weighted;

    const ObservableSeries* find(Observable o, bool use_weighted = false) const {
        const auto& v = use_weighted ? weighted : masked;
        for (const auto& s : v)
            if (s.observable == o) return &s;
        return nullptr;
    }
};

inline std::vector<double> divergence_fraction_series(const EnsembleResult& result) {
    std::vector<double> out(result.alive_fraction.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - result.alive_fraction[i];
    return out;
}

inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("TCM_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

namespace detail {

// Plain power sums for the unweighted masked mean.
struct MomentSums {
    double s1_re = 0.0, s1_im = 0.0, s2_re = 0.0, s2_im = 0.0;

    void add(cplx v) {
        s1_re += v.real();
        s1_im += v.imag();
        s2_re += v.real() * v.real();
        s2_im += v.imag() * v.imag();
    }
    void merge(const MomentSums& o) {
        s1_re += o.s1_re;
        s1_im += o.s1_im;
        s2_re += o.s2_re;
        s2_im += o.s2_im;
    }
};

struct GridPartial {
    std::int64_t n_points = 0;
    std::size_t n_obs = 0;
    bool weighted = false;
    std::vector<std::int64_t> alive;
    std::vector<MomentSums> moments;         // n_points * n_obs
    std::vector<WeightedAccumulator> wsums;  // n_points * n_obs when weighted

    GridPartial(std::int64_t points, std::size_t obs, bool with_weights)
        : n_points(points), n_obs(obs), weighted(with_weights),
          alive(static_cast<std::size_t>(points), 0),
          moments(static_cast<std::size_t>(points) * obs),
          wsums(with_weights ? static_cast<std::size_t>(points) * obs : 0) {}

    void record(std::int64_t point, const TrajectoryState& s, const ModelParams& params,
                const std::vector<Observable>& obs) {
        const auto p = static_cast<std::size_t>(point);
        ++alive[p];
        for (std::size_t k = 0; k < n_obs; ++k) {
            const cplx v = observable_value(obs[k], s, params);
            moments[p * n_obs + k].add(v);
            if (weighted) wsums[p * n_obs + k].add(v, s.C0);
        }
    }

    void merge(const GridPartial& o) {
        for (std::size_t p = 0; p < alive.size(); ++p) alive[p] += o.alive[p];
        for (std::size_t i = 0; i < moments.size(); ++i) moments[i].merge(o.moments[i]);
        for (std::size_t i = 0; i < wsums.size(); ++i) wsums[i].merge(o.wsums[i]);
    }
};

inline void run_trajectory(std::int64_t index, const ModelParams& params,
                           const EnsembleConfig& cfg, std::int64_t n_steps,
                           const TrajectoryState& init, GridPartial& out) {
    RngStream stream(cfg.seed, static_cast<std::uint64_t>(index));
    TrajectoryState s = init;
    out.record(0, s, params, cfg.observables);
    for (std::int64_t i = 1; i <= n_steps; ++i) {
        s = step(s, cfg.step, params, cfg.gauge, stream);
        if (s.diverged) return; // masked from here on
        if (i % cfg.record_every == 0) out.record(i / cfg.record_every, s, params, cfg.observables);
    }
}

inline ObservableSeries finalize_moments(Observable o, const GridPartial& g, std::size_t k) {
    ObservableSeries series;
    series.observable = o;
    const auto np = static_cast<std::size_t>(g.n_points);
    series.mean.resize(np);
    series.stderr_re.resize(np);
    series.stderr_im.resize(np);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t p = 0; p < np; ++p) {
        const auto& m = g.moments[p * g.n_obs + k];
        const auto n = static_cast<double>(g.alive[p]);
        if (g.alive[p] == 0) {
            series.mean[p] = {nan, nan};
            series.stderr_re[p] = series.stderr_im[p] = nan;
            continue;
        }
        series.mean[p] = {m.s1_re / n, m.s1_im / n};
        if (g.alive[p] < 2) {
            series.stderr_re[p] = series.stderr_im[p] = nan;
            continue;
        }
        const double var_re = std::max(0.0, (m.s2_re - m.s1_re * m.s1_re / n) / (n - 1.0));
        const double var_im = std::max(0.0, (m.s2_im - m.s1_im * m.s1_im / n) / (n - 1.0));
        series.stderr_re[p] = std::sqrt(var_re / n);
        series.stderr_im[p] = std::sqrt(var_im / n);
    }
    return series;
}

inline ObservableSeries finalize_weighted(Observable o, const GridPartial& g, std::size_t k) {
    ObservableSeries series;
    series.observable = o;
    const auto np = static_cast<std::size_t>(g.n_points);
    series.mean.resize(np);
    series.stderr_re.resize(np);
    series.stderr_im.resize(np);
    for (std::size_t p = 0; p < np; ++p) {
        const WeightedMean r = g.wsums[p * g.n_obs + k].result();
        series.mean[p] = r.mean;
        series.stderr_re[p] = r.stderr_re;
        series.stderr_im[p] = r.stderr_im;
    }
    return series;
}

} // namespace detail

/// Called after each merged block with the number of trajectories reduced
/// so far and a snapshot of the statistics over them.
using ProgressCallback = std::function<void(std::int64_t done, const EnsembleResult& partial)>;

namespace detail {

inline EnsembleResult finalize(const GridPartial& g, const EnsembleConfig& cfg,
                               std::int64_t n_done) {
    EnsembleResult r;
    r.n_traj = n_done;
    const auto np = static_cast<std::size_t>(g.n_points);
    r.tau.resize(np);
    r.alive_count = g.alive;
    r.alive_fraction.resize(np);
    const double record_dt = cfg.step.dtau * cfg.record_every;
    for (std::size_t p = 0; p < np; ++p) {
        r.tau[p] = static_cast<double>(p) * record_dt;
        r.alive_fraction[p] = static_cast<double>(g.alive[p]) / static_cast<double>(n_done);
    }
    for (std::size_t p = 0; p < np; ++p) {
        if (r.alive_fraction[p] < kThresholdAliveFraction) {
            r.threshold_time = r.tau[p];
            break;
        }
    }
    for (std::size_t k = 0; k < cfg.observables.size(); ++k) {
        r.masked.push_back(finalize_moments(cfg.observables[k], g, k));
        if (g.weighted) r.weighted.push_back(finalize_weighted(cfg.observables[k], g, k));
    }
    return r;
}

} // namespace detail

inline EnsembleResult run_ensemble(const ModelParams& params, const EnsembleConfig& cfg,
                                   const ProgressCallback& progress = {},
                                   std::int64_t progress_every_blocks = 0) {
    params.validate();
    cfg.validate();
    const std::int64_t n_steps = grid_steps(cfg.tau_max, cfg.step.dtau);
    const std::int64_t n_points = n_steps / cfg.record_every + 1;
    const std::size_t n_obs = cfg.observables.size();
    const bool weighted = cfg.gauge.enabled;
    const TrajectoryState init = initial_state(params);

    const std::int64_t block = cfg.block_size;
    const std::int64_t n_blocks = (cfg.n_traj + block - 1) / block;
    const int n_threads =
        static_cast<int>(std::min<std::int64_t>(resolve_thread_count(cfg.threads), n_blocks));

    detail::GridPartial total(n_points, n_obs, weighted);
    std::int64_t merged_blocks = 0;
    std::map<std::int64_t, detail::GridPartial> pending;
    std::mutex mu;
    std::atomic<std::int64_t> next_block{0};

    auto merge_ready = [&]() {
        // Caller holds mu.
        for (auto it = pending.find(merged_blocks); it != pending.end();
             it = pending.find(merged_blocks)) {
            total.merge(it->second);
            pending.erase(it);
            ++merged_blocks;
            if (progress && progress_every_blocks > 0 &&
                (merged_blocks % progress_every_blocks == 0) && merged_blocks < n_blocks) {
                progress(std::min(merged_blocks * block, cfg.n_traj),
                         detail::finalize(total, cfg, std::min(merged_blocks * block, cfg.n_traj)));
            }
        }
    };

    auto worker = [&]() {
        for (;;) {
            const std::int64_t b = next_block.fetch_add(1);
            if (b >= n_blocks) return;
            detail::GridPartial part(n_points, n_obs, weighted);
            const std::int64_t lo = b * block;
            const std::int64_t hi = std::min(cfg.n_traj, lo + block);
            for (std::int64_t t = lo; t < hi; ++t)
                detail::run_trajectory(t, params, cfg, n_steps, init, part);
            std::lock_guard<std::mutex> lock(mu);
            pending.emplace(b, std::move(part));
            merge_ready();
        }
    };

    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return detail::finalize(total, cfg, cfg.n_traj);
}

} // namespace tcm
