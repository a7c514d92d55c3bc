#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tcm/error.hpp"
#include "tcm/gauge.hpp"
#include "tcm/model.hpp"
#include "tcm/noise.hpp"
#include "tcm/rng.hpp"

namespace tcm {

enum class StepScheme { EulerMaruyama, SRK2 };

struct StepConfig {
    double dtau = 1e-3;
    StepScheme scheme = StepScheme::SRK2;
    NoiseScheme noise_scheme = NoiseScheme::B;
    double runaway_bound = 1e6;
    /// Drop all stochastic terms (Maxwell-Bloch limit). The stream is not
    /// advanced in this mode.
    bool noise_free = false;

    void validate() const {
        if (!(dtau > 0.0) || !std::isfinite(dtau)) throw InvalidArgument("dtau must be > 0");
        if (!(runaway_bound > 1.0)) throw InvalidArgument("runaway_bound must be > 1");
    }
};

namespace detail {

inline std::optional<DriftVector> total_drift(const TrajectoryState& s, const ModelParams& params,
                                              const GaugeConfig& gauge) {
    auto d = drift(s, params);
    if (!d) return std::nullopt;
    if (gauge.enabled) {
        *d += gauged_drift_correction(s, gauge, params);
        if (!d->finite()) return std::nullopt;
    }
    return d;
}

inline TrajectoryState apply(const TrajectoryState& s, const DriftVector& rate, double dt,
                             const DriftVector& noise) {
    TrajectoryState out = s;
    out.A = s.A + rate.dA * dt + noise.dA;
    out.A_dag = s.A_dag + rate.dA_dag * dt + noise.dA_dag;
    out.rho_ee = s.rho_ee + rate.drho_ee * dt + noise.drho_ee;
    out.rho_eg = s.rho_eg + rate.drho_eg * dt + noise.drho_eg;
    out.rho_ge = s.rho_ge + rate.drho_ge * dt + noise.drho_ge;
    out.C0 = s.C0 + rate.dC0 * dt + noise.dC0;
    return out;
}

} // namespace detail

/// Advances one step using a pre-drawn increment. Noise (and the C0
/// increment) is evaluated once at the pre-step state and reused by both
/// SRK2 stages. A state that leaves the finite region or exceeds the
/// runaway bound is returned frozen at its pre-step values with
/// diverged = true; tau advances regardless.
inline TrajectoryState step_with_increment(const TrajectoryState& s, const StepConfig& cfg,
                                           const ModelParams& params, const GaugeConfig& gauge,
                                           const NoiseIncrement& inc) {
    if (s.diverged) throw ContractViolation("step: trajectory already diverged");
    const double dt = cfg.dtau;

    TrajectoryState frozen = s;
    frozen.tau = s.tau + dt;
    frozen.diverged = true;

    const auto d0 = detail::total_drift(s, params, gauge);
    if (!d0) return frozen;

    DriftVector noise;
    if (!cfg.noise_free) {
        noise = stochastic_terms(cfg.noise_scheme, s, inc, params);
        if (gauge.enabled) noise.dC0 = gauge_weight_increment(s, gauge, params, inc);
    }

    TrajectoryState next;
    if (cfg.scheme == StepScheme::EulerMaruyama) {
        next = detail::apply(s, *d0, dt, noise);
    } else {
        const TrajectoryState pred = detail::apply(s, *d0, dt, noise);
        const auto d1 = detail::total_drift(pred, params, gauge);
        if (!d1) return frozen;
        DriftVector avg;
        avg.dA = 0.5 * (d0->dA + d1->dA);
        avg.dA_dag = 0.5 * (d0->dA_dag + d1->dA_dag);
        avg.drho_ee = 0.5 * (d0->drho_ee + d1->drho_ee);
        avg.drho_eg = 0.5 * (d0->drho_eg + d1->drho_eg);
        avg.drho_ge = 0.5 * (d0->drho_ge + d1->drho_ge);
        avg.dC0 = 0.5 * (d0->dC0 + d1->dC0);
        next = detail::apply(s, avg, dt, noise);
    }
    next.tau = s.tau + dt;
    if (!next.finite() || next.max_norm() > cfg.runaway_bound * cfg.runaway_bound) return frozen;
    return next;
}

inline TrajectoryState step(const TrajectoryState& s, const StepConfig& cfg,
                            const ModelParams& params, const GaugeConfig& gauge,
                            RngStream& stream) {
    if (s.diverged) throw ContractViolation("step: trajectory already diverged");
    const NoiseIncrement inc = cfg.noise_free ? NoiseIncrement{} : sample_increment(stream, cfg.dtau);
    return step_with_increment(s, cfg, params, gauge, inc);
}

inline std::int64_t grid_steps(double tau_max, double dtau) {
    if (!(tau_max >= 0.0) || !std::isfinite(tau_max))
        throw InvalidArgument("tau_max must be finite and >= 0");
    return static_cast<std::int64_t>(std::llround(tau_max / dtau));
}

/// States at tau = 0, dtau, ..., tau_max. Entries after divergence repeat
/// the frozen state (with its grid tau).
inline std::vector<TrajectoryState> propagate(const TrajectoryState& init, double tau_max,
                                              const StepConfig& cfg, const ModelParams& params,
                                              const GaugeConfig& gauge, RngStream& stream) {
    cfg.validate();
    const std::int64_t n = grid_steps(tau_max, cfg.dtau);
    std::vector<TrajectoryState> series;
    series.reserve(static_cast<std::size_t>(n + 1));
    series.push_back(init);
    TrajectoryState s = init;
    for (std::int64_t i = 1; i <= n; ++i) {
        if (s.diverged) {
            s.tau = init.tau + static_cast<double>(i) * cfg.dtau;
        } else {
            s = step(s, cfg, params, gauge, stream);
            s.tau = init.tau + static_cast<double>(i) * cfg.dtau;
        }
        series.push_back(s);
    }
    return series;
}

} // namespace tcm
