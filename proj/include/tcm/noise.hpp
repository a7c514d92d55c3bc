#pragma once

// Wiener increments and the two diffusion-gauge choices for the noise.
//
// Scheme B (default) uses the three noises F, F_dag and S with the field
// noise scaled by sqrt(rho_ee); scheme A uses only F and F_dag, additive
// on the field and quadratic in the coherences on the atoms. Both
// reproduce the same atom-field correlators, so ensemble means agree while
// individual trajectories differ.

#include <cmath>

#include "tcm/error.hpp"
#include "tcm/model.hpp"
#include "tcm/rng.hpp"

namespace tcm {

enum class NoiseScheme { A, B };

/// Integrated complex white noise over one step: E|dX|^2 = dtau,
/// E[dX dX] = 0, no cross-correlation between dF, dFdag and dS.
struct NoiseIncrement {
    cplx dF{};
    cplx dFdag{};
    cplx dS{};
};

inline NoiseIncrement sample_increment(RngStream& stream, double dtau) {
    if (!(dtau > 0.0)) throw InvalidArgument("sample_increment: dtau must be > 0");
    const double scale = std::sqrt(0.5 * dtau);
    const auto a = stream.normal_pair();
    const auto b = stream.normal_pair();
    const auto c = stream.normal_pair();
    return {scale * cplx(a[0], a[1]), scale * cplx(b[0], b[1]), scale * cplx(c[0], c[1])};
}

/// Principal square root; same branch cut as std::sqrt but without the
/// overflow-safe hypot, which is not needed below the runaway bound.
inline cplx principal_sqrt(cplx z) {
    const double x = z.real(), y = z.imag();
    if (x == 0.0 && y == 0.0) return {0.0, y};
    const double r = std::sqrt(x * x + y * y);
    if (x >= 0.0) {
        const double t = std::sqrt(0.5 * (r + x));
        return {t, y / (2.0 * t)};
    }
    const double t = std::sqrt(0.5 * (r - x));
    return {std::fabs(y) / (2.0 * t), std::copysign(t, y)};
}

inline DriftVector stochastic_terms_scheme_B(const TrajectoryState& s, const NoiseIncrement& inc,
                                             const ModelParams& params) {
    const double inv_sqrt_n = 1.0 / params.sqrt_n();
    const cplx sq = principal_sqrt(s.rho_ee);
    const cplx dF = inc.dF * inv_sqrt_n;
    const cplx dFdag = inc.dFdag * inv_sqrt_n;
    const cplx dS = inc.dS * inv_sqrt_n;
    const cplx dS_c = std::conj(dS);
    DriftVector d;
    d.dA = -I * (sq * dF + s.rho_eg * dS);
    d.dA_dag = I * (sq * dFdag + s.rho_ge * dS);
    d.drho_ee = -s.rho_ee * dS_c;
    d.drho_eg = sq * std::conj(dFdag) - s.rho_eg * dS_c;
    d.drho_ge = sq * std::conj(dF) - s.rho_ge * dS_c;
    return d;
}

inline DriftVector stochastic_terms_scheme_A(const TrajectoryState& s, const NoiseIncrement& inc,
                                             const ModelParams& params) {
    const double inv_sqrt_n = 1.0 / params.sqrt_n();
    const cplx dF = inc.dF * inv_sqrt_n;
    const cplx dFdag = inc.dFdag * inv_sqrt_n;
    const cplx dF_c = std::conj(dF);
    const cplx dFdag_c = std::conj(dFdag);
    // Common multiplicative factor rho_eg dF* + rho_ge dFdag* shared by all atomic variables.
    const cplx common = s.rho_eg * dF_c + s.rho_ge * dFdag_c;
    DriftVector d;
    d.dA = -I * dF;
    d.dA_dag = I * dFdag;
    d.drho_ee = -s.rho_ee * common;
    d.drho_eg = s.rho_ee * dFdag_c - s.rho_eg * common;
    d.drho_ge = s.rho_ee * dF_c - s.rho_ge * common;
    return d;
}

inline DriftVector stochastic_terms(NoiseScheme scheme, const TrajectoryState& s,
                                    const NoiseIncrement& inc, const ModelParams& params) {
    return scheme == NoiseScheme::A ? stochastic_terms_scheme_A(s, inc, params)
                                    : stochastic_terms_scheme_B(s, inc, params);
}

} // namespace tcm
