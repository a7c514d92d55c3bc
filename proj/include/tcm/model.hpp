#pragma once

// Tavis-Cummings model in the resonant rotating frame.
//
// Variables are the permutation-symmetric single-atom density-matrix
// elements (rho_ee, rho_eg, rho_ge; rho_gg = 1 - rho_ee is implicit) and
// the field amplitudes normalized per atom, A = alpha/sqrt(N) and
// A_dag = alpha_dag/sqrt(N). Time is dimensionless, tau = f t, and the
// decay rate enters only through gamma/f.

#include <cmath>
#include <complex>
#include <optional>

#include "tcm/error.hpp"

namespace tcm {

using cplx = std::complex<double>;

inline constexpr cplx I{0.0, 1.0};

enum class AtomsInitial { AllGround, AllExcited };

struct ModelParams {
    int n_atoms = 1;
    double gamma_over_f = 0.0;
    double n_ph = 0.0;
    AtomsInitial atoms_initial = AtomsInitial::AllGround;
    double field_phase = 0.0;

    void validate() const {
        if (n_atoms < 1) throw InvalidArgument("n_atoms must be >= 1");
        if (!(gamma_over_f >= 0.0) || !std::isfinite(gamma_over_f))
            throw InvalidArgument("gamma_over_f must be finite and >= 0");
        if (!(n_ph >= 0.0) || !std::isfinite(n_ph))
            throw InvalidArgument("n_ph must be finite and >= 0");
        if (!std::isfinite(field_phase)) throw InvalidArgument("field_phase must be finite");
    }

    double sqrt_n() const { return std::sqrt(static_cast<double>(n_atoms)); }
};

/// One point of the doubled (non-Hermitian) phase space. A_dag is an
/// independent variable, not the conjugate of A; the same holds for
/// rho_ge versus rho_eg.
struct TrajectoryState {
    double tau = 0.0;
    cplx A{};
    cplx A_dag{};
    cplx rho_ee{};
    cplx rho_eg{};
    cplx rho_ge{};
    cplx C0{}; ///< log of the drift-gauge weight
    bool diverged = false;

    /// Largest squared modulus among the physical components (C0 excluded).
    double max_norm() const {
        double m = std::norm(A);
        m = std::fmax(m, std::norm(A_dag));
        m = std::fmax(m, std::norm(rho_ee));
        m = std::fmax(m, std::norm(rho_eg));
        return std::fmax(m, std::norm(rho_ge));
    }

    double max_magnitude() const { return std::sqrt(max_norm()); }

    bool finite() const {
        auto ok = [](cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); };
        return ok(A) && ok(A_dag) && ok(rho_ee) && ok(rho_eg) && ok(rho_ge) && ok(C0);
    }

    /// Population inversion w = 2 rho_ee - 1.
    cplx inversion() const { return 2.0 * rho_ee - 1.0; }
};

/// Per-unit-tau rates; also reused for stochastic increments (then the
/// entries are increments over one step rather than rates).
struct DriftVector {
    cplx dA{};
    cplx dA_dag{};
    cplx drho_ee{};
    cplx drho_eg{};
    cplx drho_ge{};
    cplx dC0{};

    DriftVector& operator+=(const DriftVector& o) {
        dA += o.dA;
        dA_dag += o.dA_dag;
        drho_ee += o.drho_ee;
        drho_eg += o.drho_eg;
        drho_ge += o.drho_ge;
        dC0 += o.dC0;
        return *this;
    }

    bool finite() const {
        auto ok = [](cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); };
        return ok(dA) && ok(dA_dag) && ok(drho_ee) && ok(drho_eg) && ok(drho_ge) && ok(dC0);
    }
};

inline TrajectoryState initial_state(const ModelParams& params) {
    params.validate();
    TrajectoryState s;
    const double amp = std::sqrt(params.n_ph / params.n_atoms);
    s.A = std::polar(amp, params.field_phase);
    s.A_dag = std::conj(s.A);
    s.rho_ee = params.atoms_initial == AtomsInitial::AllExcited ? 1.0 : 0.0;
    return s;
}

/// Deterministic part of the rotating-frame SDEs. Returns nullopt when the
/// state (or the resulting rate) is not finite, which callers treat as
/// divergence.
inline std::optional<DriftVector> drift(const TrajectoryState& s, const ModelParams& params) {
    if (!s.finite()) return std::nullopt;
    const double g = params.gamma_over_f;
    const cplx w = 2.0 * s.rho_ee - 1.0;
    DriftVector d;
    d.dA = -I * s.rho_eg;
    d.dA_dag = I * s.rho_ge;
    d.drho_ee = -g * s.rho_ee + I * (s.rho_eg * s.A_dag - s.rho_ge * s.A);
    d.drho_eg = -0.5 * g * s.rho_eg + I * w * s.A;
    d.drho_ge = -0.5 * g * s.rho_ge - I * w * s.A_dag;
    if (!d.finite()) return std::nullopt;
    return d;
}

/// Energy per atom, (2 rho_ee - 1)/2 + A_dag A. Conserved by the
/// noise-free closed dynamics.
inline cplx total_energy(const TrajectoryState& s, const ModelParams& /*params*/) {
    return 0.5 * (2.0 * s.rho_ee - 1.0) + s.A_dag * s.A;
}

/// (2 rho_ee - 1)^2 + 4 rho_eg rho_ge.
inline cplx bloch_length(const TrajectoryState& s) {
    const cplx w = 2.0 * s.rho_ee - 1.0;
    return w * w + 4.0 * s.rho_eg * s.rho_ge;
}

} // namespace tcm
