#pragma once

// Exact reference solutions.
//
// Closed model: the Hamiltonian conserves the total excitation number
// M = (excited atoms) + (photons), and the initial product states used
// here live in the symmetric Dicke sector j = N/2. Each block M is a
// real symmetric tridiagonal matrix of size <= N+1 over |m excited, M-m
// photons>, diagonalized once and evolved as phases.
//
// Open model: Lindblad evolution with independent decay of every atom,
// on the full 2^N atomic space times a truncated Fock space. Coherence
// between different excitation numbers never feeds back into the
// excitation-diagonal blocks rho_{M,M}, so only those are propagated; they
// carry the whole trace and every excitation-conserving observable.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcm/error.hpp"
#include "tcm/model.hpp"

namespace tcm::exact {

inline constexpr int kMaxOpenAtoms = 6;
inline constexpr double kCoherentTailTolerance = 1e-12;
inline constexpr int kMaxCutoff = 200000;

/// Default photon cutoff for a coherent state of mean n_ph.
inline int coherent_cutoff(double n_ph) {
    return static_cast<int>(std::ceil(n_ph + 12.0 * std::sqrt(n_ph + 1.0) + 20.0));
}

/// Probability that a Poisson(n_ph) variable exceeds `cutoff`.
inline double poisson_tail(double n_ph, int cutoff) {
    if (n_ph == 0.0) return 0.0;
    double tail = 0.0;
    for (int n = cutoff + 1;; ++n) {
        const double p = std::exp(-n_ph + n * std::log(n_ph) - std::lgamma(n + 1.0));
        tail += p;
        if (n > n_ph && p < 1e-18 * (tail > 0 ? tail : 1.0)) break;
        if (n > cutoff + 100000) break;
    }
    return tail;
}

/// Coherent-state amplitudes c_0..c_cutoff (unnormalized truncation).
inline std::vector<cplx> coherent_amplitudes(double n_ph, double phase, int cutoff) {
    std::vector<cplx> c(static_cast<std::size_t>(cutoff) + 1, cplx{});
    if (n_ph == 0.0) {
        c[0] = 1.0;
        return c;
    }
    const double log_abs = 0.5 * std::log(n_ph);
    for (int n = 0; n <= cutoff; ++n) {
        const double mag = std::exp(-0.5 * n_ph + n * log_abs - 0.5 * std::lgamma(n + 1.0));
        c[static_cast<std::size_t>(n)] = std::polar(mag, n * phase);
    }
    return c;
}

/// Resolves the cutoff used for the initial field: the default formula, or
/// an explicit override that must still meet the tail tolerance.
inline int resolve_cutoff(double n_ph, std::optional<int> override_cutoff) {
    const int required = coherent_cutoff(n_ph);
    if (required > kMaxCutoff)
        throw CutoffOverflow("photon cutoff " + std::to_string(required) +
                                 " exceeds the supported maximum " + std::to_string(kMaxCutoff),
                             required);
    if (!override_cutoff) return required;
    const int c = *override_cutoff;
    if (c < 0 || poisson_tail(n_ph, c) >= kCoherentTailTolerance) {
        int need = c < 0 ? 0 : c;
        while (need <= kMaxCutoff && poisson_tail(n_ph, need) >= kCoherentTailTolerance) ++need;
        throw CutoffOverflow("photon cutoff " + std::to_string(c) +
                                 " truncates the coherent state; need at least " +
                                 std::to_string(need),
                             need);
    }
    return c;
}

inline void check_grid(std::span<const double> tau_grid) {
    double prev = 0.0;
    for (double t : tau_grid) {
        if (!(t >= prev) || !std::isfinite(t))
            throw InvalidArgument("tau grid must be finite, non-negative and non-decreasing");
        prev = t;
    }
}

struct ClosedBlock {
    int excitations = 0; ///< M
    int m_min = 0;       ///< atomic excitations of basis index 0
    Eigen::MatrixXd hamiltonian;
};

/// Symmetric-sector block for total excitation M, basis |m, M-m>,
/// m = m_min..min(N, M). Energies in units of f, rotating frame.
inline ClosedBlock closed_block(int n_atoms, int excitations) {
    ClosedBlock b;
    b.excitations = excitations;
    b.m_min = 0;
    const int m_max = std::min(n_atoms, excitations);
    const int dim = m_max - b.m_min + 1;
    b.hamiltonian = Eigen::MatrixXd::Zero(dim, dim);
    const double g = 1.0 / std::sqrt(static_cast<double>(n_atoms));
    for (int m = 0; m < m_max; ++m) {
        const int photons = excitations - m;
        // <m+1, n-1| J+ a |m, n> with the Dicke ladder factor for j = N/2.
        const double el = g * std::sqrt(static_cast<double>(photons)) *
                          std::sqrt(static_cast<double>(n_atoms - m) * (m + 1));
        b.hamiltonian(m + 1, m) = el;
        b.hamiltonian(m, m + 1) = el;
    }
    return b;
}

struct ClosedOptions {
    std::optional<int> cutoff;
};

struct ExactSeries {
    std::vector<double> tau;
    std::vector<double> p_excited; ///< excited-state probability per atom
    std::vector<double> photons;   ///< mean photon number
    double max_trace_deviation = 0.0;
    double max_hermiticity_deviation = 0.0;
};

inline ExactSeries closed_evolve(const ModelParams& params, std::span<const double> tau_grid,
                                 const ClosedOptions& opts = {}) {
    params.validate();
    check_grid(tau_grid);
    const int cutoff = resolve_cutoff(params.n_ph, opts.cutoff);
    const int n = params.n_atoms;
    const bool excited = params.atoms_initial == AtomsInitial::AllExcited;
    const auto amps = coherent_amplitudes(params.n_ph, params.field_phase, cutoff);

    ExactSeries out;
    out.tau.assign(tau_grid.begin(), tau_grid.end());
    out.p_excited.assign(tau_grid.size(), 0.0);
    out.photons.assign(tau_grid.size(), 0.0);

    for (int k = 0; k <= cutoff; ++k) {
        const double weight = std::norm(amps[static_cast<std::size_t>(k)]);
        if (weight == 0.0) continue;
        const int m0 = excited ? n : 0;
        const int M = k + m0;
        const ClosedBlock block = closed_block(n, M);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block.hamiltonian);
        const Eigen::VectorXd& lambda = eig.eigenvalues();
        const Eigen::MatrixXd& V = eig.eigenvectors();
        const auto dim = V.rows();
        // Overlap of the initial basis vector with each eigenvector.
        const Eigen::VectorXd overlap = V.row(m0 - block.m_min).transpose();
        Eigen::VectorXcd coeff(dim);
        for (std::size_t t = 0; t < tau_grid.size(); ++t) {
            const double tau = tau_grid[t];
            for (Eigen::Index j = 0; j < dim; ++j)
                coeff(j) = overlap(j) * std::polar(1.0, -lambda(j) * tau);
            const Eigen::VectorXcd psi = V * coeff;
            double pe = 0.0, ph = 0.0;
            for (Eigen::Index i = 0; i < dim; ++i) {
                const double p = std::norm(psi(i));
                const int m = block.m_min + static_cast<int>(i);
                pe += p * m;
                ph += p * (M - m);
            }
            out.p_excited[t] += weight * pe / n;
            out.photons[t] += weight * ph;
        }
    }
    return out;
}

/// Excitation-diagonal blocks of the open-system density matrix.
struct OpenBasisBlock {
    int excitations = 0;
    std::vector<std::uint32_t> atoms;  ///< bit mu set = atom mu excited
    std::vector<int> photons;
};

struct OpenState {
    int n_atoms = 0;
    std::vector<OpenBasisBlock> basis;
    std::vector<Eigen::MatrixXcd> rho;

    double trace() const {
        double t = 0.0;
        for (const auto& r : rho) t += r.trace().real();
        return t;
    }
    double p_excited() const {
        double s = 0.0;
        for (std::size_t b = 0; b < rho.size(); ++b)
            for (std::size_t i = 0; i < basis[b].atoms.size(); ++i)
                s += rho[b](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real() *
                     std::popcount(basis[b].atoms[i]);
        return s / n_atoms;
    }
    double photons() const {
        double s = 0.0;
        for (std::size_t b = 0; b < rho.size(); ++b)
            for (std::size_t i = 0; i < basis[b].photons.size(); ++i)
                s += rho[b](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real() *
                     basis[b].photons[i];
        return s;
    }
    double hermiticity_deviation() const {
        double d = 0.0;
        for (const auto& r : rho) d = std::max(d, (r - r.adjoint()).cwiseAbs().maxCoeff());
        return d;
    }
    double min_eigenvalue() const {
        double m = 0.0;
        for (const auto& r : rho) {
            const Eigen::MatrixXcd h = 0.5 * (r + r.adjoint());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h, Eigen::EigenvaluesOnly);
            m = std::min(m, eig.eigenvalues().minCoeff());
        }
        return m;
    }
};

struct OpenOptions {
    std::optional<int> cutoff;
    /// Largest RK4 substep in tau.
    double max_dt = 0.01;
    /// Scales the atom-field coupling; 0 decouples atoms from the field.
    double coupling_scale = 1.0;
};

namespace detail {

struct OpenGenerator {
    int n_atoms = 0;
    double gamma = 0.0;
    std::vector<Eigen::MatrixXcd> h_eff;  ///< H - (i gamma/2) sum sigma_eg sigma_ge, per block
    /// jumps[b][mu]: maps block b+1 into block b by lowering atom mu.
    std::vector<std::vector<Eigen::MatrixXd>> jumps;

    void apply(const std::vector<Eigen::MatrixXcd>& rho, std::vector<Eigen::MatrixXcd>& out) const {
        const std::size_t nb = rho.size();
        for (std::size_t b = 0; b < nb; ++b) {
            const Eigen::MatrixXcd hr = h_eff[b] * rho[b];
            out[b] = cplx(0.0, -1.0) * hr + cplx(0.0, 1.0) * hr.adjoint();
            if (gamma != 0.0 && b + 1 < nb) {
                for (const auto& J : jumps[b]) {
                    out[b].noalias() += gamma * (J * rho[b + 1] * J.transpose());
                }
            }
        }
    }
};

} // namespace detail

inline ExactSeries open_evolve(const ModelParams& params, std::span<const double> tau_grid,
                               const OpenOptions& opts = {}, OpenState* final_state = nullptr) {
    params.validate();
    check_grid(tau_grid);
    if (params.n_atoms > kMaxOpenAtoms)
        throw UnsupportedSize("open_evolve supports at most " + std::to_string(kMaxOpenAtoms) +
                              " atoms, got " + std::to_string(params.n_atoms));
    if (!(opts.max_dt > 0.0)) throw InvalidArgument("open_evolve: max_dt must be > 0");

    const int n = params.n_atoms;
    const int cutoff = resolve_cutoff(params.n_ph, opts.cutoff);
    const bool excited = params.atoms_initial == AtomsInitial::AllExcited;
    const int m_top = cutoff + (excited ? n : 0);
    const std::uint32_t n_configs = 1u << n;
    const double g = opts.coupling_scale / std::sqrt(static_cast<double>(n));
    const double gamma = params.gamma_over_f;

    OpenState state;
    state.n_atoms = n;
    state.basis.resize(static_cast<std::size_t>(m_top) + 1);
    std::vector<std::vector<int>> index_of(static_cast<std::size_t>(m_top) + 1,
                                           std::vector<int>(n_configs, -1));
    for (int M = 0; M <= m_top; ++M) {
        auto& blk = state.basis[static_cast<std::size_t>(M)];
        blk.excitations = M;
        for (std::uint32_t s = 0; s < n_configs; ++s) {
            const int photons = M - std::popcount(s);
            if (photons < 0) continue;
            index_of[static_cast<std::size_t>(M)][s] = static_cast<int>(blk.atoms.size());
            blk.atoms.push_back(s);
            blk.photons.push_back(photons);
        }
    }

    detail::OpenGenerator gen;
    gen.n_atoms = n;
    gen.gamma = gamma;
    gen.h_eff.resize(state.basis.size());
    gen.jumps.resize(state.basis.size());
    for (int M = 0; M <= m_top; ++M) {
        const auto& blk = state.basis[static_cast<std::size_t>(M)];
        const auto dim = static_cast<Eigen::Index>(blk.atoms.size());
        Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            const std::uint32_t s = blk.atoms[static_cast<std::size_t>(i)];
            const int photons = blk.photons[static_cast<std::size_t>(i)];
            h(i, i) = cplx(0.0, -0.5 * gamma * std::popcount(s));
            if (photons == 0) continue;
            for (int mu = 0; mu < n; ++mu) {
                if (s & (1u << mu)) continue;
                const int j = index_of[static_cast<std::size_t>(M)][s | (1u << mu)];
                const double el = g * std::sqrt(static_cast<double>(photons));
                h(j, i) += el;
                h(i, j) += el;
            }
        }
        gen.h_eff[static_cast<std::size_t>(M)] = std::move(h);
        if (M < m_top) {
            const auto& up = state.basis[static_cast<std::size_t>(M) + 1];
            for (int mu = 0; mu < n; ++mu) {
                Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(up.atoms.size()));
                for (std::size_t u = 0; u < up.atoms.size(); ++u) {
                    const std::uint32_t s = up.atoms[u];
                    if (!(s & (1u << mu))) continue;
                    const int i = index_of[static_cast<std::size_t>(M)][s & ~(1u << mu)];
                    J(i, static_cast<Eigen::Index>(u)) = 1.0;
                }
                gen.jumps[static_cast<std::size_t>(M)].push_back(std::move(J));
            }
        }
    }

    state.rho.resize(state.basis.size());
    for (std::size_t b = 0; b < state.basis.size(); ++b) {
        const auto dim = static_cast<Eigen::Index>(state.basis[b].atoms.size());
        state.rho[b] = Eigen::MatrixXcd::Zero(dim, dim);
    }
    const std::uint32_t s0 = excited ? n_configs - 1 : 0u;
    const auto amps = coherent_amplitudes(params.n_ph, params.field_phase, cutoff);
    for (int k = 0; k <= cutoff; ++k) {
        const int M = k + std::popcount(s0);
        const int i = index_of[static_cast<std::size_t>(M)][s0];
        state.rho[static_cast<std::size_t>(M)](i, i) = std::norm(amps[static_cast<std::size_t>(k)]);
    }

    ExactSeries out;
    out.tau.assign(tau_grid.begin(), tau_grid.end());
    out.p_excited.reserve(tau_grid.size());
    out.photons.reserve(tau_grid.size());

    const std::size_t nb = state.rho.size();
    std::vector<Eigen::MatrixXcd> k1(nb), k2(nb), k3(nb), k4(nb), tmp(nb);
    auto axpy = [&](const std::vector<Eigen::MatrixXcd>& x, double a,
                    const std::vector<Eigen::MatrixXcd>& y, std::vector<Eigen::MatrixXcd>& r) {
        for (std::size_t b = 0; b < nb; ++b) r[b] = x[b] + a * y[b];
    };
    auto rk4 = [&](double dt) {
        gen.apply(state.rho, k1);
        axpy(state.rho, 0.5 * dt, k1, tmp);
        gen.apply(tmp, k2);
        axpy(state.rho, 0.5 * dt, k2, tmp);
        gen.apply(tmp, k3);
        axpy(state.rho, dt, k3, tmp);
        gen.apply(tmp, k4);
        for (std::size_t b = 0; b < nb; ++b)
            state.rho[b] += (dt / 6.0) * (k1[b] + 2.0 * k2[b] + 2.0 * k3[b] + k4[b]);
    };

    double t = 0.0;
    for (double target : tau_grid) {
        const double span = target - t;
        if (span > 0.0) {
            const auto sub = static_cast<int>(std::ceil(span / opts.max_dt - 1e-9));
            const double dt = span / sub;
            for (int s = 0; s < sub; ++s) rk4(dt);
            t = target;
        }
        out.p_excited.push_back(state.p_excited());
        out.photons.push_back(state.photons());
        out.max_trace_deviation = std::max(out.max_trace_deviation, std::abs(state.trace() - 1.0));
        out.max_hermiticity_deviation =
            std::max(out.max_hermiticity_deviation, state.hermiticity_deviation());
    }
    if (final_state) *final_state = std::move(state);
    return out;
}

} // namespace tcm::exact
