#pragma once

// Noise-free reduction of the closed dynamics to the population inversion
// w = 2 rho_ee - 1. With the energy E and unit Bloch length fixed, w moves
// like a particle in the cubic potential U(w) = 2E w^2 - w^3 + w, which is
// unbounded on the w -> +inf side; an orbit with enough energy to cross the
// local maximum reaches infinity in finite time with w ~ (tau_S - tau)^-2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tcm/error.hpp"
#include "tcm/gauge.hpp"

namespace tcm::semiclassics {

inline double effective_potential(double w, double E) { return 2.0 * E * w * w - w * w * w + w; }

/// dU/dw of the (gauge-modified) potential.
inline double potential_slope(double w, double E, double kappa) {
    const double k8 = kappa / 8.0;
    return 2.0 * (2.0 * E - k8) * w - 3.0 * (1.0 - k8) * w * w + (1.0 + k8) +
           (kappa / 8.0) * w * w * w;
}

inline double effective_hamiltonian(double w, double wdot, double E, double kappa = 0.0) {
    return 0.5 * wdot * wdot + modified_potential(w, E, kappa);
}

/// Local maximum of the ungauged potential: the larger root of U'(w) = 0.
inline double barrier_position(double E) {
    return (4.0 * E + std::sqrt(16.0 * E * E + 12.0)) / 6.0;
}

inline double barrier_height(double E) { return effective_potential(barrier_position(E), E); }

struct InversionSeries {
    std::vector<double> tau;
    std::vector<double> w;
    std::vector<double> wdot;
    bool blew_up = false;
    /// Time at which |w| first exceeded the bound, NaN when bounded.
    double blow_up_time = std::numeric_limits<double>::quiet_NaN();
};

struct InversionOptions {
    /// Output grid spacing.
    double dtau = 1e-3;
    /// Largest internal RK4 step; shrunk further as |w| grows.
    double max_substep = 1e-3;
    double bound = 1e6;
};

/// Integrates w'' = -dU/dw on the grid 0, dtau, ..., tau_max. The internal
/// step scales like |w|^(-1/2), the local time scale of the blow-up. Output
/// stops at the last grid point before |w| exceeds the bound.
inline InversionSeries inversion_ode_evolve(double w0, double wdot0, double E, double kappa,
                                            double tau_max, const InversionOptions& opt = {}) {
    if (!(opt.dtau > 0.0) || !(opt.max_substep > 0.0))
        throw InvalidArgument("inversion_ode_evolve: step sizes must be > 0");
    if (!(tau_max >= 0.0) || !std::isfinite(tau_max))
        throw InvalidArgument("inversion_ode_evolve: tau_max must be finite and >= 0");
    if (!(opt.bound > 0.0)) throw InvalidArgument("inversion_ode_evolve: bound must be > 0");

    auto acc = [&](double w) { return -potential_slope(w, E, kappa); };
    InversionSeries out;
    const auto n = static_cast<std::int64_t>(std::llround(tau_max / opt.dtau));
    double w = w0, v = wdot0, t = 0.0;
    out.tau.push_back(0.0);
    out.w.push_back(w);
    out.wdot.push_back(v);
    for (std::int64_t i = 1; i <= n; ++i) {
        const double target = static_cast<double>(i) * opt.dtau;
        while (t < target) {
            double h = std::min(opt.max_substep, 0.05 / (1.0 + std::sqrt(std::abs(w))));
            h = std::min(h, target - t);
            const double k1w = v, k1v = acc(w);
            const double k2w = v + 0.5 * h * k1v, k2v = acc(w + 0.5 * h * k1w);
            const double k3w = v + 0.5 * h * k2v, k3v = acc(w + 0.5 * h * k2w);
            const double k4w = v + h * k3v, k4v = acc(w + h * k3w);
            w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            t = (target - t - h <= 1e-15) ? target : t + h;
            if (!std::isfinite(w) || std::abs(w) > opt.bound) {
                out.blew_up = true;
                out.blow_up_time = t;
                return out;
            }
        }
        out.tau.push_back(target);
        out.w.push_back(w);
        out.wdot.push_back(v);
    }
    return out;
}

struct SingularityFit {
    double exponent = 0.0;  ///< p in |w| ~ c (tau_S - tau)^-p
    double tau_s = 0.0;
    double log_prefactor = 0.0;
    std::size_t points = 0;
    double rms_residual = 0.0;
};

inline constexpr double kFitWindowLow = 1e2;
inline constexpr std::size_t kFitMinPoints = 10;

namespace detail {

struct LineFit {
    double slope = 0.0, intercept = 0.0, ssr = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        f.ssr += r * r;
    }
    return f;
}

} // namespace detail

/// Fits log|w| = a - p log(tau_S - tau) on the last contiguous run of points
/// with 1e2 <= |w| <= bound/10, co-fitting tau_S by a log-spaced scan of the
/// offset beyond the last point followed by golden-section refinement.
inline SingularityFit fit_singularity_exponent(std::span<const double> tau,
                                               std::span<const double> abs_w, double bound) {
    if (tau.size() != abs_w.size())
        throw InvalidArgument("fit_singularity_exponent: tau and |w| differ in length");
    auto in_window = [&](std::size_t i) {
        const double a = abs_w[i];
        return std::isfinite(a) && a >= kFitWindowLow && a <= bound / 10.0;
    };
    // Only the final approach: earlier excursions into the window (near
    // misses of complex-time poles) belong to other singularities.
    std::size_t end = tau.size();
    while (end > 0 && !in_window(end - 1)) --end;
    std::size_t begin = end;
    while (begin > 0 && in_window(begin - 1)) --begin;
    std::vector<double> t, y;
    for (std::size_t i = begin; i < end; ++i) {
        t.push_back(tau[i]);
        y.push_back(std::log(abs_w[i]));
    }
    if (t.size() < kFitMinPoints)
        throw FitUnavailable("fit_singularity_exponent: " + std::to_string(t.size()) +
                             " points in the asymptotic window, need " +
                             std::to_string(kFitMinPoints));
    const double t_last = *std::max_element(t.begin(), t.end());
    const double t_first = *std::min_element(t.begin(), t.end());
    const double span = std::max(t_last - t_first, 1e-12);

    std::vector<double> x(t.size());
    auto eval = [&](double log_offset) {
        const double ts = t_last + std::exp(log_offset);
        for (std::size_t i = 0; i < t.size(); ++i) x[i] = std::log(ts - t[i]);
        return detail::fit_line(x, y);
    };

    const double lo = std::log(span * 1e-8), hi = std::log(span * 10.0);
    const int n_scan = 400;
    int best = 0;
    double best_ssr = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= n_scan; ++k) {
        const double s = eval(lo + (hi - lo) * k / n_scan).ssr;
        if (s < best_ssr) {
            best_ssr = s;
            best = k;
        }
    }
    const double step = (hi - lo) / n_scan;
    double a = lo + step * std::max(best - 1, 0), b = lo + step * std::min(best + 1, n_scan);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = eval(c).ssr, fd = eval(d).ssr;
    for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c).ssr;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d).ssr;
        }
    }
    const double opt = 0.5 * (a + b);
    const auto fit = eval(opt);
    SingularityFit out;
    out.exponent = -fit.slope;
    out.tau_s = t_last + std::exp(opt);
    out.log_prefactor = fit.intercept;
    out.points = t.size();
    out.rms_residual = std::sqrt(fit.ssr / static_cast<double>(t.size()));
    return out;
}

} // namespace tcm::semiclassics
