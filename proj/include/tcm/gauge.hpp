#pragma once

// Drift gauge for the field equations.
//
// The field drifts are shifted by +/- i kappa rho Re(rho_ee), which adds a
// confining quartic term to the semiclassical potential of the inversion.
// Unbiasedness is restored by the weight Omega = exp(C0), where C0 is
// driven by the same S increment that enters the field noise. Averages are
// then taken as <O Omega>.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "tcm/error.hpp"
#include "tcm/model.hpp"
#include "tcm/noise.hpp"

namespace tcm {

struct GaugeConfig {
    bool enabled = false;
    double k = 1.0;
    double x1 = -1.0;
    double x2 = 2.0;
    /// Test hook: keep the gauge machinery active but pin kappa to 0.
    bool force_zero_kappa = false;

    void validate() const {
        if (!(k > 0.0)) throw InvalidArgument("gauge k must be > 0");
        if (!(x1 < x2)) throw InvalidArgument("gauge x1 must be < x2");
    }
};

/// Switch function 1 + (tanh(k(x1 - x)) + tanh(k(x - x2)))/2, in (0, 1].
/// Close to 0 inside [x1, x2], close to 1 outside.
inline double switch_function(double x, const GaugeConfig& cfg) {
    return 1.0 + 0.5 * (std::tanh(cfg.k * (cfg.x1 - x)) + std::tanh(cfg.k * (x - cfg.x2)));
}

inline double gauge_kappa(const TrajectoryState& s, const GaugeConfig& cfg) {
    if (!cfg.enabled || cfg.force_zero_kappa) return 0.0;
    return switch_function(s.rho_ee.real(), cfg);
}

/// Deterministic shift of the field drifts. Atomic drifts are untouched.
inline DriftVector gauged_drift_correction(const TrajectoryState& s, const GaugeConfig& cfg,
                                           const ModelParams& /*params*/) {
    DriftVector d;
    const double kappa = gauge_kappa(s, cfg);
    if (kappa == 0.0) return d;
    const double re_ee = s.rho_ee.real();
    d.dA = kappa * re_ee * (I * s.rho_eg);
    d.dA_dag = -kappa * re_ee * (I * s.rho_ge);
    return d;
}

/// Increment of C0 over one step. Must be fed the same dS that drives the
/// field noise; the weight only compensates the drift shift through that
/// correlation.
inline cplx gauge_weight_increment(const TrajectoryState& s, const GaugeConfig& cfg,
                                   const ModelParams& params, const NoiseIncrement& inc) {
    const double kappa = gauge_kappa(s, cfg);
    if (kappa == 0.0) return {};
    return kappa * params.sqrt_n() * s.rho_ee.real() * std::conj(inc.dS);
}

/// Gauge-modified effective potential of the inversion w; kappa = 0 gives
/// the ungauged cubic 2E w^2 - w^3 + w.
inline double modified_potential(double w, double E, double kappa) {
    const double k8 = kappa / 8.0;
    return (2.0 * E - k8) * w * w - (1.0 - k8) * w * w * w + (1.0 + k8) * w +
           (kappa / 32.0) * w * w * w * w;
}

struct WeightedMean {
    cplx mean{};
    double stderr_re = std::numeric_limits<double>::quiet_NaN();
    double stderr_im = std::numeric_limits<double>::quiet_NaN();
};

/// sum_i v_i exp(C0_i) / n with standard error. Normalized by the sample
/// count, not by the total weight. A shared offset max Re(C0) is taken out
/// before exponentiating.
inline WeightedMean weighted_mean(std::span<const cplx> values, std::span<const cplx> log_weights) {
    if (values.size() != log_weights.size())
        throw InvalidArgument("weighted_mean: values and log_weights differ in length");
    if (values.empty()) throw InvalidArgument("weighted_mean: empty input");
    const auto n = static_cast<double>(values.size());

    double offset = -std::numeric_limits<double>::infinity();
    for (const cplx& c : log_weights) offset = std::max(offset, c.real());

    cplx s1{};
    double s2_re = 0.0, s2_im = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const cplx x = values[i] * std::exp(log_weights[i] - offset);
        s1 += x;
        s2_re += x.real() * x.real();
        s2_im += x.imag() * x.imag();
    }
    WeightedMean out;
    const double scale = std::exp(offset);
    out.mean = s1 / n * scale;
    if (values.size() > 1) {
        const double var_re = std::max(0.0, (s2_re - s1.real() * s1.real() / n) / (n - 1.0));
        const double var_im = std::max(0.0, (s2_im - s1.imag() * s1.imag() / n) / (n - 1.0));
        out.stderr_re = std::sqrt(var_re / n) * scale;
        out.stderr_im = std::sqrt(var_im / n) * scale;
    }
    return out;
}

/// Streaming form of weighted_mean. The offset tracks the running maximum
/// of Re(C0); partial sums are rescaled whenever it moves, so merging two
/// accumulators is exact up to rounding and independent of thread layout
/// when merges happen in a fixed order.
class WeightedAccumulator {
public:
    void add(cplx value, cplx log_weight) {
        if (log_weight.real() > offset_) rebase(log_weight.real());
        const cplx x = value * std::exp(log_weight - offset_);
        ++n_;
        s1_ += x;
        s2_re_ += x.real() * x.real();
        s2_im_ += x.imag() * x.imag();
    }

    void merge(const WeightedAccumulator& o) {
        if (o.n_ == 0) return;
        if (o.offset_ > offset_) rebase(o.offset_);
        const double f = std::exp(o.offset_ - offset_);
        n_ += o.n_;
        s1_ += o.s1_ * f;
        s2_re_ += o.s2_re_ * f * f;
        s2_im_ += o.s2_im_ * f * f;
    }

    long long count() const { return n_; }

    WeightedMean result() const {
        WeightedMean out;
        if (n_ == 0) {
            out.mean = {std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
            return out;
        }
        const auto n = static_cast<double>(n_);
        const double scale = std::exp(offset_);
        out.mean = s1_ / n * scale;
        if (n_ > 1) {
            const double var_re = std::max(0.0, (s2_re_ - s1_.real() * s1_.real() / n) / (n - 1.0));
            const double var_im = std::max(0.0, (s2_im_ - s1_.imag() * s1_.imag() / n) / (n - 1.0));
            out.stderr_re = std::sqrt(var_re / n) * scale;
            out.stderr_im = std::sqrt(var_im / n) * scale;
        }
        return out;
    }

private:
    void rebase(double new_offset) {
        if (n_ > 0) {
            const double f = std::exp(offset_ - new_offset);
            s1_ *= f;
            s2_re_ *= f * f;
            s2_im_ *= f * f;
        }
        offset_ = new_offset;
    }

    long long n_ = 0;
    double offset_ = -std::numeric_limits<double>::infinity();
    cplx s1_{};
    double s2_re_ = 0.0;
    double s2_im_ = 0.0;
};

} // namespace tcm
