#pragma once

// ---------------------------------------------------------------------------
// Local-level Kalman filter + RTS smoother on the observed logit series with
// per-step measurement variance, optional per-step drift (units 1/s), and
// optional per-step process variance.  Halted bins freeze the state; the
// filter re-opens with its posterior variance inflated x10.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <vector>

#include "oddskit/ticks.hpp"

namespace oddskit {

struct filter_output {
    std::vector<double> x_hat;   // smoothed state
    std::vector<double> var_hat; // smoothed posterior variance
    std::vector<double> innovations;    // length n-1 (first update has no prediction)
    std::vector<double> innovation_var; // length n-1
    std::vector<double> filt_x;   // forward (causal) posterior mean
    std::vector<double> filt_var; // forward posterior variance
    double loglik = 0.0;
};

// Window (steps) of the rolling variance of dy used as the process-noise
// proxy when proc_var is not supplied.
inline constexpr std::size_t kProcVarProxyWindow = 120;

filter_output kalman_filter_smoother(const std::vector<double>& y,
                                     const std::vector<double>& meas_var, double dt,
                                     const std::vector<double>* drift = nullptr,
                                     const std::vector<double>* proc_var = nullptr,
                                     const std::vector<std::uint8_t>* halted = nullptr,
                                     bool causal_proxy = false);

inline filter_output kalman_filter_smoother(const uniform_series& s,
                                            const std::vector<double>& meas_var,
                                            const std::vector<double>* drift = nullptr,
                                            const std::vector<double>* proc_var = nullptr) {
    return kalman_filter_smoother(s.y, meas_var, s.dt, drift, proc_var, &s.halted);
}

struct residual_report {
    double lb10 = 0.0, lb20 = 0.0;
    bool pass_lb10 = false, pass_lb20 = false;
    double variance_ratio = 0.0;     // mean standardized innovation^2, ~1 when calibrated
    double excess_kurt_nonjump = 0.0;
    bool degenerate = false;         // innovations carry (numerically) no variance
};

// Ljung–Box at lags 10/20 on standardized innovations (1% level), variance
// ratio against the predicted innovation variance, and excess kurtosis away
// from jump-flagged steps (flags aligned with innovations, optional).
residual_report residual_diagnostics(const filter_output& fo,
                                     const std::vector<std::uint8_t>* jump_flags = nullptr);

} // namespace oddskit
