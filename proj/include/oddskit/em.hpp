#pragma once

// ---------------------------------------------------------------------------
// EM mixture separation of diffusion and jumps on filtered logit increments.
//
// Each increment is modeled as a two-component mixture: with probability
// (1 - lambda dt) a Gaussian diffusion step N(mu dt, sigma_b^2 dt), with
// probability lambda dt a draw from the jump law.  The E-step yields per-step
// jump responsibilities gamma; the M-step updates (sigma_b^2, lambda, s_J^2)
// by weighted moments, globally first and then over 50%-overlapping rolling
// windows with linear blending.  Outer loops enforce the risk-neutral drift
// and re-run the smoother.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "oddskit/kalman.hpp"
#include "oddskit/kernel.hpp"
#include "oddskit/ticks.hpp"

namespace oddskit {

// Identifiability band: a fitted jump second moment below this multiple of
// the diffusive step variance cannot be told apart from diffusion, and the
// mixture is treated as having no jump component.
inline constexpr double kMinJumpSeparation = 9.0;

struct em_config {
    double dt = 1.0;             // seconds per grid step
    int global_steps = 6;        // EM iterations of the global initialization
    double rolling_window = 400; // seconds
    double tau_J = 0.7;          // jump-flag threshold on gamma
    int outer_loops = 2;
    double tol = 1e-3;           // relative parameter-change stop rule
    int window_iters = 3;        // EM iterations per rolling window
    double drift_ewma_halflife = 30.0; // seconds

    void validate() const;
};

struct mixture_estimates {
    // Per-increment estimates (index u covers the step t[u] -> t[u+1]).
    std::vector<double> sigma_b2; // logit^2 per second
    std::vector<double> lambda;   // 1 per second
    std::vector<double> sJ2;      // jump second moment, logit^2

    // Rolling-window skeleton the per-step values were blended from.
    std::vector<double> window_center; // increment index of each window center
    std::vector<jump_law> window_law;

    jump_family family = jump_family::symmetric_gaussian;

    void validate(double dt) const;
    jump_law law_at(std::size_t u) const; // window law covering increment u
};

struct responsibilities {
    std::vector<double> gamma;            // posterior jump probability per increment
    std::vector<std::uint8_t> jump_flags; // gamma > tau_J
    double tau_J = 0.7;
    bool degenerate_warning = false; // some step had both densities underflow
};

// Posterior jump probabilities for increments dx with per-step drift mu
// (units 1/s) under per-step estimates.
responsibilities e_step(const std::vector<double>& dx, const std::vector<double>& mu,
                        const mixture_estimates& est, double dt, double tau_J);

// Weighted-moment updates over rolling windows of `window_s` seconds
// (50% overlap, linear blending between centers).  Passing window_s >= the
// whole span collapses to the single global window.
mixture_estimates m_step(const std::vector<double>& dx, const std::vector<double>& mu,
                         const responsibilities& resp, double window_s, double dt,
                         jump_family family);

// Per-step risk-neutral drift at the current estimates, EWMA-smoothed.
// Output is aligned with increments (length = x_hat.size() - 1).
std::vector<double> enforce_rn_drift(const std::vector<double>& x_hat,
                                     const mixture_estimates& est, const em_config& cfg);

struct calibration_result {
    mixture_estimates est;
    responsibilities resp;
    std::vector<double> drift;  // per-increment, 1/s
    filter_output refreshed;    // smoother re-run with drift + model proc var
    nlohmann::json sanity;      // realized vs model p-variance report
    bool converged = false;
    int outer_loops_used = 0;
    std::vector<double> global_loglik; // per global-phase iteration
};

// Full calibration loop on an observed series: initial smoother, global EM,
// rolling EM, drift enforcement, smoother re-runs, outer iteration.
calibration_result calibrate(const uniform_series& series, const std::vector<double>& meas_var,
                             const em_config& cfg,
                             jump_family family = jump_family::symmetric_gaussian);

// Observed-data log-likelihood of the mixture at the given estimates (used
// for the global-phase monotonicity check).
double mixture_loglik(const std::vector<double>& dx, const std::vector<double>& mu,
                      const mixture_estimates& est, double dt);

} // namespace oddskit
