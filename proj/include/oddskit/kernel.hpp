#pragma once

// ---------------------------------------------------------------------------
// Risk-neutral jump–diffusion kernel on the log-odds line.
//
// The probability process p_t = S(x_t) must be a martingale; the drift of x
// is therefore pinned by the diffusion curvature and the jump compensation:
//
//   mu(x, t) = -( 0.5 S''(x) sigma_b(t)^2 + lambda(t) * v(x) ) / max(S'(x), floor)
//   v(x)     = E[ S(x + Z) - S(x) - S'(x) chi(Z) ],   chi(z) = z 1{|z| < radius}
//
// with mu clamped to +-drift_cap.  The truncation chi only shifts work
// between the drift and the compensator; the compensated sum is invariant.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <vector>

#include "oddskit/jump_law.hpp"

namespace oddskit {

struct kernel_params {
    // Piecewise-constant parameter grids with spacing param_dt (seconds).
    // Index floor(t / param_dt), clamped to the last entry.
    std::vector<double> sigma_b; // belief volatility per sqrt(second)
    std::vector<double> lambda;  // jump intensity per second
    double param_dt = 1.0;

    jump_law law;

    double truncation_radius = 1.0;
    double drift_cap = 0.25;      // per second
    double sprime_floor = 1e-4;
    int quad_nodes = 40;          // >= 32 for the parametric jump laws

    void validate() const;

    double sigma_at(double t) const;
    double lambda_at(double t) const;
    double horizon() const { return param_dt * static_cast<double>(sigma_b.size()); }
};

struct logit_path {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> p;
    std::vector<std::uint8_t> jump;  // 1 where a jump landed on the step ending at t[k]
    std::vector<double> jump_size;   // the jump's z, 0 where jump == 0

    std::size_t size() const { return t.size(); }
};

// Jump compensation v(x) under the law; quadrature for parametric families,
// seeded MC for empirical bins (see jump_expectation).
double jump_compensation(const kernel_params& params, double x, std::uint64_t mc_seed = 12345);

// Plain Monte Carlo version for any family; used to cross-check quadrature.
double jump_compensation_mc(const kernel_params& params, double x, int n_draws,
                            std::uint64_t seed);

// Risk-neutral drift at (x, t).
double rn_drift(const kernel_params& params, double x, double t);

// Drift of the simulated state itself.  The generator compensates jumps with
// chi, so the Euler step carries mu minus the compensator mean:
//   dx = (mu - lambda E[chi(Z)]) dt + sigma_b dW + dJ.
// For symmetric laws E[chi] = 0 and this equals rn_drift.
double state_drift(const kernel_params& params, double x, double t);

// Euler–Maruyama with Bernoulli jump thinning (at most one jump per step).
// Substreams: Brownian and jump draws are derived from (seed, path_index) so
// `antithetic` flips only the Gaussian increments.  Throws config_error when
// max(lambda) * dt >= 1.
logit_path simulate_path(const kernel_params& params, double x0, double horizon, double dt,
                         std::uint64_t seed, std::uint64_t path_index = 0,
                         bool antithetic = false);

} // namespace oddskit
