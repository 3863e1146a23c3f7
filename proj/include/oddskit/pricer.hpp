#pragma once

// ---------------------------------------------------------------------------
// Derivative pricing on the log-odds kernel: closed-form variance and
// covariance strikes, a backward IMEX finite-difference solver for generic
// terminal payoffs (with optional absorbing barriers for first-passage
// notes), Monte Carlo pricing of path functionals, and bump-and-revalue
// Greeks.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oddskit/dependence.hpp"
#include "oddskit/errors.hpp"
#include "oddskit/kernel.hpp"

namespace oddskit {

// ---------------------------------------------------------------------------
// Instrument specs
// ---------------------------------------------------------------------------

enum class variance_space { logit, probability };

struct variance_swap_spec {
    variance_space space = variance_space::logit;
    double t0 = 0.0;
    double T = 0.0; // seconds; > t0
    bool has_corridor = false;
    double corridor_lo = 0.0; // probabilities, 0 < lo < hi < 1 when present
    double corridor_hi = 0.0;

    void validate() const;
};

enum class passage_direction { hit_above, hit_below };

struct first_passage_spec {
    double level = 0.5; // probability h in (0, 1)
    double T = 0.0;     // seconds
    passage_direction direction = passage_direction::hit_above;
    double payout = 1.0;

    // Passage checks happen on a discrete monitoring clock: 0 monitors at
    // every solver step (PIDE) or path sample (MC); a positive value checks
    // only at multiples of monitor_dt, so a simulation sampled at
    // dt = monitor_dt prices the same discretely-monitored contract as a
    // PIDE solve whose time step divides monitor_dt.
    double monitor_dt = 0.0;

    void validate() const;
};

struct pide_grid {
    double x_min = 0.0;
    double x_max = 0.0;   // > x_min
    std::size_t n_x = 256; // >= 64 intervals
    std::size_t n_t = 256; // >= 32 steps
    double theta = 1.0;    // implicit weight on diffusion+drift, in [0.5, 1]

    void validate() const;
};

enum class price_method { closed_form, pide, mc };

std::string to_string(price_method m);

struct price_result {
    double value = 0.0;
    double error = 0.0; // grid-convergence estimate or MC standard error
    price_method method = price_method::closed_form;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Closed-form strikes
// ---------------------------------------------------------------------------

// Fair strike of realized quadratic variation of x on [t0, T]:
// integral of sigma_b^2 plus intensity times the jump second moment,
// trapezoid over the parameter grid breakpoints.
price_result x_var_strike(const kernel_params& params, double t0, double T);

// Frozen-state strike of realized p-variance; warns when (T-t0) * mean
// sigma_b^2 exceeds 0.5 (the short-maturity expansion degrades).
price_result p_var_strike(double x0, const kernel_params& params, double t0, double T);

// Frozen-state covariance strike across two events: diffusive part
// S'_i S'_j rho * int sigma_i sigma_j du plus the co-jump part
// intensity * m2 * (T - t0).  correlation_strike divides by the geometric
// mean of the marginal p-variance strikes (ratio-of-moments convention) and
// throws data_error when either marginal variance is zero.
price_result covariance_strike(double x_i, const kernel_params& params_i, double x_j,
                               const kernel_params& params_j, double rho,
                               const pair_dependence* cojump, double t0, double T);
price_result correlation_strike(double x_i, const kernel_params& params_i, double x_j,
                                const kernel_params& params_j, double rho,
                                const pair_dependence* cojump, double t0, double T);

// Dispatch on a swap spec: logit space -> x_var_strike, probability space ->
// p_var_strike.  Corridor strikes have no closed form here; they are priced
// by Monte Carlo accrual (corridor_payoff + mc_price), so a corridor spec
// throws config_error pointing there.
price_result variance_strike(const variance_swap_spec& spec, double x0,
                             const kernel_params& params);

// ---------------------------------------------------------------------------
// PIDE solver
// ---------------------------------------------------------------------------

// Domain rule: x0 +/- (6 sqrt(total quadratic variation on [t0, T]) plus a
// 3-jump-sd overshoot margin when jumps are active), floored at +/-1.
pide_grid default_pide_grid(double x0, const kernel_params& params, double t0, double T);

struct pide_solution {
    std::vector<double> x;     // grid nodes
    std::vector<double> value; // V(t0, x) on the nodes
    price_result result;       // value interpolated at x0, Richardson error
};

// Backward IMEX theta-scheme for terminal payoff g(x_T): drift and diffusion
// implicit (tridiagonal solve, hybrid central/upwind advection so the scheme
// stays monotone), jump integral explicit via a normalized discrete
// convolution with the jump density, frozen per time slab.  Boundaries are
// Dirichlet at the payoff values.  With a barrier spec the grid is shifted
// so a node sits exactly on x_h = logit(level) and the value is forced to
// the payout on the barrier side at every monitoring date (every solver
// step when monitor_dt == 0; otherwise each multiple of monitor_dt, which
// must then be an integer multiple of the solver step).  The error estimate
// comes from a half-resolution re-solve.  Throws config_error when the
// explicit jump step is unstable (max lambda * dt_grid > 0.5) or the grid
// does not cover x0 +/- 6 sqrt(total variance).
pide_solution pide_solve(const std::function<double(double)>& payoff,
                         const kernel_params& params, double x0, double t0, double T,
                         const pide_grid& grid,
                         const first_passage_spec* barrier = nullptr);

// First-passage note priced on the PIDE with an absorbing barrier.
price_result first_passage_pide(double x0, const kernel_params& params,
                                const first_passage_spec& spec, double t0,
                                const pide_grid* grid_override = nullptr);

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

using path_payoff = std::function<double(const logit_path&)>;

path_payoff terminal_payoff(std::function<double(double)> g);
path_payoff qv_payoff(variance_space space);
// Accrues (dp)^2 on steps whose left endpoint satisfies lo <= p <= hi.
path_payoff corridor_payoff(double lo, double hi);
// Payout if any sample (initial state included) is at or beyond the level;
// jump overshoot counts.
path_payoff first_passage_payoff(const first_passage_spec& spec);

// Mean payoff over n_paths simulated paths (>= 1000) with per-path
// substreams; antithetic pairing flips the Brownian draws and halves the
// sample count used for the standard error.  Chunked deterministically, so
// results do not depend on thread scheduling.
price_result mc_price(const path_payoff& payoff, const kernel_params& params, double x0,
                      double horizon, double dt, std::size_t n_paths, std::uint64_t seed,
                      bool antithetic = true);

// ---------------------------------------------------------------------------
// Greeks
// ---------------------------------------------------------------------------

// Pricing closure under bump: (x0, params, rho) -> value.  Ops without a
// correlation input ignore rho.
using pricing_fn = std::function<double(double x0, const kernel_params& params, double rho)>;

struct greeks_config {
    double dx = 1e-3;       // absolute bump for delta/gamma
    double rel_bump = 0.01; // relative bump for sigma_b and jump second moment
    double rho_bump = 0.01; // absolute bump for correlation

    void validate() const;
};

struct greeks_result {
    double delta_x = 0.0;
    double gamma_x = 0.0;
    double vega_b = 0.0;    // directional: dV per unit relative move of sigma_b(.)
    double vega_rho = 0.0;  // dV/drho
    double jump_vega = 0.0; // directional: dV per unit relative move of s_J^2
};

greeks_result greeks(const pricing_fn& price, double x0, const kernel_params& params,
                     double rho = 0.0, const greeks_config& cfg = {});

// Rescales the law so its second moment is multiplied by `factor`
// (intensity untouched); used by jump_vega bumps and exposed for tests.
jump_law scale_jump_second_moment(const jump_law& law, double factor);

} // namespace oddskit
