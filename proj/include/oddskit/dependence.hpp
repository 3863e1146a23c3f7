#pragma once

// ---------------------------------------------------------------------------
// Cross-event dependence: de-jumped diffusive correlation on rolling
// windows, co-jump frequency/second-moment estimates from jump flags, and
// shrunk, clamped hedge ratios combining both channels.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oddskit/errors.hpp"

namespace oddskit {

struct dependence_config {
    std::size_t window_steps = 300;   // rolling window W (steps); >= 60
    std::size_t min_valid_steps = 30; // fewer no-jump steps in a window -> gap
    double tau_J = 0.7;               // jump-flag threshold on responsibilities
    double dt = 1.0;                  // grid spacing (seconds)

    void validate() const;
};

struct pair_dependence {
    std::vector<double> rho;      // per-increment rolling estimate; NaN marks gaps
    double cojump_intensity = 0.0; // joint jump frequency (1/s)
    double cojump_m2 = 0.0;        // mean product of joint jump increments in p
    double window = 0.0;           // rolling window length (seconds)

    nlohmann::json to_json() const;
};

// Correlation core on pre-weighted increment products a_k[u] = S'_k(u) dx_k[u].
// Steps with valid[u] == 0 are excluded; windows with fewer than
// min_valid_steps usable steps emit NaN.  Output is aligned with the
// increments: entry u covers steps (u - W, u].
std::vector<double> dejumped_correlation_products(const std::vector<double>& a_i,
                                                  const std::vector<double>& a_j,
                                                  const std::vector<unsigned char>& valid,
                                                  const dependence_config& cfg);

// Full estimator from filtered paths and responsibilities: products are
// S'(x_hat[u]) * (x_hat[u+1] - x_hat[u]); a step is valid when
// max(gamma_i, gamma_j) < tau_J.
std::vector<double> dejumped_correlation(const std::vector<double>& x_hat_i,
                                         const std::vector<double>& gamma_i,
                                         const std::vector<double>& x_hat_j,
                                         const std::vector<double>& gamma_j,
                                         const dependence_config& cfg);

// Joint-jump moments: intensity = (# steps with both gammas above tau_J) /
// (increments * dt); m2 = mean over those steps of dp_i * dp_j with
// dp = S(x[u+1]) - S(x[u]).  Zero joint flags give (0, 0).
std::pair<double, double> cojump_moments(const std::vector<double>& x_hat_i,
                                         const std::vector<double>& gamma_i,
                                         const std::vector<double>& x_hat_j,
                                         const std::vector<double>& gamma_j, double dt,
                                         double tau_J = 0.7);

// Convenience: rolling correlation plus co-jump moments in one struct.
pair_dependence estimate_pair_dependence(const std::vector<double>& x_hat_i,
                                         const std::vector<double>& gamma_i,
                                         const std::vector<double>& x_hat_j,
                                         const std::vector<double>& gamma_j,
                                         const dependence_config& cfg);

struct hedge_inputs {
    double x_i = 0.0;       // log-odds of the hedged event
    double x_j = 0.0;       // log-odds of the hedging event
    double sigma_b_j = 0.0; // belief volatility of the hedging event; > 0
    double rho = 0.0;       // diffusive correlation estimate
};

struct hedge_ratio {
    double beta = 0.0;            // raw diffusive ratio (S'_i / S'_j) * rho
    double shrinkage_alpha = 0.7; // in [0.5, 1]
    double clamp_abs = 10.0;
    double jump_correction = 0.0; // co-jump additive term

    // alpha * beta + jump correction, clamped to +/- clamp_abs.
    double effective() const;
};

// Shrunk hedge ratio with S'_j floored at 1e-4 near the boundaries; the
// optional co-jump correction adds m2 * intensity / (S'_j^2 * sigma_b_j^2).
hedge_ratio beta_hedge(const hedge_inputs& in, double alpha = 0.7, double clamp_abs = 10.0,
                       const pair_dependence* cojump = nullptr);

// CSV export `t,rho` for one pair (NaN gaps serialize as empty cells).
void write_pair_csv(const std::string& path, const std::vector<double>& t,
                    const std::vector<double>& rho, const std::string& manifest_id = "");

} // namespace oddskit
