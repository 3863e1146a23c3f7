#pragma once

// ---------------------------------------------------------------------------
// Heteroskedastic measurement-noise model for the observed logit:
//   sigma_eta^2(t) = a0 + a1 s_t^2 + a2 d_t^-1 + a3 r_t + a4 iota_t^2,
// clipped to [clamp_lo, clamp_hi].  Coefficients are fitted by Huber-weighted
// least squares of short-horizon squared innovations (from a homoskedastic
// pilot filter) on the covariates.
// ---------------------------------------------------------------------------

#include <vector>

#include "oddskit/ticks.hpp"

namespace oddskit {

struct noise_model_coeffs {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
    double clamp_lo = 1e-10;
    double clamp_hi = 1.0;
};

// Predicted per-step measurement variance (clipped).  Non-finite covariates
// raise a data error.
std::vector<double> noise_variance(const uniform_series& s, const noise_model_coeffs& c);

// Huber-weighted (k = 2.5, MAD-scaled) IRLS regression of `targets`
// (per-step noise-variance proxies) on [1, s^2, d^-1, r, iota^2].
noise_model_coeffs fit_noise_model(const uniform_series& s, const std::vector<double>& targets,
                                   double clamp_lo = 1e-10, double clamp_hi = 1.0);

// Full protocol: homoskedastic pilot filter -> squared innovations minus the
// predicted state variance as targets -> robust fit; one refit pass with the
// first-round variances improves the pilot.
noise_model_coeffs fit_noise_from_series(const uniform_series& s, double clamp_lo = 1e-10,
                                         double clamp_hi = 1.0);

} // namespace oddskit
