#pragma once

// ---------------------------------------------------------------------------
// Causal h-second variance forecasting benchmark: the jump-diffusion
// forecaster built from a causal calibration stream plus a schedule kernel,
// four baselines (random-walk logit, constant-sigma logit, mean-reverting
// probability diffusion, AR(1)-GARCH(1,1) in probability space), shared
// contiguous train/validation/test splits, and MSE/MAE/logMSE/QLIKE
// evaluation stratified by quiet vs jump-window regimes.
//
// Every forecaster is strictly causal: the forecast at decision time t uses
// only samples with index <= t.  Model fits receive only their slice.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "oddskit/errors.hpp"
#include "oddskit/jump_law.hpp"

namespace oddskit {

// ---------------------------------------------------------------------------
// Task definition, splits, and the forward-sum operator
// ---------------------------------------------------------------------------

struct schedule_entry {
    double center = 0.0; // announced window center on the replay clock (s)
    double width = 90.0; // Gaussian kernel width (s)
};

struct forecast_task {
    std::size_t h = 60;                   // horizon in grid steps
    double dt = 1.0;                      // grid spacing (s)
    std::vector<schedule_entry> schedule; // announced news windows

    void validate() const;
};

// Decision-time index ranges [begin, end) over the sample grid.  The last h
// timestamps are dropped from the test range so forward sums never run off
// the series.
struct split_ranges {
    std::size_t train_begin = 0, train_end = 0;
    std::size_t val_begin = 0, val_end = 0;
    std::size_t test_begin = 0, test_end = 0;
};

split_ranges contiguous_thirds(std::size_t n_samples, std::size_t h);

// out[t] = sum_{u=t+1}^{t+h} a[u]; output length = a.size() - h.
std::vector<double> forward_sum(const std::vector<double>& a, std::size_t h);

// rv[t] = forward sum of squared increments of the filtered logit path.
std::vector<double> realized_variance(const std::vector<double>& x_hat, std::size_t h);

// ---------------------------------------------------------------------------
// Causal calibration stream (trailing-window mixture separation)
// ---------------------------------------------------------------------------

struct stream_config {
    double window_s = 400.0; // trailing estimation window (s)
    double dt = 1.0;         // grid spacing (s)
    int init_iters = 6;      // mixture iterations on the first full window
    int step_iters = 2;      // warm-started iterations per subsequent step
    double tau_J = 0.7;      // jump-flag threshold on responsibilities

    void validate() const;
};

// Per-sample causal estimates; entries before first_valid are NaN.  The
// estimate at sample t is computed from increments ending at or before t,
// with zero drift in the mixture (the risk-neutral drift is second order in
// the volatilities and immaterial for second-moment estimation on this grid).
struct calib_stream {
    std::vector<double> sigma_b2; // diffusion variance (logit^2/s)
    std::vector<double> lambda;   // jump intensity (1/s)
    std::vector<double> s_J2;     // jump second moment (logit^2)
    std::vector<double> gamma;    // responsibility of the increment ending at t
    std::size_t first_valid = 0;
    jump_family family = jump_family::symmetric_gaussian;
};

calib_stream causal_calibration_stream(const std::vector<double>& x_hat,
                                       const stream_config& cfg,
                                       jump_family family = jump_family::symmetric_gaussian);

// ---------------------------------------------------------------------------
// Forecasters
// ---------------------------------------------------------------------------

struct rn_jd_config {
    double ewma_half_life = 90.0; // smoothing of the sigma_b^2 / lambda streams (s)
    double cap_quantile = 0.95;   // ceiling quantile for the schedule boost
};

struct forecast_series {
    std::vector<double> v_hat;  // length n_samples - h; NaN where unavailable
    std::size_t skipped = 0;    // decision times without calibration
};

// v_hat[t] = h*dt*sigma2_ewma(t) + c_J * s_J2(t) * dt * sum of the
// schedule-boosted intensity over (t, t+h].  The boost lifts the smoothed
// intensity toward its causal 95th-percentile history inside Gaussian
// schedule kernels; far from any window the boost decays below 1e-12.
forecast_series rn_jd_forecast(const calib_stream& stream, const forecast_task& task,
                               double c_J, const rn_jd_config& cfg = {});

// Grid search of c_J over {0.3, 0.4, ..., 1.0} minimizing validation QLIKE;
// ties break toward the smaller value.
double tune_cj(const calib_stream& stream, const forecast_task& task,
               const std::vector<double>& rv, const split_ranges& splits,
               const rn_jd_config& cfg = {});

// Constant forecast h*mean((dx)^2) with the mean taken over increments
// inside sample range [fit_begin, fit_end).
std::vector<double> constant_variance_forecast(const std::vector<double>& x_hat, std::size_t h,
                                               std::size_t fit_begin, std::size_t fit_end);

// Mean-reverting probability diffusion fitted by moment matching on the
// probability path: alpha from the ratio of mean squared increments to the
// mean local variance level, theta the slice mean, kappa from the lag-1
// autoregression of p.
struct wf_fit {
    double alpha = 0.0;
    double kappa = 0.0;
    double theta = 0.5;
};

wf_fit fit_wf(const std::vector<double>& p_hat, double dt, std::size_t fit_begin,
              std::size_t fit_end);

// Per-step probability variance 2*alpha*p(1-p)*dt held at the decision-time
// level, summed over the horizon, and mapped to logit units by dividing by
// S'(x_t)^2.  Blows up near the boundaries by construction; reported as-is.
std::vector<double> wf_forecast(const std::vector<double>& x_hat, std::size_t h, double dt,
                                const wf_fit& fit);

struct garch_fit {
    double c = 0.0;     // AR(1) intercept on probability increments
    double phi = 0.0;   // AR(1) slope
    double omega = 0.0; // variance intercept
    double a = 0.05;    // squared-innovation load
    double b = 0.90;    // variance persistence
    double uncond = 0.0; // unconditional innovation variance
    bool fallback = false;
    std::string warning; // set when the fit fell back to fixed parameters
};

// AR(1) on probability increments by least squares, then a GARCH(1,1)
// innovation-variance fit by Gaussian likelihood with variance targeting.
// Non-convergence falls back to (a, b) = (0.05, 0.90) with a warning.
garch_fit fit_ar_garch(const std::vector<double>& p_hat, std::size_t fit_begin,
                       std::size_t fit_end);

// Causal variance recursion over the whole series followed by the h-step
// forward iteration at each decision time, mapped to logit units by
// S'(x_t)^{-2}.
std::vector<double> garch_forecast(const std::vector<double>& x_hat,
                                   const std::vector<double>& p_hat, std::size_t h,
                                   const garch_fit& fit);

// The four reference forecasters on the shared filtered path: random-walk
// logit (variance fit on the training third), constant-sigma logit (fit on
// train+validation), the mapped probability diffusion, and the mapped
// AR-GARCH model.
struct baseline_forecasts_result {
    std::vector<double> rw_logit;
    std::vector<double> const_sigma;
    std::vector<double> wf_jacobi;
    std::vector<double> ar_garch;
    wf_fit wf;
    garch_fit garch;
};

baseline_forecasts_result baseline_forecasts(const std::vector<double>& x_hat,
                                             const split_ranges& splits, std::size_t h,
                                             double dt);

// ---------------------------------------------------------------------------
// Records, metrics, and the bench driver
// ---------------------------------------------------------------------------

enum class forecast_regime { quiet, jump_window };
const char* to_string(forecast_regime r);

struct forecast_record {
    double t = 0.0;      // decision time (s)
    double v_hat = 0.0;  // forecast variance (logit^2)
    double rv = 0.0;     // realized variance (logit^2)
    forecast_regime regime = forecast_regime::quiet;
};

// Labels decision times: jump-window when within +/-radius_s of a schedule
// center or of a sample whose responsibility exceeds tau_J.
std::vector<forecast_regime> regime_labels(std::size_t n_samples, std::size_t h, double dt,
                                           const std::vector<schedule_entry>& schedule,
                                           const std::vector<double>& gamma, double tau_J,
                                           double radius_s = 90.0);

struct metric_block {
    double mse = 0.0;
    double mae = 0.0;
    double log_mse = 0.0;
    double qlike = 0.0;
    std::size_t n = 0;

    nlohmann::json to_json() const;
};

struct metric_report {
    std::string model;
    metric_block overall;
    metric_block quiet;
    metric_block jump_window;

    nlohmann::json to_json() const;
};

// Floor applied to both realized and forecast variance inside the log and
// QLIKE terms (squared-error terms use the raw values).
inline constexpr double kVarianceMetricFloor = 1e-12;

metric_report evaluate(const std::vector<forecast_record>& records, const std::string& model_id);

// Restricts (v_hat, rv, regimes) to decision times in [begin, end) where
// v_hat is finite.
std::vector<forecast_record> make_records(const std::vector<double>& v_hat,
                                          const std::vector<double>& rv,
                                          const std::vector<forecast_regime>& regimes, double dt,
                                          std::size_t begin, std::size_t end);

struct bench_config {
    forecast_task task;
    stream_config stream;
    rn_jd_config rn;

    void validate() const;
};

struct bench_model_result {
    std::string model;
    metric_report report;
    std::size_t skipped = 0;
    std::vector<double> v_hat; // full decision grid (NaN where unavailable)
};

struct bench_result {
    double c_J = 0.0;
    split_ranges splits{};
    std::size_t decision_count = 0; // shared test-slice decision times
    std::vector<bench_model_result> models;
    std::vector<double> rv;
    std::vector<forecast_regime> regimes;
    wf_fit wf{};
    garch_fit garch{};

    nlohmann::json to_json() const;
};

// Full comparison on one filtered path: causal calibration stream, c_J tuned
// on the validation third, all five forecasters evaluated on the identical
// test-slice decision times.
bench_result run_bench(const std::vector<double>& x_hat, const bench_config& cfg,
                       jump_family family = jump_family::symmetric_gaussian);

// Per-model forecast CSV: t,v_hat,rv,regime
void write_forecast_csv(const std::string& path, const std::vector<forecast_record>& records,
                        const std::string& manifest_id = "");

} // namespace oddskit
