// ---------------------------------------------------------------------------
// Causal variance forecasting benchmark: calibration stream, jump-diffusion
// forecaster with schedule boost, baselines, metrics, and the bench driver.
// ---------------------------------------------------------------------------

#include "oddskit/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oddskit/csv.hpp"
#include "oddskit/em.hpp"
#include "oddskit/logistic.hpp"
#include "oddskit/stats.hpp"

namespace oddskit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_series(const std::vector<double>& x_hat, std::size_t min_len, const char* who) {
    if (x_hat.size() < min_len)
        throw data_error(std::string(who) + ": series too short (" +
                         std::to_string(x_hat.size()) + " samples, need at least " +
                         std::to_string(min_len) + ")");
    for (double x : x_hat)
        if (!std::isfinite(x)) throw data_error(std::string(who) + ": non-finite sample");
}

void check_fit_range(std::size_t n, std::size_t begin, std::size_t end, const char* who) {
    if (begin >= end || end > n || end - begin < 2)
        throw config_error(std::string(who) + ": invalid fit range [" + std::to_string(begin) +
                           ", " + std::to_string(end) + ") on " + std::to_string(n) + " samples");
}

// Causal running quantile over an expanding history: values are kept sorted
// by insertion, and the quantile uses the same linear interpolation as the
// batch helper so both agree exactly on identical histories.
class running_quantile {
  public:
    explicit running_quantile(double q) : q_(q) {}

    void push(double v) {
        sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), v), v);
    }

    double value() const {
        const std::size_t m = sorted_.size();
        if (m == 0) return kNaN;
        if (m == 1) return sorted_[0];
        const double pos = q_ * static_cast<double>(m - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, m - 1);
        const double w = pos - static_cast<double>(lo);
        return (1.0 - w) * sorted_[lo] + w * sorted_[hi];
    }

  private:
    double q_;
    std::vector<double> sorted_;
};

// Least-squares line y = c + phi * x; returns false when x is degenerate.
bool ols_line(const std::vector<double>& x, const std::vector<double>& y, double& c,
              double& phi) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) return false;
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) return false;
    phi = sxy / sxx;
    c = my - phi * mx;
    return true;
}

metric_block accumulate_metrics(const std::vector<const forecast_record*>& rs) {
    metric_block b;
    b.n = rs.size();
    if (rs.empty()) return b;
    double mse = 0.0, mae = 0.0, lmse = 0.0, ql = 0.0;
    for (const auto* r : rs) {
        const double e = r->v_hat - r->rv;
        mse += e * e;
        mae += std::abs(e);
        const double vf = std::max(r->v_hat, kVarianceMetricFloor);
        const double rf = std::max(r->rv, kVarianceMetricFloor);
        const double le = std::log(vf) - std::log(rf);
        lmse += le * le;
        const double ratio = rf / vf;
        ql += ratio - std::log(ratio) - 1.0;
    }
    const double inv = 1.0 / static_cast<double>(rs.size());
    b.mse = mse * inv;
    b.mae = mae * inv;
    b.log_mse = lmse * inv;
    b.qlike = ql * inv;
    return b;
}

} // namespace

// ---------------------------------------------------------------------------
// Task, splits, forward sums
// ---------------------------------------------------------------------------

void forecast_task::validate() const {
    if (h == 0) throw config_error("forecast task: horizon must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw config_error("forecast task: dt must be positive and finite");
    for (const auto& s : schedule) {
        if (!std::isfinite(s.center) || !(s.width > 0.0) || !std::isfinite(s.width))
            throw config_error("forecast task: schedule entries need finite centers and "
                               "positive widths");
    }
}

split_ranges contiguous_thirds(std::size_t n_samples, std::size_t h) {
    if (n_samples <= h)
        throw data_error("splits: need more than " + std::to_string(h) + " samples");
    split_ranges s;
    s.train_begin = 0;
    s.train_end = n_samples / 3;
    s.val_begin = s.train_end;
    s.val_end = 2 * n_samples / 3;
    s.test_begin = s.val_end;
    s.test_end = n_samples - h;
    if (s.test_begin >= s.test_end || s.train_end < 2 || s.val_end - s.val_begin < 2)
        throw data_error("splits: series too short for train/validation/test thirds with "
                         "horizon " +
                         std::to_string(h));
    return s;
}

std::vector<double> forward_sum(const std::vector<double>& a, std::size_t h) {
    if (h == 0) throw config_error("forward sum: horizon must be positive");
    if (a.size() <= h)
        throw data_error("forward sum: series of " + std::to_string(a.size()) +
                         " values cannot support horizon " + std::to_string(h));
    std::vector<double> prefix(a.size() + 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) prefix[i + 1] = prefix[i] + a[i];
    std::vector<double> out(a.size() - h);
    for (std::size_t t = 0; t + h < a.size(); ++t) out[t] = prefix[t + 1 + h] - prefix[t + 1];
    return out;
}

std::vector<double> realized_variance(const std::vector<double>& x_hat, std::size_t h) {
    check_series(x_hat, h + 1, "realized variance");
    std::vector<double> a(x_hat.size(), 0.0);
    for (std::size_t u = 1; u < x_hat.size(); ++u) {
        const double d = x_hat[u] - x_hat[u - 1];
        a[u] = d * d;
    }
    return forward_sum(a, h);
}

// ---------------------------------------------------------------------------
// Causal calibration stream
// ---------------------------------------------------------------------------

void stream_config::validate() const {
    if (!(window_s > 0.0) || !(dt > 0.0))
        throw config_error("calibration stream: window and dt must be positive");
    if (window_s < 10.0 * dt)
        throw config_error("calibration stream: window must cover at least 10 steps");
    if (init_iters < 1 || step_iters < 1)
        throw config_error("calibration stream: iteration counts must be positive");
    if (!(tau_J > 0.0) || !(tau_J < 1.0))
        throw config_error("calibration stream: tau_J must lie in (0, 1)");
}

calib_stream causal_calibration_stream(const std::vector<double>& x_hat,
                                       const stream_config& cfg, jump_family family) {
    cfg.validate();
    const auto w = static_cast<std::size_t>(std::llround(cfg.window_s / cfg.dt));
    check_series(x_hat, w + 1, "calibration stream");
    const std::size_t n = x_hat.size();

    calib_stream out;
    out.family = family;
    out.first_valid = w;
    out.sigma_b2.assign(n, kNaN);
    out.lambda.assign(n, kNaN);
    out.s_J2.assign(n, kNaN);
    out.gamma.assign(n, kNaN);

    std::vector<double> dx(n - 1);
    for (std::size_t u = 0; u + 1 < n; ++u) dx[u] = x_hat[u + 1] - x_hat[u];

    // The drift is second order in the volatilities on this grid; the
    // second-moment separation treats increments as zero mean.
    const std::vector<double> mu(w, 0.0);
    std::vector<double> win(w);

    // Collapse the rolling-window machinery of the M-step to one global
    // window spanning the trailing slice.
    const double global_span = 2.0 * cfg.window_s;

    // Seed the first window from raw moments: all variance to the diffusion,
    // one expected jump per window, and a jump scale well above it.
    double m2 = 0.0;
    for (std::size_t u = 0; u < w; ++u) m2 += dx[u] * dx[u];
    m2 /= static_cast<double>(w);
    double s2 = std::max(m2 / cfg.dt, 1e-12);
    double lam = 1.0 / cfg.window_s;
    double sj2 = 9.0 * s2 * cfg.dt;

    mixture_estimates est;
    est.family = family;
    est.sigma_b2.assign(w, s2);
    est.lambda.assign(w, lam);
    est.sJ2.assign(w, sj2);

    // Last identifiable jump scale, carried through collapsed stretches so a
    // scheduled-boost consumer still knows the typical jump size.
    double mem_sj2 = 0.0;

    for (std::size_t t = w; t < n; ++t) {
        // Trailing window of increments ending at sample t.
        std::copy(dx.begin() + static_cast<std::ptrdiff_t>(t - w),
                  dx.begin() + static_cast<std::ptrdiff_t>(t), win.begin());
        std::fill(est.sigma_b2.begin(), est.sigma_b2.end(), s2);
        std::fill(est.lambda.begin(), est.lambda.end(), lam);
        std::fill(est.sJ2.begin(), est.sJ2.end(), sj2);

        const int iters = (t == w) ? cfg.init_iters : cfg.step_iters;
        responsibilities resp;
        for (int it = 0; it < iters; ++it) {
            resp = e_step(win, mu, est, cfg.dt, cfg.tau_J);
            est = m_step(win, mu, resp, global_span, cfg.dt, family);
        }
        const double s2_fit = est.sigma_b2.back();
        const double lam_fit = est.lambda.back();
        const double sj2_fit = est.sJ2.back();
        const double band = kMinJumpSeparation * s2_fit * cfg.dt;

        s2 = s2_fit;
        out.sigma_b2[t] = s2_fit;
        out.gamma[t] = resp.gamma.back();
        if (sj2_fit >= band && lam_fit > 0.0) {
            out.lambda[t] = lam_fit;
            out.s_J2[t] = sj2_fit;
            mem_sj2 = sj2_fit;
            lam = lam_fit;
            sj2 = sj2_fit;
        } else {
            // The fitted jump component sits inside the diffusive band: the
            // window holds no identifiable jumps.  Report a collapsed state
            // but keep a live probe in the warm start so the next genuine
            // outlier is still caught.
            out.lambda[t] = 0.0;
            out.s_J2[t] = mem_sj2;
            lam = std::max(lam_fit, 1.0 / cfg.window_s);
            sj2 = std::max(mem_sj2, band);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Jump-diffusion forecaster with schedule boost
// ---------------------------------------------------------------------------

forecast_series rn_jd_forecast(const calib_stream& stream, const forecast_task& task,
                               double c_J, const rn_jd_config& cfg) {
    task.validate();
    if (!(c_J >= 0.0) || !std::isfinite(c_J))
        throw config_error("forecast: c_J must be nonnegative and finite");
    if (!(cfg.ewma_half_life > 0.0) || !(cfg.cap_quantile > 0.0) || !(cfg.cap_quantile < 1.0))
        throw config_error("forecast: bad smoothing or cap-quantile configuration");
    const std::size_t n = stream.sigma_b2.size();
    const std::size_t h = task.h;
    if (n <= h) throw data_error("forecast: calibration stream shorter than the horizon");

    forecast_series out;
    out.v_hat.assign(n - h, kNaN);

    const std::size_t fv = stream.first_valid;
    if (fv >= n) {
        out.skipped = out.v_hat.size();
        return out;
    }

    // Smooth the valid tails of the calibration streams.
    const double hl_steps = cfg.ewma_half_life / task.dt;
    std::vector<double> s2_tail(stream.sigma_b2.begin() + static_cast<std::ptrdiff_t>(fv),
                                stream.sigma_b2.end());
    std::vector<double> lam_tail(stream.lambda.begin() + static_cast<std::ptrdiff_t>(fv),
                                 stream.lambda.end());
    const std::vector<double> s2_ewma = ewma(s2_tail, hl_steps);
    const std::vector<double> lam_ewma = ewma(lam_tail, hl_steps);

    // Unit-capped sum of Gaussian schedule kernels on the sample grid, with a
    // prefix sum for O(1) horizon aggregation.
    std::vector<double> kbar(n, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
        const double tu = static_cast<double>(u) * task.dt;
        double s = 0.0;
        for (const auto& e : task.schedule) {
            const double z = (tu - e.center) / e.width;
            if (std::abs(z) < 40.0) s += std::exp(-0.5 * z * z);
        }
        kbar[u] = std::min(s, 1.0);
    }
    std::vector<double> kprefix(n + 1, 0.0);
    for (std::size_t u = 0; u < n; ++u) kprefix[u + 1] = kprefix[u] + kbar[u];

    running_quantile cap(cfg.cap_quantile);
    for (std::size_t t = fv; t + h < n; ++t) {
        cap.push(lam_ewma[t - fv]);
        const double s2 = s2_ewma[t - fv];
        const double lam = lam_ewma[t - fv];
        const double boost = std::max(cap.value() - lam, 0.0);
        const double ksum = kprefix[t + 1 + h] - kprefix[t + 1];
        const double jump_count = static_cast<double>(h) * lam * task.dt +
                                  boost * ksum * task.dt;
        out.v_hat[t] = static_cast<double>(h) * task.dt * s2 +
                       c_J * stream.s_J2[t] * jump_count;
    }
    for (std::size_t t = 0; t < out.v_hat.size(); ++t)
        if (!std::isfinite(out.v_hat[t])) ++out.skipped;
    return out;
}

double tune_cj(const calib_stream& stream, const forecast_task& task,
               const std::vector<double>& rv, const split_ranges& splits,
               const rn_jd_config& cfg) {
    double best_cj = kNaN;
    double best_q = std::numeric_limits<double>::infinity();
    for (int i = 3; i <= 10; ++i) {
        const double cj = 0.1 * static_cast<double>(i);
        const forecast_series f = rn_jd_forecast(stream, task, cj, cfg);
        double ql = 0.0;
        std::size_t cnt = 0;
        for (std::size_t t = splits.val_begin; t < splits.val_end && t < f.v_hat.size(); ++t) {
            if (!std::isfinite(f.v_hat[t]) || t >= rv.size()) continue;
            const double vf = std::max(f.v_hat[t], kVarianceMetricFloor);
            const double rf = std::max(rv[t], kVarianceMetricFloor);
            const double ratio = rf / vf;
            ql += ratio - std::log(ratio) - 1.0;
            ++cnt;
        }
        if (cnt == 0) continue;
        ql /= static_cast<double>(cnt);
        if (ql < best_q) {
            best_q = ql;
            best_cj = cj;
        }
    }
    if (!std::isfinite(best_cj))
        throw data_error("forecast: no valid validation decision times for tuning c_J");
    return best_cj;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

std::vector<double> constant_variance_forecast(const std::vector<double>& x_hat, std::size_t h,
                                               std::size_t fit_begin, std::size_t fit_end) {
    check_series(x_hat, h + 1, "constant-variance forecast");
    check_fit_range(x_hat.size(), fit_begin, fit_end, "constant-variance forecast");
    double m2 = 0.0;
    std::size_t cnt = 0;
    for (std::size_t u = fit_begin + 1; u < fit_end; ++u) {
        const double d = x_hat[u] - x_hat[u - 1];
        m2 += d * d;
        ++cnt;
    }
    m2 /= static_cast<double>(cnt);
    return std::vector<double>(x_hat.size() - h, static_cast<double>(h) * m2);
}

wf_fit fit_wf(const std::vector<double>& p_hat, double dt, std::size_t fit_begin,
              std::size_t fit_end) {
    if (!(dt > 0.0)) throw config_error("probability-diffusion fit: dt must be positive");
    check_fit_range(p_hat.size(), fit_begin, fit_end, "probability-diffusion fit");
    double m2 = 0.0, level = 0.0, pmean = 0.0;
    std::size_t cnt = 0;
    for (std::size_t u = fit_begin + 1; u < fit_end; ++u) {
        const double d = p_hat[u] - p_hat[u - 1];
        m2 += d * d;
        level += p_hat[u - 1] * (1.0 - p_hat[u - 1]);
        ++cnt;
    }
    m2 /= static_cast<double>(cnt);
    level /= static_cast<double>(cnt);
    for (std::size_t u = fit_begin; u < fit_end; ++u) pmean += p_hat[u];
    pmean /= static_cast<double>(fit_end - fit_begin);

    wf_fit fit;
    fit.theta = pmean;
    fit.alpha = (level > 0.0) ? m2 / (2.0 * level * dt) : 0.0;

    // kappa from the lag-1 autoregression of the probability path; recorded
    // for diagnostics, the variance forecast does not use it.
    std::vector<double> lag(p_hat.begin() + static_cast<std::ptrdiff_t>(fit_begin),
                            p_hat.begin() + static_cast<std::ptrdiff_t>(fit_end - 1));
    std::vector<double> cur(p_hat.begin() + static_cast<std::ptrdiff_t>(fit_begin + 1),
                            p_hat.begin() + static_cast<std::ptrdiff_t>(fit_end));
    double c = 0.0, phi = 1.0;
    if (ols_line(lag, cur, c, phi))
        fit.kappa = (1.0 - phi) / dt;
    else
        fit.kappa = 0.0;
    return fit;
}

std::vector<double> wf_forecast(const std::vector<double>& x_hat, std::size_t h, double dt,
                                const wf_fit& fit) {
    check_series(x_hat, h + 1, "probability-diffusion forecast");
    std::vector<double> out(x_hat.size() - h);
    for (std::size_t t = 0; t < out.size(); ++t) {
        // Per-step probability variance 2*alpha*p(1-p)*dt = 2*alpha*S'(x)*dt,
        // held at the decision-time level and mapped by S'(x)^{-2}; the net
        // S'(x)^{-1} scaling explodes toward the boundaries by construction.
        const double sp = sigmoid_d1(x_hat[t]);
        out[t] = static_cast<double>(h) * 2.0 * fit.alpha * dt / sp;
    }
    return out;
}

garch_fit fit_ar_garch(const std::vector<double>& p_hat, std::size_t fit_begin,
                       std::size_t fit_end) {
    check_fit_range(p_hat.size(), fit_begin, fit_end, "ar-garch fit");
    std::vector<double> dp;
    dp.reserve(fit_end - fit_begin);
    for (std::size_t u = fit_begin + 1; u < fit_end; ++u) dp.push_back(p_hat[u] - p_hat[u - 1]);

    garch_fit fit;
    const std::size_t m = dp.size();
    if (m < 30) {
        fit.fallback = true;
        fit.warning = "ar-garch: too few increments; using fixed (a, b) = (0.05, 0.90)";
        fit.omega = 1e-12 * (1.0 - fit.a - fit.b);
        fit.uncond = 1e-12;
        return fit;
    }

    std::vector<double> lag(dp.begin(), dp.end() - 1);
    std::vector<double> cur(dp.begin() + 1, dp.end());
    if (!ols_line(lag, cur, fit.c, fit.phi)) {
        fit.c = mean(cur);
        fit.phi = 0.0;
    }

    std::vector<double> eps2(cur.size());
    double var_eps = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
        const double e = cur[i] - fit.c - fit.phi * lag[i];
        eps2[i] = e * e;
        var_eps += e * e;
    }
    var_eps /= static_cast<double>(eps2.size());

    if (!(var_eps > 0.0) || !std::isfinite(var_eps)) {
        fit.fallback = true;
        fit.warning = "ar-garch: degenerate residual variance; using fixed (a, b) = (0.05, 0.90)";
        fit.omega = 1e-12 * (1.0 - fit.a - fit.b);
        fit.uncond = 1e-12;
        return fit;
    }

    // Gaussian likelihood with variance targeting: omega tracks (a, b) so the
    // unconditional variance always matches the residual variance.
    auto nll = [&](const std::vector<double>& ab) {
        const double a = ab[0], b = ab[1];
        if (a < 1e-8 || b < 0.0 || a > 0.998 || b > 0.998 || a + b > 0.999)
            return 1e12 * (1.0 + std::abs(a) + std::abs(b));
        const double omega = var_eps * (1.0 - a - b);
        double s2 = var_eps;
        double acc = 0.0;
        for (std::size_t i = 0; i < eps2.size(); ++i) {
            acc += 0.5 * (std::log(s2) + eps2[i] / s2);
            s2 = omega + a * eps2[i] + b * s2;
        }
        return acc;
    };

    const std::vector<double> start{0.05, 0.90};
    const double start_nll = nll(start);
    const std::vector<double> best = nelder_mead(nll, start, 0.04, 400);
    const double best_nll = nll(best);
    const bool ok = std::isfinite(best_nll) && best_nll <= start_nll + 1e-9 &&
                    best[0] >= 1e-8 && best[1] >= 0.0 && best[0] + best[1] <= 0.999;
    if (ok) {
        fit.a = best[0];
        fit.b = best[1];
    } else {
        fit.fallback = true;
        fit.warning = "ar-garch: variance fit did not converge; using fixed (a, b) = (0.05, 0.90)";
    }
    fit.omega = var_eps * (1.0 - fit.a - fit.b);
    fit.uncond = var_eps;
    return fit;
}

std::vector<double> garch_forecast(const std::vector<double>& x_hat,
                                   const std::vector<double>& p_hat, std::size_t h,
                                   const garch_fit& fit) {
    check_series(x_hat, h + 1, "ar-garch forecast");
    if (p_hat.size() != x_hat.size())
        throw data_error("ar-garch forecast: probability and logit series lengths differ");
    const std::size_t n = x_hat.size();

    // Causal conditional-variance recursion across the whole series; the
    // residual at u needs the lagged increment, so the recursion starts at
    // the unconditional level.
    std::vector<double> eps2(n, 0.0), sig2(n, fit.uncond);
    for (std::size_t u = 2; u < n; ++u) {
        const double dp = p_hat[u] - p_hat[u - 1];
        const double dpl = p_hat[u - 1] - p_hat[u - 2];
        const double e = dp - fit.c - fit.phi * dpl;
        eps2[u] = e * e;
        if (u + 1 < n) sig2[u + 1] = fit.omega + fit.a * eps2[u] + fit.b * sig2[u];
    }

    std::vector<double> out(n - h);
    for (std::size_t t = 0; t < out.size(); ++t) {
        double f = (t >= 2) ? fit.omega + fit.a * eps2[t] + fit.b * sig2[t] : fit.uncond;
        double vp = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
            vp += f;
            f = fit.omega + (fit.a + fit.b) * f;
        }
        const double sp = sigmoid_d1(x_hat[t]);
        out[t] = vp / (sp * sp);
    }
    return out;
}

baseline_forecasts_result baseline_forecasts(const std::vector<double>& x_hat,
                                             const split_ranges& splits, std::size_t h,
                                             double dt) {
    baseline_forecasts_result r;
    r.rw_logit = constant_variance_forecast(x_hat, h, splits.train_begin, splits.train_end);
    r.const_sigma = constant_variance_forecast(x_hat, h, splits.train_begin, splits.val_end);

    std::vector<double> p_hat(x_hat.size());
    for (std::size_t i = 0; i < x_hat.size(); ++i) p_hat[i] = sigmoid(x_hat[i]);

    r.wf = fit_wf(p_hat, dt, splits.train_begin, splits.train_end);
    r.wf_jacobi = wf_forecast(x_hat, h, dt, r.wf);
    r.garch = fit_ar_garch(p_hat, splits.train_begin, splits.train_end);
    r.ar_garch = garch_forecast(x_hat, p_hat, h, r.garch);
    return r;
}

// ---------------------------------------------------------------------------
// Records, metrics, bench driver
// ---------------------------------------------------------------------------

const char* to_string(forecast_regime r) {
    return r == forecast_regime::jump_window ? "jump-window" : "quiet";
}

std::vector<forecast_regime> regime_labels(std::size_t n_samples, std::size_t h, double dt,
                                           const std::vector<schedule_entry>& schedule,
                                           const std::vector<double>& gamma, double tau_J,
                                           double radius_s) {
    if (n_samples <= h) throw data_error("regime labels: series shorter than the horizon");
    if (!(dt > 0.0) || !(radius_s >= 0.0))
        throw config_error("regime labels: dt must be positive and radius nonnegative");
    const std::size_t n_dec = n_samples - h;
    std::vector<forecast_regime> labels(n_dec, forecast_regime::quiet);

    for (const auto& e : schedule) {
        const double lo = (e.center - radius_s) / dt;
        const double hi = (e.center + radius_s) / dt;
        const auto t_lo = static_cast<std::size_t>(std::max(0.0, std::ceil(lo)));
        if (hi < 0.0) continue;
        const auto t_hi = static_cast<std::size_t>(std::floor(hi));
        for (std::size_t t = t_lo; t <= t_hi && t < n_dec; ++t)
            labels[t] = forecast_regime::jump_window;
    }

    if (!gamma.empty()) {
        std::vector<std::size_t> flag_prefix(gamma.size() + 1, 0);
        for (std::size_t u = 0; u < gamma.size(); ++u)
            flag_prefix[u + 1] =
                flag_prefix[u] + ((std::isfinite(gamma[u]) && gamma[u] > tau_J) ? 1u : 0u);
        const auto radius = static_cast<std::size_t>(std::llround(radius_s / dt));
        for (std::size_t t = 0; t < n_dec; ++t) {
            const std::size_t lo = (t >= radius) ? t - radius : 0;
            const std::size_t hi = std::min(t + radius + 1, gamma.size());
            if (lo < hi && flag_prefix[hi] > flag_prefix[lo])
                labels[t] = forecast_regime::jump_window;
        }
    }
    return labels;
}

nlohmann::json metric_block::to_json() const {
    return nlohmann::json{{"mse", mse}, {"mae", mae}, {"log_mse", log_mse},
                          {"qlike", qlike}, {"n", n}};
}

nlohmann::json metric_report::to_json() const {
    return nlohmann::json{{"model", model},
                          {"overall", overall.to_json()},
                          {"quiet", quiet.to_json()},
                          {"jump_window", jump_window.to_json()}};
}

metric_report evaluate(const std::vector<forecast_record>& records, const std::string& model_id) {
    if (records.empty())
        throw data_error("evaluate: no decision times for model '" + model_id + "'");
    metric_report rep;
    rep.model = model_id;
    std::vector<const forecast_record*> all, quiet, jumpw;
    all.reserve(records.size());
    for (const auto& r : records) {
        all.push_back(&r);
        (r.regime == forecast_regime::quiet ? quiet : jumpw).push_back(&r);
    }
    rep.overall = accumulate_metrics(all);
    rep.quiet = accumulate_metrics(quiet);
    rep.jump_window = accumulate_metrics(jumpw);
    return rep;
}

std::vector<forecast_record> make_records(const std::vector<double>& v_hat,
                                          const std::vector<double>& rv,
                                          const std::vector<forecast_regime>& regimes, double dt,
                                          std::size_t begin, std::size_t end) {
    if (rv.size() != v_hat.size() || regimes.size() != v_hat.size())
        throw data_error("forecast records: forecast, realized, and regime lengths differ");
    std::vector<forecast_record> out;
    for (std::size_t t = begin; t < end && t < v_hat.size(); ++t) {
        if (!std::isfinite(v_hat[t])) continue;
        out.push_back({static_cast<double>(t) * dt, v_hat[t], rv[t], regimes[t]});
    }
    return out;
}

void bench_config::validate() const {
    task.validate();
    stream.validate();
    if (task.dt != stream.dt)
        throw config_error("bench: task and calibration stream must share the grid spacing");
}

nlohmann::json bench_result::to_json() const {
    nlohmann::json models_json = nlohmann::json::array();
    for (const auto& m : models) {
        models_json.push_back(nlohmann::json{{"model", m.model},
                                             {"metrics", m.report.to_json()},
                                             {"skipped", m.skipped}});
    }
    nlohmann::json j{
        {"c_J", c_J},
        {"decision_count", decision_count},
        {"models", models_json},
        {"splits",
         {{"train", {splits.train_begin, splits.train_end}},
          {"val", {splits.val_begin, splits.val_end}},
          {"test", {splits.test_begin, splits.test_end}}}},
        {"wf", {{"alpha", wf.alpha}, {"kappa", wf.kappa}, {"theta", wf.theta}}},
        {"garch",
         {{"c", garch.c},
          {"phi", garch.phi},
          {"omega", garch.omega},
          {"a", garch.a},
          {"b", garch.b},
          {"fallback", garch.fallback}}}};
    if (!garch.warning.empty()) j["garch"]["warning"] = garch.warning;
    return j;
}

bench_result run_bench(const std::vector<double>& x_hat, const bench_config& cfg,
                       jump_family family) {
    cfg.validate();
    const std::size_t h = cfg.task.h;
    check_series(x_hat, std::max<std::size_t>(3 * h + 3, 32), "bench");
    const std::size_t n = x_hat.size();

    bench_result res;
    res.splits = contiguous_thirds(n, h);
    res.rv = realized_variance(x_hat, h);

    const calib_stream stream = causal_calibration_stream(x_hat, cfg.stream, family);
    res.regimes = regime_labels(n, h, cfg.task.dt, cfg.task.schedule, stream.gamma,
                                cfg.stream.tau_J);

    res.c_J = tune_cj(stream, cfg.task, res.rv, res.splits, cfg.rn);
    const forecast_series rnjd = rn_jd_forecast(stream, cfg.task, res.c_J, cfg.rn);
    const baseline_forecasts_result base = baseline_forecasts(x_hat, res.splits, h, cfg.task.dt);
    res.wf = base.wf;
    res.garch = base.garch;

    // All models are scored on the identical test-slice decision times where
    // every forecast is available.
    std::vector<std::pair<std::string, const std::vector<double>*>> series{
        {"rn_jd", &rnjd.v_hat},
        {"rw_logit", &base.rw_logit},
        {"const_sigma", &base.const_sigma},
        {"wf_jacobi", &base.wf_jacobi},
        {"ar_garch", &base.ar_garch}};

    std::vector<std::size_t> common;
    for (std::size_t t = res.splits.test_begin; t < res.splits.test_end; ++t) {
        bool ok = true;
        for (const auto& s : series)
            if (t >= s.second->size() || !std::isfinite((*s.second)[t])) {
                ok = false;
                break;
            }
        if (ok) common.push_back(t);
    }
    if (common.empty()) throw data_error("bench: no jointly valid test decision times");
    res.decision_count = common.size();

    for (const auto& s : series) {
        bench_model_result mr;
        mr.model = s.first;
        mr.v_hat = *s.second;
        std::vector<forecast_record> recs;
        recs.reserve(common.size());
        for (std::size_t t : common)
            recs.push_back({static_cast<double>(t) * cfg.task.dt, (*s.second)[t], res.rv[t],
                            res.regimes[t]});
        mr.report = evaluate(recs, s.first);
        for (std::size_t t = res.splits.test_begin; t < res.splits.test_end; ++t)
            if (t >= s.second->size() || !std::isfinite((*s.second)[t])) ++mr.skipped;
        res.models.push_back(std::move(mr));
    }
    return res;
}

void write_forecast_csv(const std::string& path, const std::vector<forecast_record>& records,
                        const std::string& manifest_id) {
    csv_writer w(path, manifest_id, {"t", "v_hat", "rv", "regime"});
    for (const auto& r : records) w.write_row(r.t, r.v_hat, r.rv, to_string(r.regime));
}

} // namespace oddskit
