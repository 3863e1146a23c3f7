// ---------------------------------------------------------------------------
// EM mixture separation: posterior jump responsibilities on filtered logit
// increments, weighted-moment parameter updates (global + rolling windows),
// risk-neutral drift enforcement, and the outer calibrate loop that re-runs
// the smoother with model-consistent drift and process variance.
// ---------------------------------------------------------------------------

#include "oddskit/em.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "oddskit/errors.hpp"
#include "oddskit/logistic.hpp"
#include "oddskit/stats.hpp"

namespace oddskit {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kPi = 3.14159265358979323846;

// Minimum effective jump count (sum of responsibilities) a rolling window
// needs before its local jump-scale estimates are trusted over the pooled
// ones; below this the window inherits.
constexpr double kMinJumpMass = 2.0;

double normal_pdf(double x, double mean, double var) {
    if (var <= 0.0) return (x == mean) ? std::numeric_limits<double>::infinity() : 0.0;
    const double z = (x - mean) * (x - mean) / var;
    return std::exp(-0.5 * z) / std::sqrt(2.0 * kPi * var);
}

// Jump density for increment u, from the covering window's fitted law.  The
// law is anchored by pooled estimates rather than rescaled per step, which
// keeps the jump component from drifting into the diffusive band.
double jump_density_at(const mixture_estimates& est, std::size_t u, double z) {
    return est.law_at(u).density(z);
}

struct window_frame {
    std::vector<std::size_t> start;
    std::size_t width = 0;
};

// 50%-overlapping windows of `width` over n increments; the last window is
// pinned to the end so every increment is covered.
window_frame make_windows(std::size_t n, std::size_t width) {
    window_frame f;
    f.width = std::min(width, n);
    const std::size_t stride = std::max<std::size_t>(1, f.width / 2);
    std::size_t s = 0;
    while (true) {
        f.start.push_back(s);
        if (s + f.width >= n) break;
        s += stride;
        if (s + f.width > n) s = n - f.width;
    }
    return f;
}

struct window_stats {
    double sigma_b2 = 0.0;
    double lambda = 0.0;
    double sJ2 = 0.0;
    double sum_g = 0.0;
    jump_law law;
    bool degenerate = false; // no diffusive weight at all
};

window_stats span_moments(const std::vector<double>& dx, const std::vector<double>& mu,
                          const std::vector<double>& gamma, std::size_t begin,
                          std::size_t end, double dt, jump_family family,
                          const jump_law& fallback_law) {
    window_stats w;
    w.law = fallback_law;
    w.law.family = family;
    double sum_g = 0.0, sum_1mg = 0.0, sum_diff = 0.0, sum_jump = 0.0;
    double up_w = 0.0, up_s = 0.0, dn_w = 0.0, dn_s = 0.0;
    for (std::size_t u = begin; u < end; ++u) {
        const double g = gamma[u];
        const double m = mu.empty() ? 0.0 : mu[u] * dt;
        sum_g += g;
        sum_1mg += 1.0 - g;
        sum_diff += (1.0 - g) * (dx[u] - m) * (dx[u] - m);
        sum_jump += g * dx[u] * dx[u];
        if (dx[u] > 0.0) { up_w += g; up_s += g * dx[u]; }
        else if (dx[u] < 0.0) { dn_w += g; dn_s += g * (-dx[u]); }
    }
    const double n_steps = static_cast<double>(end - begin);
    w.sum_g = sum_g;
    if (sum_1mg <= 1e-12) { w.degenerate = true; return w; }
    w.sigma_b2 = sum_diff / (sum_1mg * dt);
    // Guard: the mixture weight lambda*dt must stay a probability.
    w.lambda = std::min((sum_g / n_steps) / dt, 0.5 / dt);
    w.sJ2 = (sum_g > 0.0) ? sum_jump / sum_g : 0.0;
    if (sum_g <= 1e-12) return w; // no jump mass: fallback law shape, sJ2 = 0
    switch (family) {
        case jump_family::symmetric_gaussian:
            w.law.sd = std::sqrt(std::max(w.sJ2, 1e-12));
            break;
        case jump_family::double_exponential:
            // Per-side exponential means from responsibility-weighted moments.
            if (up_w > 1e-12 && up_s > 0.0) w.law.eta_up = up_w / up_s;
            if (dn_w > 1e-12 && dn_s > 0.0) w.law.eta_dn = dn_w / dn_s;
            break;
        case jump_family::empirical_bins: {
            // Responsibility-weighted histogram over symmetric support.
            double zmax = 0.0;
            for (std::size_t u = begin; u < end; ++u)
                if (gamma[u] > 0.5) zmax = std::max(zmax, std::abs(dx[u]));
            if (zmax <= 0.0) break;
            constexpr int kBins = 12;
            std::vector<double> edges(kBins + 1), masses(kBins, 1e-9);
            for (int b = 0; b <= kBins; ++b)
                edges[b] = -zmax + 2.0 * zmax * b / kBins;
            for (std::size_t u = begin; u < end; ++u) {
                const double z = dx[u];
                if (std::abs(z) > zmax) continue;
                int b = static_cast<int>((z + zmax) / (2.0 * zmax) * kBins);
                b = std::clamp(b, 0, kBins - 1);
                masses[static_cast<std::size_t>(b)] += gamma[u];
            }
            double total = 0.0;
            for (double m : masses) total += m;
            for (double& m : masses) m /= total;
            w.law.bin_edges = edges;
            w.law.bin_masses = masses;
            break;
        }
    }
    return w;
}

} // namespace

void em_config::validate() const {
    if (!(dt > 0.0)) throw config_error("em: dt must be positive");
    if (global_steps < 1) throw config_error("em: global_steps must be >= 1");
    if (rolling_window < 30.0 * dt)
        throw config_error("em: rolling_window must span at least 30 steps");
    if (!(tau_J > 0.5 && tau_J < 1.0)) throw config_error("em: tau_J must lie in (0.5, 1)");
    if (outer_loops < 1) throw config_error("em: outer_loops must be >= 1");
    if (!(tol > 0.0)) throw config_error("em: tol must be positive");
    if (window_iters < 1) throw config_error("em: window_iters must be >= 1");
    if (!(drift_ewma_halflife > 0.0)) throw config_error("em: drift half-life must be positive");
}

void mixture_estimates::validate(double dt) const {
    const std::size_t n = sigma_b2.size();
    if (lambda.size() != n || sJ2.size() != n)
        throw config_error("em: estimate arrays must share length");
    for (std::size_t u = 0; u < n; ++u) {
        if (!(sigma_b2[u] >= 0.0) || !(sJ2[u] >= 0.0) || !(lambda[u] >= 0.0))
            throw config_error("em: estimates must be nonnegative");
        if (lambda[u] * dt >= 1.0) throw config_error("em: lambda*dt must be < 1");
    }
    if (window_center.size() != window_law.size())
        throw config_error("em: window skeleton size mismatch");
}

jump_law mixture_estimates::law_at(std::size_t u) const {
    if (window_law.empty()) {
        jump_law law;
        law.family = family;
        return law;
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < window_center.size(); ++k) {
        const double d = std::abs(window_center[k] - static_cast<double>(u));
        if (d < best_d) { best_d = d; best = k; }
    }
    return window_law[best];
}

responsibilities e_step(const std::vector<double>& dx, const std::vector<double>& mu,
                        const mixture_estimates& est, double dt, double tau_J) {
    const std::size_t n = dx.size();
    if (est.sigma_b2.size() != n) throw config_error("em: estimate/increment length mismatch");
    if (!mu.empty() && mu.size() != n) throw config_error("em: drift/increment length mismatch");
    responsibilities resp;
    resp.tau_J = tau_J;
    resp.gamma.resize(n);
    resp.jump_flags.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
        const double lamdt = std::clamp(est.lambda[u] * dt, 0.0, 0.95);
        double g;
        if (lamdt <= 0.0) {
            g = 0.0;
        } else {
            const double m = mu.empty() ? 0.0 : mu[u] * dt;
            const double phi = normal_pdf(dx[u], m, std::max(est.sigma_b2[u] * dt, 1e-30));
            // The drift rides on jump steps too, so the jump density is
            // evaluated at the drift-adjusted increment; this also makes the
            // responsibilities exactly location-equivariant.
            const double psi = jump_density_at(est, u, dx[u] - m);
            const double num = lamdt * psi;
            const double den = num + (1.0 - lamdt) * phi;
            if (den <= kTiny) {
                g = 0.5; // both densities underflow: no information in this step
                resp.degenerate_warning = true;
            } else {
                g = num / den;
            }
        }
        resp.gamma[u] = g;
        resp.jump_flags[u] = (g > tau_J) ? 1 : 0;
    }
    return resp;
}

mixture_estimates m_step(const std::vector<double>& dx, const std::vector<double>& mu,
                         const responsibilities& resp, double window_s, double dt,
                         jump_family family) {
    const std::size_t n = dx.size();
    if (resp.gamma.size() != n) throw config_error("em: gamma/increment length mismatch");
    if (n == 0) throw data_error("em: no increments");
    const auto width = static_cast<std::size_t>(std::llround(window_s / dt));
    if (std::min(width, n) < 30) throw data_error("em: window must span at least 30 steps");

    mixture_estimates est;
    est.family = family;
    est.sigma_b2.resize(n);
    est.lambda.resize(n);
    est.sJ2.resize(n);

    jump_law seed_law;
    seed_law.family = family;

    // Pooled moments anchor the jump-law shape: most rolling windows hold
    // well under one expected jump, so their local scale fits are noise.
    const window_stats pooled =
        span_moments(dx, mu, resp.gamma, 0, n, dt, family, seed_law);
    if (pooled.degenerate)
        throw data_error("em: diffusive-degenerate window (all mass on jumps)");

    const window_frame frame = make_windows(n, width);
    std::vector<window_stats> ws;
    ws.reserve(frame.start.size());
    for (std::size_t k = 0; k < frame.start.size(); ++k) {
        window_stats w = span_moments(dx, mu, resp.gamma, frame.start[k],
                                      frame.start[k] + frame.width, dt, family, pooled.law);
        if (w.degenerate) {
            // No diffusive weight: inherit the previous window wholesale.
            w = ws.empty() ? pooled : ws.back();
        } else if (w.sum_g <= 1e-12) {
            // No jump weight: local diffusion and zero intensity stand, but
            // the jump scale is unestimable; carry the previous window's.
            const window_stats& src = ws.empty() ? pooled : ws.back();
            w.sJ2 = src.sJ2;
            w.law = src.law;
        } else if (w.sum_g < kMinJumpMass && frame.start.size() > 1) {
            // Too little jump mass to trust a local scale: pool it.
            w.sJ2 = pooled.sJ2;
            w.law = pooled.law;
        }
        ws.push_back(w);
    }

    std::vector<double> centers(ws.size());
    for (std::size_t k = 0; k < ws.size(); ++k)
        centers[k] = static_cast<double>(frame.start[k]) + (frame.width - 1) / 2.0;

    // Linear blending between adjacent window centers; flat beyond the ends.
    for (std::size_t u = 0; u < n; ++u) {
        const double pos = static_cast<double>(u);
        std::size_t k = 0;
        while (k + 1 < centers.size() && centers[k + 1] < pos) ++k;
        if (centers.size() == 1 || pos <= centers.front()) {
            est.sigma_b2[u] = ws.front().sigma_b2;
            est.lambda[u] = ws.front().lambda;
            est.sJ2[u] = ws.front().sJ2;
        } else if (pos >= centers.back()) {
            est.sigma_b2[u] = ws.back().sigma_b2;
            est.lambda[u] = ws.back().lambda;
            est.sJ2[u] = ws.back().sJ2;
        } else {
            const double t = (pos - centers[k]) / (centers[k + 1] - centers[k]);
            est.sigma_b2[u] = (1.0 - t) * ws[k].sigma_b2 + t * ws[k + 1].sigma_b2;
            est.lambda[u] = (1.0 - t) * ws[k].lambda + t * ws[k + 1].lambda;
            est.sJ2[u] = (1.0 - t) * ws[k].sJ2 + t * ws[k + 1].sJ2;
        }
    }
    est.window_center = centers;
    for (const auto& w : ws) est.window_law.push_back(w.law);
    return est;
}

double mixture_loglik(const std::vector<double>& dx, const std::vector<double>& mu,
                      const mixture_estimates& est, double dt) {
    double ll = 0.0;
    for (std::size_t u = 0; u < dx.size(); ++u) {
        const double lamdt = std::clamp(est.lambda[u] * dt, 0.0, 0.95);
        const double m = mu.empty() ? 0.0 : mu[u] * dt;
        const double phi = normal_pdf(dx[u], m, std::max(est.sigma_b2[u] * dt, 1e-30));
        const double psi = (lamdt > 0.0) ? jump_density_at(est, u, dx[u] - m) : 0.0;
        ll += std::log(std::max(lamdt * psi + (1.0 - lamdt) * phi, kTiny));
    }
    return ll;
}

std::vector<double> enforce_rn_drift(const std::vector<double>& x_hat,
                                     const mixture_estimates& est, const em_config& cfg) {
    if (x_hat.size() < 2) throw data_error("em: drift needs at least two states");
    const std::size_t n = x_hat.size() - 1;
    if (est.sigma_b2.size() != n) throw config_error("em: estimate/state length mismatch");
    std::vector<double> mu(n);
    kernel_params kp;
    kp.param_dt = cfg.dt;
    kp.sigma_b.resize(1);
    kp.lambda.resize(1);
    for (std::size_t u = 0; u < n; ++u) {
        kp.sigma_b[0] = std::sqrt(std::max(est.sigma_b2[u], 0.0));
        kp.lambda[0] = est.lambda[u];
        kp.law = est.law_at(u);
        if (est.family == jump_family::symmetric_gaussian)
            kp.law.sd = std::sqrt(std::max(est.sJ2[u], 1e-30));
        mu[u] = rn_drift(kp, x_hat[u], 0.0);
    }
    return ewma(mu, cfg.drift_ewma_halflife / cfg.dt);
}

calibration_result calibrate(const uniform_series& series, const std::vector<double>& meas_var,
                             const em_config& cfg, jump_family family) {
    cfg.validate();
    const std::size_t n_obs = series.y.size();
    if (n_obs < 31) throw data_error("em: need at least 31 observations");
    if (meas_var.size() != n_obs) throw data_error("em: meas_var length mismatch");

    calibration_result out;

    // Pilot smoother with the default process-variance proxy.
    filter_output fo = kalman_filter_smoother(series, meas_var);
    std::vector<double> x_hat = fo.x_hat;

    auto increments = [](const std::vector<double>& x) {
        std::vector<double> d(x.size() - 1);
        for (std::size_t u = 0; u + 1 < x.size(); ++u) d[u] = x[u + 1] - x[u];
        return d;
    };
    std::vector<double> dx = increments(x_hat);
    const std::size_t n = dx.size();

    // Robust initialization: MAD-based diffusion scale, then a 4-sigma
    // threshold pre-detection to seed intensity and jump scale inside the
    // separated basin (a diffuse start lets the jump component swallow the
    // diffusive tail and EM stalls in a merged local optimum).
    std::vector<double> adx(n);
    const double med = median(dx);
    for (std::size_t u = 0; u < n; ++u) adx[u] = std::abs(dx[u] - med);
    const double mad = 1.4826 * median(adx);
    const double sigma2_0 = std::max(mad * mad / cfg.dt, 1e-12);
    const double thr = 4.0 * std::sqrt(sigma2_0 * cfg.dt);
    double flag_count = 0.0, flag_m2 = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
        if (adx[u] > thr) {
            flag_count += 1.0;
            flag_m2 += (dx[u] - med) * (dx[u] - med);
        }
    }
    const double lambda_0 =
        std::max(flag_count, 0.5) / (static_cast<double>(n) * cfg.dt);
    const double sJ2_0 = (flag_count >= 2.0) ? flag_m2 / flag_count
                                             : 20.0 * sigma2_0 * cfg.dt;

    mixture_estimates est;
    est.family = family;
    est.sigma_b2.assign(n, sigma2_0);
    est.lambda.assign(n, lambda_0);
    est.sJ2.assign(n, sJ2_0);
    est.window_center = {(static_cast<double>(n) - 1.0) / 2.0};
    jump_law law0;
    law0.family = family;
    switch (family) {
        case jump_family::symmetric_gaussian: law0.sd = std::sqrt(sJ2_0); break;
        case jump_family::double_exponential:
            law0.eta_up = law0.eta_dn = std::sqrt(2.0 / sJ2_0);
            break;
        case jump_family::empirical_bins:
            law0.bin_edges = {-3.0 * std::sqrt(sJ2_0), 0.0, 3.0 * std::sqrt(sJ2_0)};
            law0.bin_masses = {0.5, 0.5};
            break;
    }
    est.window_law = {law0};

    std::vector<double> mu; // empty = zero drift on the first sweep
    responsibilities resp;
    double prev_sig = sigma2_0, prev_lam = lambda_0, prev_sj = sJ2_0;
    bool degenerate_any = false;

    auto summary_rel = [](double a_sig, double a_lam, double a_sj, double b_sig,
                          double b_lam, double b_sj) {
        auto rc = [](double a, double b) {
            return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
        };
        return std::max({rc(a_sig, b_sig), rc(a_lam, b_lam), rc(a_sj, b_sj)});
    };

    const double span_s = static_cast<double>(n) * cfg.dt;
    for (int loop = 0; loop < cfg.outer_loops; ++loop) {
        // Global phase: single-window EM with log-likelihood tracking.
        if (loop == 0) out.global_loglik.push_back(mixture_loglik(dx, mu, est, cfg.dt));
        for (int it = 0; it < cfg.global_steps; ++it) {
            resp = e_step(dx, mu, est, cfg.dt, cfg.tau_J);
            est = m_step(dx, mu, resp, span_s, cfg.dt, family);
            if (loop == 0) out.global_loglik.push_back(mixture_loglik(dx, mu, est, cfg.dt));
        }
        // Identifiability: a globally fitted jump scale inside the diffusive
        // band means the mixture degenerated to pure diffusion.
        if (mean(est.sJ2) < kMinJumpSeparation * mean(est.sigma_b2) * cfg.dt) {
            est.lambda.assign(n, 0.0);
            est.sJ2.assign(n, 0.0);
        }
        // Rolling phase: windowed EM refining local structure.
        double em_rel = std::numeric_limits<double>::infinity();
        for (int it = 0; it < cfg.window_iters; ++it) {
            resp = e_step(dx, mu, est, cfg.dt, cfg.tau_J);
            const double b_sig = mean(est.sigma_b2), b_lam = mean(est.lambda),
                         b_sj = mean(est.sJ2);
            est = m_step(dx, mu, resp, cfg.rolling_window, cfg.dt, family);
            em_rel = summary_rel(mean(est.sigma_b2), mean(est.lambda), mean(est.sJ2),
                                 b_sig, b_lam, b_sj);
        }
        resp = e_step(dx, mu, est, cfg.dt, cfg.tau_J);
        degenerate_any = degenerate_any || resp.degenerate_warning;

        // Enforce the risk-neutral drift and refresh the smoothed path with
        // model-consistent process variance (diffusion + jump contribution).
        mu = enforce_rn_drift(x_hat, est, cfg);
        std::vector<double> drift_n(n_obs, 0.0), proc_n(n_obs, 0.0);
        for (std::size_t u = 0; u < n; ++u) {
            drift_n[u] = mu[u];
            proc_n[u] = (est.sigma_b2[u] + est.lambda[u] * est.sJ2[u]) * cfg.dt;
        }
        drift_n[n_obs - 1] = drift_n[n_obs - 2];
        proc_n[n_obs - 1] = proc_n[n_obs - 2];
        fo = kalman_filter_smoother(series.y, meas_var, cfg.dt, &drift_n, &proc_n,
                                    &series.halted);
        double path_delta = 0.0;
        for (std::size_t i = 0; i < n_obs; ++i)
            path_delta = std::max(path_delta, std::abs(fo.x_hat[i] - x_hat[i]));
        x_hat = fo.x_hat;
        dx = increments(x_hat);

        out.outer_loops_used = loop + 1;
        const double m_sig = mean(est.sigma_b2);
        const double m_lam = mean(est.lambda);
        const double m_sj = mean(est.sJ2);
        const double loop_rel = summary_rel(m_sig, m_lam, m_sj, prev_sig, prev_lam, prev_sj);
        prev_sig = m_sig;
        prev_lam = m_lam;
        prev_sj = m_sj;
        // Converged when estimates stopped moving between outer loops, or when
        // EM itself settled and the refreshed path is unchanged (fixed point).
        if ((loop > 0 && loop_rel < cfg.tol) ||
            (em_rel < cfg.tol && path_delta < 1e-12)) {
            out.converged = true;
            break;
        }
    }

    // Final responsibilities aligned with the refreshed path.
    resp = e_step(dx, mu, est, cfg.dt, cfg.tau_J);
    degenerate_any = degenerate_any || resp.degenerate_warning;

    out.est = est;
    out.resp = resp;
    out.drift = mu;
    out.refreshed = fo;

    // Sanity: realized belief-space variance against the model's diffusive
    // quadratic variation plus the realized squared moves on flagged jumps.
    double realized = 0.0, model_diff = 0.0, model_jump = 0.0;
    std::size_t jump_count = 0;
    for (std::size_t u = 0; u < n; ++u) {
        const double p0 = sigmoid(x_hat[u]);
        const double p1 = sigmoid(x_hat[u + 1]);
        const double dp2 = (p1 - p0) * (p1 - p0);
        realized += dp2;
        const double sp = sigmoid_d1(x_hat[u]);
        model_diff += sp * sp * est.sigma_b2[u] * cfg.dt;
        if (resp.jump_flags[u]) {
            model_jump += dp2;
            ++jump_count;
        }
    }
    const double model_total = model_diff + model_jump;
    const double ratio = (model_total > 0.0) ? realized / model_total
                                             : std::numeric_limits<double>::quiet_NaN();
    out.sanity = nlohmann::json{
        {"realized_p_var", realized},
        {"model_p_var", model_total},
        {"model_diffusive_p_var", model_diff},
        {"model_jump_p_var", model_jump},
        {"ratio", ratio},
        {"ratio_in_range", std::isfinite(ratio) && ratio >= 0.8 && ratio <= 1.25},
        {"jump_count", jump_count},
        {"lambda_mean", mean(est.lambda)},
        {"sigma_b_mean", std::sqrt(std::max(mean(est.sigma_b2), 0.0))},
        {"sJ2_mean", mean(est.sJ2)},
        {"converged", out.converged},
        {"outer_loops_used", out.outer_loops_used},
        {"degenerate_steps", degenerate_any},
    };
    return out;
}

} // namespace oddskit
