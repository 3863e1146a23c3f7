#include "oddskit/kalman.hpp"

#include <cmath>
#include <limits>

#include "oddskit/errors.hpp"
#include "oddskit/stats.hpp"

namespace oddskit {

namespace {
// 1% critical values of chi-square with 10 and 20 degrees of freedom.
constexpr double kChi2Crit10 = 23.209251158954;
constexpr double kChi2Crit20 = 37.566234786625;
} // namespace

filter_output kalman_filter_smoother(const std::vector<double>& y,
                                     const std::vector<double>& meas_var, double dt,
                                     const std::vector<double>* drift,
                                     const std::vector<double>* proc_var,
                                     const std::vector<std::uint8_t>* halted,
                                     bool causal_proxy) {
    const std::size_t n = y.size();
    if (n == 0) throw data_error("kalman: empty series");
    if (meas_var.size() != n) throw data_error("kalman: meas_var length mismatch");
    for (double r : meas_var)
        if (r < 0.0 || !std::isfinite(r)) throw data_error("kalman: meas_var must be >= 0");
    if (drift && drift->size() != n) throw data_error("kalman: drift length mismatch");
    if (proc_var && proc_var->size() != n) throw data_error("kalman: proc_var length mismatch");
    if (halted && halted->size() != n) throw data_error("kalman: halt mask length mismatch");

    // Process-noise proxy: rolling variance of dy (per-step increments).
    std::vector<double> q(n, 0.0);
    if (proc_var) {
        q = *proc_var;
    } else if (n > 1) {
        std::vector<double> dy(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) dy[i] = y[i + 1] - y[i];
        std::vector<double> rv = rolling_variance(dy, kProcVarProxyWindow, !causal_proxy);
        for (std::size_t i = 0; i + 1 < n; ++i) q[i] = rv[i];
        q[n - 1] = rv.empty() ? 0.0 : rv.back();
    }

    filter_output out;
    out.x_hat.resize(n);
    out.var_hat.resize(n);
    out.filt_x.resize(n);
    out.filt_var.resize(n);
    out.innovations.assign(n > 0 ? n - 1 : 0, 0.0);
    out.innovation_var.assign(n > 0 ? n - 1 : 0, std::numeric_limits<double>::infinity());

    // Effective per-step transition (identity during halts) kept for the
    // smoother pass.
    std::vector<double> eff_q(n, 0.0), eff_d(n, 0.0);

    // Diffuse start: posterior after the first observation is (y0, r0).
    double m = y[0];
    double P = meas_var[0];
    out.filt_x[0] = m;
    out.filt_var[0] = P;
    bool in_halt = halted && (*halted)[0];

    constexpr double tiny = 1e-300;
    for (std::size_t u = 1; u < n; ++u) {
        const bool halt_now = halted && (*halted)[u];
        if (halt_now) {
            // freeze: no prediction, no update
            eff_q[u - 1] = 0.0;
            eff_d[u - 1] = 0.0;
            out.filt_x[u] = m;
            out.filt_var[u] = P;
            in_halt = true;
            continue;
        }
        if (in_halt) {
            P *= 10.0; // re-open with a wider prior
            in_halt = false;
        }
        const double d = drift ? (*drift)[u - 1] * dt : 0.0;
        eff_d[u - 1] = d;
        eff_q[u - 1] = q[u - 1];
        const double m_pred = m + d;
        const double P_pred = P + q[u - 1];
        const double F = P_pred + meas_var[u];
        const double e = y[u] - m_pred;
        out.innovations[u - 1] = e;
        out.innovation_var[u - 1] = F;
        const double K = (F > tiny) ? P_pred / F : 1.0;
        m = m_pred + K * e;
        P = (1.0 - K) * P_pred;
        if (F > tiny) out.loglik += -0.5 * (std::log(2.0 * M_PI * F) + e * e / F);
        out.filt_x[u] = m;
        out.filt_var[u] = P;
    }

    // RTS backward pass.
    out.x_hat[n - 1] = out.filt_x[n - 1];
    out.var_hat[n - 1] = out.filt_var[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        const double Pu = out.filt_var[i];
        const double Ppred = Pu + eff_q[i];
        const double C = (Ppred > tiny) ? Pu / Ppred : 0.0;
        out.x_hat[i] = out.filt_x[i] + C * (out.x_hat[i + 1] - (out.filt_x[i] + eff_d[i]));
        out.var_hat[i] = Pu + C * C * (out.var_hat[i + 1] - Ppred);
        if (out.var_hat[i] < 0.0) out.var_hat[i] = 0.0;
    }
    return out;
}

residual_report residual_diagnostics(const filter_output& fo,
                                     const std::vector<std::uint8_t>* jump_flags) {
    if (fo.innovations.size() < 100) throw data_error("diagnostics: need at least 100 innovations");
    if (jump_flags && jump_flags->size() != fo.innovations.size())
        throw data_error("diagnostics: jump flag mask length mismatch");

    std::vector<double> z;
    z.reserve(fo.innovations.size());
    std::vector<double> z_nonjump;
    for (std::size_t i = 0; i < fo.innovations.size(); ++i) {
        const double F = fo.innovation_var[i];
        if (!std::isfinite(F) || F <= 0.0) continue; // halted steps carry no information
        const double zi = fo.innovations[i] / std::sqrt(F);
        z.push_back(zi);
        if (!jump_flags || !(*jump_flags)[i]) z_nonjump.push_back(zi);
    }
    if (z.size() < 100) throw data_error("diagnostics: need at least 100 usable innovations");

    residual_report rep;
    if (variance(z) < 1e-30) {
        rep.degenerate = true;
        return rep;
    }
    rep.lb10 = ljung_box(z, 10);
    rep.lb20 = ljung_box(z, 20);
    rep.pass_lb10 = rep.lb10 < kChi2Crit10;
    rep.pass_lb20 = rep.lb20 < kChi2Crit20;
    double s2 = 0.0;
    for (double v : z) s2 += v * v;
    rep.variance_ratio = s2 / static_cast<double>(z.size());
    rep.excess_kurt_nonjump = excess_kurtosis(z_nonjump);
    return rep;
}

} // namespace oddskit
