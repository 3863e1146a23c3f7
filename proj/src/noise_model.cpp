#include "oddskit/noise_model.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "oddskit/errors.hpp"
#include "oddskit/kalman.hpp"
#include "oddskit/stats.hpp"

namespace oddskit {

std::vector<double> noise_variance(const uniform_series& s, const noise_model_coeffs& c) {
    if (!(c.clamp_lo > 0.0) || !(c.clamp_hi > c.clamp_lo))
        throw config_error("noise model: need 0 < clamp_lo < clamp_hi");
    const std::size_t n = s.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double sp = s.spread[i], dinv = s.inv_depth[i], r = s.trade_rate[i],
                     io = s.imbalance[i];
        if (!std::isfinite(sp) || !std::isfinite(dinv) || !std::isfinite(r) || !std::isfinite(io))
            throw data_error("noise model: non-finite covariate");
        const double v = c.a0 + c.a1 * sp * sp + c.a2 * dinv + c.a3 * r + c.a4 * io * io;
        out[i] = std::clamp(v, c.clamp_lo, c.clamp_hi);
    }
    return out;
}

noise_model_coeffs fit_noise_model(const uniform_series& s, const std::vector<double>& targets,
                                   double clamp_lo, double clamp_hi) {
    const std::size_t n = s.size();
    if (targets.size() != n) throw data_error("noise fit: target length mismatch");
    if (n < 20) throw data_error("noise fit: too few observations");

    Eigen::MatrixXd X(n, 5);
    Eigen::VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = s.spread[i] * s.spread[i];
        X(i, 2) = s.inv_depth[i];
        X(i, 3) = s.trade_rate[i];
        X(i, 4) = s.imbalance[i] * s.imbalance[i];
        if (!X.row(i).allFinite() || !std::isfinite(targets[i]))
            throw data_error("noise fit: non-finite input");
        z(i) = targets[i];
    }

    // Huber IRLS.  Variance targets have level-proportional dispersion, so
    // residuals are standardized by the fitted level before the MAD scale and
    // the k = 2.5 cutoff are applied — a pooled absolute scale would write
    // off every high-variance-regime point as an outlier.
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(5);
    std::vector<double> absz(n);
    for (std::size_t i = 0; i < n; ++i) absz[i] = std::abs(z(i));
    const double level_floor = std::max(1e-12, 0.1 * median(absz));
    for (int iter = 0; iter < 15; ++iter) {
        Eigen::MatrixXd Xw = w.asDiagonal() * X;
        Eigen::MatrixXd A = X.transpose() * Xw;
        A.diagonal().array() += 1e-12; // keep the normal equations invertible
        beta = A.ldlt().solve(Xw.transpose() * z);
        Eigen::VectorXd fit = X * beta;
        std::vector<double> u(n);
        for (std::size_t i = 0; i < n; ++i)
            u[i] = (z(i) - fit(i)) / std::max(fit(i), level_floor);
        std::vector<double> absu(n);
        for (std::size_t i = 0; i < n; ++i) absu[i] = std::abs(u[i]);
        const double scale = 1.4826 * median(absu);
        if (scale < 1e-300) break;
        const double k = 2.5 * scale;
        for (std::size_t i = 0; i < n; ++i)
            w(i) = (std::abs(u[i]) <= k) ? 1.0 : k / std::abs(u[i]);
    }

    noise_model_coeffs c;
    c.a0 = beta(0);
    c.a1 = beta(1);
    c.a2 = beta(2);
    c.a3 = beta(3);
    c.a4 = beta(4);
    c.clamp_lo = clamp_lo;
    c.clamp_hi = clamp_hi;
    return c;
}

noise_model_coeffs fit_noise_from_series(const uniform_series& s, double clamp_lo,
                                         double clamp_hi) {
    const std::size_t n = s.size();
    if (n < kProcVarProxyWindow) throw data_error("noise fit: series too short for the pilot");

    // High-gain pilot: the one-step innovations are e_u = dy_u.  Adjacent
    // products isolate the noise: E[-e_u e_{u+1}] = sigma_eta^2(u+1) exactly,
    // whatever the process variance does.  A short moving average tames the
    // skew of the per-step products so the Huber weights don't center on the
    // median of a lopsided distribution.
    std::vector<double> dy(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) dy[i] = s.y[i + 1] - s.y[i];
    std::vector<double> targets(n, 0.0);
    constexpr std::size_t w = 9; // short-horizon averaging window (steps)
    for (std::size_t u = 1; u + 1 < n; ++u) {
        double acc = 0.0;
        std::size_t cnt = 0;
        const std::size_t lo = (u >= 1 + w / 2) ? u - 1 - w / 2 : 0;
        for (std::size_t k = lo; k < lo + w && k + 1 < dy.size(); ++k) {
            acc += -dy[k] * dy[k + 1];
            ++cnt;
        }
        targets[u] = cnt ? acc / static_cast<double>(cnt) : 0.0;
    }
    if (n >= 3) {
        targets[0] = targets[1];
        targets[n - 1] = targets[n - 2];
    }
    return fit_noise_model(s, targets, clamp_lo, clamp_hi);
}

} // namespace oddskit
