#pragma once

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules: moments, quantiles, EWMA,
// rolling variance, Ljung–Box, and a compact Nelder–Mead for the few spots
// that need an unconstrained minimizer.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oddskit {

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t n = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + n, v.end());
    double hi = v[n];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + n - 1, v.end());
    return 0.5 * (hi + v[n - 1]);
}

// Linear-interpolated quantile, q in [0,1].
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * v[lo] + w * v[hi];
}

inline double ewma_alpha_from_halflife(double halflife_steps) {
    return 1.0 - std::exp(-std::log(2.0) / std::max(halflife_steps, 1e-9));
}

// EWMA with given half-life (in steps); output[i] uses inputs [0..i].
inline std::vector<double> ewma(const std::vector<double>& v, double halflife_steps) {
    std::vector<double> out(v.size());
    if (v.empty()) return out;
    const double a = ewma_alpha_from_halflife(halflife_steps);
    double acc = v[0];
    out[0] = acc;
    for (std::size_t i = 1; i < v.size(); ++i) {
        acc += a * (v[i] - acc);
        out[i] = acc;
    }
    return out;
}

// Rolling (windowed) sample variance. centered=true places the window
// symmetrically around i (for smoothing passes); centered=false uses the
// trailing window (..., i] only, for causal pipelines.
inline std::vector<double> rolling_variance(const std::vector<double>& v, std::size_t window,
                                            bool centered) {
    const std::size_t n = v.size();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;
    std::vector<double> cum(n + 1, 0.0), cum2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        cum[i + 1] = cum[i] + v[i];
        cum2[i + 1] = cum2[i] + v[i] * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo, hi; // [lo, hi)
        if (centered) {
            lo = (i >= window / 2) ? i - window / 2 : 0;
            hi = std::min(n, lo + window);
            lo = (hi >= window) ? hi - window : 0;
        } else {
            hi = i + 1;
            lo = (hi >= window) ? hi - window : 0;
        }
        const double cnt = static_cast<double>(hi - lo);
        if (cnt < 2) { out[i] = 0.0; continue; }
        const double s = cum[hi] - cum[lo];
        const double s2 = cum2[hi] - cum2[lo];
        out[i] = std::max(0.0, (s2 - s * s / cnt) / (cnt - 1.0));
    }
    return out;
}

inline double excess_kurtosis(const std::vector<double>& v) {
    if (v.size() < 4) return 0.0;
    const double m = mean(v);
    double s2 = 0.0, s4 = 0.0;
    for (double x : v) {
        const double d = x - m;
        s2 += d * d;
        s4 += d * d * d * d;
    }
    const double n = static_cast<double>(v.size());
    s2 /= n;
    s4 /= n;
    if (s2 <= 0.0) return 0.0;
    return s4 / (s2 * s2) - 3.0;
}

// Ljung–Box statistic on the first `lags` autocorrelations.
inline double ljung_box(const std::vector<double>& v, int lags) {
    const auto n = static_cast<double>(v.size());
    if (v.size() < static_cast<std::size_t>(lags + 2)) return 0.0;
    const double m = mean(v);
    double denom = 0.0;
    for (double x : v) denom += (x - m) * (x - m);
    if (denom <= 0.0) return 0.0;
    double stat = 0.0;
    for (int k = 1; k <= lags; ++k) {
        double num = 0.0;
        for (std::size_t i = k; i < v.size(); ++i) num += (v[i] - m) * (v[i - k] - m);
        const double rho = num / denom;
        stat += rho * rho / (n - k);
    }
    return n * (n + 2.0) * stat;
}

// Nelder–Mead simplex minimizer; good enough for the 2–3 parameter fits here.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step, int max_iter,
                                       double tol = 1e-10) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    for (std::size_t i = 0; i <= n; ++i) fv[i] = f(pts[i]);

    for (int iter = 0; iter < max_iter; ++iter) {
        // order ascending by function value
        std::vector<std::size_t> idx(n + 1);
        for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> sp(n + 1);
        std::vector<double> sf(n + 1);
        for (std::size_t i = 0; i <= n; ++i) { sp[i] = pts[idx[i]]; sf[i] = fv[idx[i]]; }
        pts = sp; fv = sf;
        if (std::abs(fv[n] - fv[0]) < tol * (std::abs(fv[0]) + tol)) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + coef * (pts[n][j] - centroid[j]);
            return p;
        };
        std::vector<double> xr = blend(-1.0);
        const double fr = f(xr);
        if (fr < fv[0]) {
            std::vector<double> xe = blend(-2.0);
            const double fe = f(xe);
            if (fe < fr) { pts[n] = xe; fv[n] = fe; } else { pts[n] = xr; fv[n] = fr; }
        } else if (fr < fv[n - 1]) {
            pts[n] = xr; fv[n] = fr;
        } else {
            std::vector<double> xc = blend(0.5);
            const double fc = f(xc);
            if (fc < fv[n]) { pts[n] = xc; fv[n] = fc; }
            else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    fv[i] = f(pts[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i) if (fv[i] < fv[best]) best = i;
    return pts[best];
}

} // namespace oddskit
