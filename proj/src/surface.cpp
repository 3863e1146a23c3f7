/*
 * Belief-surface construction.
 *
 * bin_estimates() pools per-time calibration samples into a weighted
 * (tau, m) grid: cell value is the precision-weighted mean, cell weight is
 * count x mean inverse posterior variance (which telescopes to the summed
 * inverse variances).
 *
 * fit_surface() minimizes
 *     sum_g w_g (v_g - f(tau_g, m_g))^2 + alpha * ||H f||^2
 * over a cubic tensor-product B-spline surface with the squared link
 * f = g^2, so nonnegativity is structural.  The curvature functional is
 * discretized on the grid-cell centers; the tau-curvature terms are scaled
 * down inside news windows and all terms are boosted at extreme |m|.  The
 * nonlinear problem is solved by damped Gauss-Newton (Levenberg style);
 * alpha comes from generalized cross-validation on the linearized problem
 * unless fixed; bands come from a cell bootstrap with deterministic
 * per-resample substreams.
 *
 * Axes are rescaled to [0,1] internally so the penalty (and alpha) are
 * invariant to the physical units of tau and m.
 */

#include "oddskit/surface.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "oddskit/csv.hpp"
#include "oddskit/rng.hpp"
#include "oddskit/stats.hpp"

namespace oddskit {

namespace {

constexpr double kVarFloor = 1e-12;   // posterior-variance floor for precision weights
constexpr double kHullSlack = 1e-9;   // relative slack at hull edges
constexpr std::size_t kMin2dCells = 16; // below this a 2-D fit degrades to 1-D

// One grid-cell center with its tensor basis rows in normalized coordinates.
// Cells with w == 0 carry no data residual but still anchor the curvature
// penalty so the fit stays smooth over unpopulated regions.
struct design_node {
    double w = 0.0;   // data weight
    double y = 0.0;   // target value
    double rho = 1.0; // tau-curvature relax factor (news windows)
    double edge = 1.0; // curvature boost at extreme |m|
    std::vector<double> b0, bu, bv, buu, buv, bvv;
};

struct fit_problem {
    std::size_t nb = 0;
    bool one_d = false;
    double area = 1.0; // normalized cell area (penalty quadrature weight)
    std::vector<design_node> nodes;

    std::size_t penalty_rows_per_node() const { return one_d ? 1 : 3; }

    double g_at(const design_node& n, const Eigen::VectorXd& c) const {
        double g = 0.0;
        for (std::size_t k = 0; k < nb; ++k) g += n.b0[k] * c[static_cast<Eigen::Index>(k)];
        return g;
    }

    // Penalized curvature functional of f = g^2 (news/edge weights included,
    // alpha excluded).
    double curvature(const Eigen::VectorXd& c) const {
        double acc = 0.0;
        for (const auto& n : nodes) {
            double g = 0.0, gu = 0.0, gv = 0.0, guu = 0.0, guv = 0.0, gvv = 0.0;
            for (std::size_t k = 0; k < nb; ++k) {
                const double ck = c[static_cast<Eigen::Index>(k)];
                g += n.b0[k] * ck;
                gu += n.bu[k] * ck;
                guu += n.buu[k] * ck;
                if (!one_d) {
                    gv += n.bv[k] * ck;
                    guv += n.buv[k] * ck;
                    gvv += n.bvv[k] * ck;
                }
            }
            const double fuu = 2.0 * (gu * gu + g * guu);
            if (one_d) {
                acc += area * n.edge * n.rho * fuu * fuu;
            } else {
                const double fuv = 2.0 * (gu * gv + g * guv);
                const double fvv = 2.0 * (gv * gv + g * gvv);
                acc += area * n.edge * (n.rho * fuu * fuu + 2.0 * n.rho * fuv * fuv + fvv * fvv);
            }
        }
        return acc;
    }

    double cost(const Eigen::VectorXd& c, double alpha,
                const std::vector<double>* wmul) const {
        double acc = 0.0;
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const auto& n = nodes[q];
            const double w = n.w * (wmul ? (*wmul)[q] : 1.0);
            if (w > 0.0) {
                const double g = g_at(n, c);
                const double r = g * g - n.y;
                acc += w * r * r;
            }
        }
        return acc + alpha * curvature(c);
    }

    // Residual vector and Jacobian.  Row layout: one data row per node with
    // positive (resampled) weight, then penalty rows for every node.
    void assemble(const Eigen::VectorXd& c, double alpha, const std::vector<double>* wmul,
                  Eigen::VectorXd& r, Eigen::MatrixXd& J, std::size_t* data_rows_out) const {
        const std::size_t prows = penalty_rows_per_node();
        std::size_t n_data = 0;
        for (std::size_t q = 0; q < nodes.size(); ++q)
            if (nodes[q].w * (wmul ? (*wmul)[q] : 1.0) > 0.0) ++n_data;
        const std::size_t n_rows = n_data + prows * nodes.size();
        r.setZero(static_cast<Eigen::Index>(n_rows));
        J.setZero(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(nb));
        if (data_rows_out) *data_rows_out = n_data;

        std::size_t row = 0;
        const double sa = std::sqrt(std::max(alpha, 0.0) * area);
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const auto& n = nodes[q];
            const double w = n.w * (wmul ? (*wmul)[q] : 1.0);
            double g = 0.0, gu = 0.0, gv = 0.0, guu = 0.0, guv = 0.0, gvv = 0.0;
            for (std::size_t k = 0; k < nb; ++k) {
                const double ck = c[static_cast<Eigen::Index>(k)];
                g += n.b0[k] * ck;
                gu += n.bu[k] * ck;
                guu += n.buu[k] * ck;
                if (!one_d) {
                    gv += n.bv[k] * ck;
                    guv += n.buv[k] * ck;
                    gvv += n.bvv[k] * ck;
                }
            }
            if (w > 0.0) {
                const double sw = std::sqrt(w);
                r[static_cast<Eigen::Index>(row)] = sw * (g * g - n.y);
                for (std::size_t k = 0; k < nb; ++k)
                    J(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) =
                        sw * 2.0 * g * n.b0[k];
                ++row;
            }
        }
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const auto& n = nodes[q];
            double g = 0.0, gu = 0.0, gv = 0.0, guu = 0.0, guv = 0.0, gvv = 0.0;
            for (std::size_t k = 0; k < nb; ++k) {
                const double ck = c[static_cast<Eigen::Index>(k)];
                g += n.b0[k] * ck;
                gu += n.bu[k] * ck;
                guu += n.buu[k] * ck;
                if (!one_d) {
                    gv += n.bv[k] * ck;
                    guv += n.buv[k] * ck;
                    gvv += n.bvv[k] * ck;
                }
            }
            const double suu = sa * std::sqrt(n.edge * n.rho);
            const double fuu = 2.0 * (gu * gu + g * guu);
            r[static_cast<Eigen::Index>(row)] = suu * fuu;
            for (std::size_t k = 0; k < nb; ++k)
                J(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) =
                    suu * 2.0 * (2.0 * gu * n.bu[k] + guu * n.b0[k] + g * n.buu[k]);
            ++row;
            if (!one_d) {
                const double suv = sa * std::sqrt(2.0 * n.edge * n.rho);
                const double fuv = 2.0 * (gu * gv + g * guv);
                r[static_cast<Eigen::Index>(row)] = suv * fuv;
                for (std::size_t k = 0; k < nb; ++k)
                    J(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) =
                        suv * 2.0 *
                        (gv * n.bu[k] + gu * n.bv[k] + guv * n.b0[k] + g * n.buv[k]);
                ++row;
                const double svv = sa * std::sqrt(n.edge);
                const double fvv = 2.0 * (gv * gv + g * gvv);
                r[static_cast<Eigen::Index>(row)] = svv * fvv;
                for (std::size_t k = 0; k < nb; ++k)
                    J(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) =
                        svv * 2.0 * (2.0 * gv * n.bv[k] + gvv * n.b0[k] + g * n.bvv[k]);
                ++row;
            }
        }
    }
};

// Damped Gauss-Newton on the squared-link problem.
Eigen::VectorXd lm_fit(const fit_problem& prob, double alpha, const std::vector<double>* wmul,
                       Eigen::VectorXd c, std::size_t max_iterations) {
    const auto nbi = static_cast<Eigen::Index>(prob.nb);
    double cost = prob.cost(c, alpha, wmul);
    if (cost == 0.0) return c;
    double mu = 1e-3;
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        prob.assemble(c, alpha, wmul, r, J, nullptr);
        Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd grad = J.transpose() * r;
        const double diag_floor = 1e-14 + 1e-10 * A.diagonal().maxCoeff();
        bool accepted = false;
        for (int tries = 0; tries < 14; ++tries) {
            Eigen::MatrixXd M = A;
            for (Eigen::Index k = 0; k < nbi; ++k)
                M(k, k) += mu * std::max(A(k, k), diag_floor);
            const Eigen::VectorXd step = M.ldlt().solve(-grad);
            if (!step.allFinite()) {
                mu *= 4.0;
                continue;
            }
            const Eigen::VectorXd trial = c + step;
            const double trial_cost = prob.cost(trial, alpha, wmul);
            if (trial_cost <= cost) {
                const double rel_drop = (cost - trial_cost) / (std::abs(cost) + 1e-300);
                const double rel_step = step.cwiseAbs().maxCoeff() /
                                        (c.cwiseAbs().maxCoeff() + 1.0);
                c = trial;
                cost = trial_cost;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                if (rel_drop < 1e-13 || rel_step < 1e-12) return c;
                break;
            }
            mu *= 4.0;
        }
        if (!accepted) break; // damping saturated: local stationary point
    }
    return c;
}

// Generalized cross-validation on the problem linearized at the solution:
// GCV = n * RSS / (n - edof)^2 with edof the trace of the linear smoother.
double gcv_score(const fit_problem& prob, double alpha, const Eigen::VectorXd& c) {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    std::size_t n_data = 0;
    prob.assemble(c, alpha, nullptr, r, J, &n_data);
    if (n_data == 0) return std::numeric_limits<double>::infinity();
    const auto nd = static_cast<Eigen::Index>(n_data);
    Eigen::MatrixXd M = J.transpose() * J;
    for (Eigen::Index k = 0; k < M.rows(); ++k) M(k, k) += 1e-12 * (1.0 + M(k, k));
    const Eigen::MatrixXd Minv = M.ldlt().solve(
        Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    const Eigen::MatrixXd X = J.topRows(nd);
    const double edof = (X * Minv).cwiseProduct(X).sum();
    const double rss = r.head(nd).squaredNorm();
    const double n = static_cast<double>(n_data);
    if (n - edof < 1e-6) return std::numeric_limits<double>::infinity();
    return n * rss / ((n - edof) * (n - edof));
}

double normalize(double x, double lo, double hi) { return (x - lo) / (hi - lo); }

bool in_news(double tau, const std::vector<std::pair<double, double>>& windows) {
    for (const auto& w : windows)
        if (tau >= std::min(w.first, w.second) && tau <= std::max(w.first, w.second)) return true;
    return false;
}

} // namespace

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void grid_spec::validate() const {
    if (n_tau < 1 || n_m < 1) throw config_error("grid_spec: need at least one cell per axis");
    if (std::isfinite(tau_min) && std::isfinite(tau_max) && !(tau_max > tau_min))
        throw config_error("grid_spec: tau_max must exceed tau_min");
    if (std::isfinite(m_min) && std::isfinite(m_max) && !(m_max > m_min))
        throw config_error("grid_spec: m_max must exceed m_min");
}

void calib_series::validate() const {
    const std::size_t n = t.size();
    if (m.size() != n || value.size() != n)
        throw data_error("calib_series: t, m, value lengths differ");
    if (!var_hat.empty() && var_hat.size() != n)
        throw data_error("calib_series: var_hat length differs from t");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(resolution_time - t[i] > 0.0))
            throw data_error("calib_series: sample at or past resolution time (tau <= 0)");
        if (!std::isfinite(m[i]) || !std::isfinite(value[i]))
            throw data_error("calib_series: non-finite sample");
    }
}

void surface_grid::validate() const {
    if (tau_axis.empty() || m_axis.empty()) throw data_error("surface_grid: empty axes");
    for (std::size_t i = 1; i < tau_axis.size(); ++i)
        if (!(tau_axis[i] > tau_axis[i - 1]))
            throw data_error("surface_grid: tau_axis not strictly increasing");
    for (std::size_t j = 1; j < m_axis.size(); ++j)
        if (!(m_axis[j] > m_axis[j - 1]))
            throw data_error("surface_grid: m_axis not strictly increasing");
    const std::size_t cells = n_tau() * n_m();
    if (values.size() != cells || weights.size() != cells)
        throw data_error("surface_grid: values/weights size mismatch with axes");
    for (std::size_t q = 0; q < cells; ++q) {
        if (!(weights[q] >= 0.0) || !std::isfinite(weights[q]))
            throw data_error("surface_grid: negative or non-finite weight");
        if (weights[q] > 0.0 && !std::isfinite(values[q]))
            throw data_error("surface_grid: non-finite value in populated cell");
    }
}

std::size_t surface_grid::populated_cells() const {
    std::size_t n = 0;
    for (double w : weights)
        if (w > 0.0) ++n;
    return n;
}

std::size_t surface_grid::populated_tau_bins() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < n_tau(); ++i)
        for (std::size_t j = 0; j < n_m(); ++j)
            if (weight_at(i, j) > 0.0) {
                ++n;
                break;
            }
    return n;
}

std::size_t surface_grid::populated_m_bins() const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < n_m(); ++j)
        for (std::size_t i = 0; i < n_tau(); ++i)
            if (weight_at(i, j) > 0.0) {
                ++n;
                break;
            }
    return n;
}

void fit_config::validate() const {
    if (std::isfinite(alpha) && alpha < 0.0) throw config_error("fit_config: alpha must be >= 0");
    if (n_basis_tau < 4 || n_basis_m < 4)
        throw config_error("fit_config: need at least 4 basis functions per axis");
    if (!(news_relax > 0.0) || news_relax > 1.0)
        throw config_error("fit_config: news_relax must lie in (0, 1]");
    if (edge_penalty_boost < 1.0) throw config_error("fit_config: edge boost must be >= 1");
    if (!(edge_quantile > 0.0) || !(edge_quantile < 1.0))
        throw config_error("fit_config: edge quantile must lie in (0, 1)");
    if (max_iterations < 1) throw config_error("fit_config: max_iterations must be >= 1");
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

surface_grid bin_estimates(const std::vector<calib_series>& series, const grid_spec& spec) {
    spec.validate();
    std::size_t total = 0;
    for (const auto& s : series) {
        s.validate();
        total += s.t.size();
    }
    if (total == 0) throw data_error("bin_estimates: no samples");

    double tau_lo = spec.tau_min, tau_hi = spec.tau_max;
    double m_lo = spec.m_min, m_hi = spec.m_max;
    if (!std::isfinite(tau_lo) || !std::isfinite(tau_hi) || !std::isfinite(m_lo) ||
        !std::isfinite(m_hi)) {
        double t0 = std::numeric_limits<double>::infinity(), t1 = -t0;
        double x0 = t0, x1 = -t0;
        for (const auto& s : series)
            for (std::size_t i = 0; i < s.t.size(); ++i) {
                const double tau = s.resolution_time - s.t[i];
                t0 = std::min(t0, tau);
                t1 = std::max(t1, tau);
                x0 = std::min(x0, s.m[i]);
                x1 = std::max(x1, s.m[i]);
            }
        if (!std::isfinite(tau_lo)) tau_lo = t0;
        if (!std::isfinite(tau_hi)) tau_hi = t1;
        if (!std::isfinite(m_lo)) m_lo = x0;
        if (!std::isfinite(m_hi)) m_hi = x1;
    }
    // Degenerate axes (all samples at one coordinate) widen to a unit span
    // so the binning and downstream normalization stay well defined.
    if (!(tau_hi - tau_lo > 1e-12)) {
        tau_lo -= 0.5;
        tau_hi += 0.5;
    }
    if (!(m_hi - m_lo > 1e-12)) {
        m_lo -= 0.5;
        m_hi += 0.5;
    }

    surface_grid grid;
    grid.tau_axis.resize(spec.n_tau);
    grid.m_axis.resize(spec.n_m);
    const double dtau = (tau_hi - tau_lo) / static_cast<double>(spec.n_tau);
    const double dm = (m_hi - m_lo) / static_cast<double>(spec.n_m);
    for (std::size_t i = 0; i < spec.n_tau; ++i)
        grid.tau_axis[i] = tau_lo + (static_cast<double>(i) + 0.5) * dtau;
    for (std::size_t j = 0; j < spec.n_m; ++j)
        grid.m_axis[j] = m_lo + (static_cast<double>(j) + 0.5) * dm;

    const std::size_t cells = spec.n_tau * spec.n_m;
    std::vector<double> sum_q(cells, 0.0), sum_qv(cells, 0.0);
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.t.size(); ++i) {
            const double tau = s.resolution_time - s.t[i];
            if (tau < tau_lo || tau > tau_hi || s.m[i] < m_lo || s.m[i] > m_hi)
                continue; // outside a fixed grid window
            auto it = static_cast<std::size_t>((tau - tau_lo) / dtau);
            auto jm = static_cast<std::size_t>((s.m[i] - m_lo) / dm);
            if (it >= spec.n_tau) it = spec.n_tau - 1;
            if (jm >= spec.n_m) jm = spec.n_m - 1;
            // Precision weight: inverse posterior variance, floored so exact
            // (zero-variance) filters stay finite; absent variances weigh 1.
            const double q =
                s.var_hat.empty() ? 1.0 : 1.0 / std::max(s.var_hat[i], kVarFloor);
            const std::size_t cell = it * spec.n_m + jm;
            sum_q[cell] += q;
            sum_qv[cell] += q * s.value[i];
        }
    }

    grid.values.assign(cells, 0.0);
    grid.weights.assign(cells, 0.0);
    std::size_t populated = 0;
    for (std::size_t q = 0; q < cells; ++q) {
        if (sum_q[q] > 0.0) {
            grid.values[q] = sum_qv[q] / sum_q[q];
            // count x mean inverse posterior variance == summed precision
            grid.weights[q] = sum_q[q];
            ++populated;
        }
    }
    if (populated == 0) throw data_error("bin_estimates: empty grid (no samples in window)");
    grid.validate();
    return grid;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

fit_problem build_problem(const surface_grid& grid, const fit_config& cfg, bool one_d,
                          const bspline_basis& bt, const bspline_basis& bm,
                          const std::vector<std::pair<double, double>>& news_windows) {
    const std::size_t n_tau = grid.n_tau(), n_m = grid.n_m();
    const double tau_lo = grid.tau_axis.front(), tau_hi = grid.tau_axis.back();
    const double m_lo = grid.m_axis.front(), m_hi = grid.m_axis.back();

    // Edge-stability threshold: |m| above this quantile of the populated
    // cells' |m| gets a boosted curvature weight.
    double edge_thresh = std::numeric_limits<double>::infinity();
    if (!one_d) {
        std::vector<double> abs_m;
        for (std::size_t i = 0; i < n_tau; ++i)
            for (std::size_t j = 0; j < n_m; ++j)
                if (grid.weight_at(i, j) > 0.0) abs_m.push_back(std::abs(grid.m_axis[j]));
        if (!abs_m.empty()) edge_thresh = quantile(abs_m, cfg.edge_quantile);
    }

    fit_problem prob;
    prob.one_d = one_d;
    prob.nb = one_d ? bt.size() : bt.size() * bm.size();
    prob.area = one_d ? 1.0 / static_cast<double>(n_tau)
                      : 1.0 / static_cast<double>(n_tau * n_m);

    std::vector<double> Bt, But, Buut, Bm, Bvm, Bvvm;
    if (one_d) {
        prob.nodes.reserve(n_tau);
        for (std::size_t i = 0; i < n_tau; ++i) {
            const double u = normalize(grid.tau_axis[i], tau_lo, tau_hi);
            bt.eval(u, 0, Bt);
            bt.eval(u, 1, But);
            bt.eval(u, 2, Buut);
            design_node node;
            node.b0 = Bt;
            node.bu = But;
            node.buu = Buut;
            node.bv.assign(prob.nb, 0.0);
            node.buv.assign(prob.nb, 0.0);
            node.bvv.assign(prob.nb, 0.0);
            node.rho = in_news(grid.tau_axis[i], news_windows) ? cfg.news_relax : 1.0;
            // Collapse the m dimension: pool every populated cell in this row.
            double sw = 0.0, swv = 0.0;
            for (std::size_t j = 0; j < n_m; ++j) {
                const double w = grid.weight_at(i, j);
                sw += w;
                swv += w * grid.value_at(i, j);
            }
            node.w = sw;
            node.y = sw > 0.0 ? swv / sw : 0.0;
            prob.nodes.push_back(std::move(node));
        }
        return prob;
    }

    prob.nodes.reserve(n_tau * n_m);
    for (std::size_t i = 0; i < n_tau; ++i) {
        const double u = normalize(grid.tau_axis[i], tau_lo, tau_hi);
        bt.eval(u, 0, Bt);
        bt.eval(u, 1, But);
        bt.eval(u, 2, Buut);
        const double rho = in_news(grid.tau_axis[i], news_windows) ? cfg.news_relax : 1.0;
        for (std::size_t j = 0; j < n_m; ++j) {
            const double v = normalize(grid.m_axis[j], m_lo, m_hi);
            bm.eval(v, 0, Bm);
            bm.eval(v, 1, Bvm);
            bm.eval(v, 2, Bvvm);
            design_node node;
            node.b0.resize(prob.nb);
            node.bu.resize(prob.nb);
            node.bv.resize(prob.nb);
            node.buu.resize(prob.nb);
            node.buv.resize(prob.nb);
            node.bvv.resize(prob.nb);
            for (std::size_t a = 0; a < bt.size(); ++a)
                for (std::size_t b = 0; b < bm.size(); ++b) {
                    const std::size_t k = a * bm.size() + b;
                    node.b0[k] = Bt[a] * Bm[b];
                    node.bu[k] = But[a] * Bm[b];
                    node.bv[k] = Bt[a] * Bvm[b];
                    node.buu[k] = Buut[a] * Bm[b];
                    node.buv[k] = But[a] * Bvm[b];
                    node.bvv[k] = Bt[a] * Bvvm[b];
                }
            node.w = grid.weight_at(i, j);
            node.y = node.w > 0.0 ? grid.value_at(i, j) : 0.0;
            node.rho = rho;
            node.edge = std::abs(grid.m_axis[j]) > edge_thresh ? cfg.edge_penalty_boost : 1.0;
            prob.nodes.push_back(std::move(node));
        }
    }
    return prob;
}

Eigen::VectorXd initial_coef(const fit_problem& prob) {
    double sw = 0.0, swv = 0.0;
    for (const auto& n : prob.nodes) {
        sw += n.w;
        swv += n.w * n.y;
    }
    const double mean = sw > 0.0 ? std::max(swv / sw, 0.0) : 0.0;
    // Constant g = sqrt(mean): the clamped basis forms a partition of unity.
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(prob.nb), std::sqrt(mean));
}

} // namespace

surface_layer fit_surface(const surface_grid& grid, const fit_config& cfg,
                          const std::vector<std::pair<double, double>>& news_windows) {
    grid.validate();
    cfg.validate();
    const std::size_t n_pop = grid.populated_cells();
    if (n_pop == 0) throw data_error("fit_surface: empty grid");

    const bool one_d = grid.populated_tau_bins() < 4 || grid.populated_m_bins() < 4 ||
                       n_pop < kMin2dCells || grid.n_m() < 2;
    if (one_d && grid.populated_tau_bins() < 3)
        throw data_error(
            "fit_surface: rank-deficient fit (fewer than 3 distinct populated tau bins); "
            "coarsen the grid or pool more series");

    surface_layer layer;
    layer.one_d = one_d;
    layer.tau_axis = grid.tau_axis;
    layer.m_axis = grid.m_axis;
    layer.tau_lo = grid.tau_axis.front();
    layer.tau_hi = grid.tau_axis.back();
    layer.m_lo = grid.m_axis.front();
    layer.m_hi = grid.m_axis.back();
    if (!(layer.tau_hi > layer.tau_lo))
        throw data_error("fit_surface: degenerate tau axis");
    layer.basis_tau = bspline_basis(cfg.n_basis_tau, 0.0, 1.0);
    layer.basis_m = bspline_basis(cfg.n_basis_m, 0.0, 1.0);

    const fit_problem prob =
        build_problem(grid, cfg, one_d, layer.basis_tau, layer.basis_m, news_windows);

    Eigen::VectorXd c = initial_coef(prob);
    double alpha = cfg.alpha;
    if (!std::isfinite(alpha)) {
        // GCV over a log-spaced grid, warm-starting each fit from the
        // previous one; ties resolve toward the smaller (earlier) alpha.
        double best_score = std::numeric_limits<double>::infinity();
        double best_alpha = 1e-6;
        Eigen::VectorXd best_c = c;
        Eigen::VectorXd warm = c;
        for (int e = -6; e <= 4; ++e) {
            const double a = std::pow(10.0, e);
            warm = lm_fit(prob, a, nullptr, warm, cfg.max_iterations);
            const double score = gcv_score(prob, a, warm);
            if (score < best_score) {
                best_score = score;
                best_alpha = a;
                best_c = warm;
            }
        }
        alpha = best_alpha;
        c = best_c;
    } else {
        c = lm_fit(prob, alpha, nullptr, c, cfg.max_iterations);
    }
    if (!c.allFinite())
        throw data_error("fit_surface: rank-deficient fit (non-finite coefficients); "
                         "coarsen the grid or pool more series");

    layer.alpha = alpha;
    layer.curvature_norm = prob.curvature(c);
    layer.coef.assign(c.data(), c.data() + c.size());

    // Bootstrap bands: resample populated cells with replacement, refit with
    // the chosen alpha from a warm start, and take the per-node standard
    // deviation of the refitted surface.  Each resample runs on its own
    // deterministic substream, so thread scheduling cannot change results.
    const std::size_t n_nodes = grid.n_tau() * grid.n_m();
    layer.band.assign(n_nodes, 0.0);
    if (cfg.compute_bands && cfg.bootstrap_resamples >= 2 && n_pop >= 2) {
        std::vector<std::size_t> pop_cells;
        for (std::size_t q = 0; q < prob.nodes.size(); ++q)
            if (prob.nodes[q].w > 0.0) pop_cells.push_back(q);
        const std::size_t R = cfg.bootstrap_resamples;
        std::vector<std::vector<double>> samples(R);

        auto run_chunk = [&](std::size_t r0, std::size_t r1) {
            std::vector<double> wmul(prob.nodes.size(), 0.0);
            std::vector<double> Bt, Bm;
            for (std::size_t r = r0; r < r1; ++r) {
                rng_stream rng(derive_seed(cfg.bootstrap_seed, r + 1, 3));
                std::fill(wmul.begin(), wmul.end(), 0.0);
                for (std::size_t d = 0; d < pop_cells.size(); ++d) {
                    auto pick = static_cast<std::size_t>(rng.uniform() *
                                                         static_cast<double>(pop_cells.size()));
                    if (pick >= pop_cells.size()) pick = pop_cells.size() - 1;
                    wmul[pop_cells[pick]] += 1.0;
                }
                Eigen::VectorXd cr = lm_fit(prob, alpha, &wmul, c, 30);
                std::vector<double> vals(n_nodes, 0.0);
                if (prob.one_d) {
                    for (std::size_t i = 0; i < grid.n_tau(); ++i) {
                        const double g = prob.g_at(prob.nodes[i], cr);
                        for (std::size_t j = 0; j < grid.n_m(); ++j)
                            vals[i * grid.n_m() + j] = g * g;
                    }
                } else {
                    for (std::size_t q = 0; q < n_nodes; ++q) {
                        const double g = prob.g_at(prob.nodes[q], cr);
                        vals[q] = g * g;
                    }
                }
                samples[r] = std::move(vals);
            }
        };

        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        const std::size_t n_chunks = std::min<std::size_t>(std::max(1u, hw), R);
        std::vector<std::future<void>> futs;
        const std::size_t per = (R + n_chunks - 1) / n_chunks;
        for (std::size_t k = 0; k < n_chunks; ++k) {
            const std::size_t r0 = k * per, r1 = std::min(R, r0 + per);
            if (r0 >= r1) break;
            futs.push_back(std::async(std::launch::async, run_chunk, r0, r1));
        }
        for (auto& f : futs) f.get();

        for (std::size_t q = 0; q < n_nodes; ++q) {
            double mean = 0.0;
            for (std::size_t r = 0; r < R; ++r) mean += samples[r][q];
            mean /= static_cast<double>(R);
            double ss = 0.0;
            for (std::size_t r = 0; r < R; ++r) {
                const double d = samples[r][q] - mean;
                ss += d * d;
            }
            layer.band[q] = std::sqrt(ss / static_cast<double>(R - 1));
        }
    }
    return layer;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double surface_layer::value_at(double tau, double m) const {
    double u = normalize(tau, tau_lo, tau_hi);
    u = std::clamp(u, 0.0, 1.0);
    std::vector<double> Bt = basis_tau.eval(u, 0);
    double g = 0.0;
    if (one_d) {
        for (std::size_t a = 0; a < basis_tau.size(); ++a) g += Bt[a] * coef[a];
    } else {
        double v = normalize(m, m_lo, m_hi);
        v = std::clamp(v, 0.0, 1.0);
        std::vector<double> Bm = basis_m.eval(v, 0);
        for (std::size_t a = 0; a < basis_tau.size(); ++a)
            for (std::size_t b = 0; b < basis_m.size(); ++b)
                g += Bt[a] * Bm[b] * coef[a * basis_m.size() + b];
    }
    return g * g;
}

double surface_layer::band_at(double tau, double m) const {
    if (band.empty() || tau_axis.empty() || m_axis.empty()) return 0.0;
    const std::size_t nt = tau_axis.size(), nm = m_axis.size();
    auto locate = [](const std::vector<double>& ax, double x, std::size_t& i0, double& f) {
        if (x <= ax.front() || ax.size() < 2) {
            i0 = 0;
            f = 0.0;
            return;
        }
        if (x >= ax.back()) {
            i0 = ax.size() - 2;
            f = 1.0;
            return;
        }
        std::size_t hi = 1;
        while (hi < ax.size() && ax[hi] < x) ++hi;
        i0 = hi - 1;
        f = (x - ax[i0]) / (ax[hi] - ax[i0]);
    };
    std::size_t i0 = 0, j0 = 0;
    double ft = 0.0, fm = 0.0;
    locate(tau_axis, tau, i0, ft);
    if (nm >= 2)
        locate(m_axis, m, j0, fm);
    const std::size_t i1 = std::min(i0 + 1, nt - 1);
    const std::size_t j1 = std::min(j0 + 1, nm - 1);
    const double b00 = band[i0 * nm + j0], b01 = band[i0 * nm + j1];
    const double b10 = band[i1 * nm + j0], b11 = band[i1 * nm + j1];
    const double top = b00 * (1.0 - fm) + b01 * fm;
    const double bot = b10 * (1.0 - fm) + b11 * fm;
    return top * (1.0 - ft) + bot * ft;
}

double evaluate(const surface_layer& layer, double tau, double m) {
    const double ts = kHullSlack * (layer.tau_hi - layer.tau_lo);
    const double ms = kHullSlack * (layer.m_hi - layer.m_lo);
    const bool tau_out = tau < layer.tau_lo - ts || tau > layer.tau_hi + ts;
    const bool m_out = !layer.one_d && (m < layer.m_lo - ms || m > layer.m_hi + ms);
    if (tau_out || m_out) {
        std::ostringstream os;
        os << "surface query (tau=" << tau << ", m=" << m << ") outside knot hull tau:["
           << layer.tau_lo << ", " << layer.tau_hi << "]";
        if (!layer.one_d) os << " m:[" << layer.m_lo << ", " << layer.m_hi << "]";
        throw data_error(os.str());
    }
    const double val = layer.value_at(tau, m);
    assert(val >= 0.0);
    return val;
}

surface_point evaluate(const belief_surface& surf, double tau, double m) {
    surface_point p;
    p.sigma_b = evaluate(surf.sigma_b, tau, m);
    p.lambda = evaluate(surf.lambda, tau, m);
    p.sJ2 = evaluate(surf.sJ2, tau, m);
    p.band_sigma_b = surf.sigma_b.band_at(tau, m);
    p.band_lambda = surf.lambda.band_at(tau, m);
    p.band_sJ2 = surf.sJ2.band_at(tau, m);
    return p;
}

belief_surface build_belief_surface(const surface_grid& sigma_b_grid,
                                    const surface_grid& lambda_grid,
                                    const surface_grid& sJ2_grid, const fit_config& cfg,
                                    const std::vector<std::pair<double, double>>& news_windows) {
    belief_surface out;
    out.news_windows = news_windows;
    auto fit = [&](const surface_grid& g) { return fit_surface(g, cfg, news_windows); };
    auto f_sigma = std::async(std::launch::async, fit, std::cref(sigma_b_grid));
    auto f_lambda = std::async(std::launch::async, fit, std::cref(lambda_grid));
    out.sJ2 = fit(sJ2_grid);
    out.sigma_b = f_sigma.get();
    out.lambda = f_lambda.get();
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json surface_layer::to_json() const {
    nlohmann::json j;
    j["link"] = "squared";
    j["one_d"] = one_d;
    j["n_basis_tau"] = basis_tau.size();
    j["n_basis_m"] = basis_m.size();
    j["coef"] = coef;
    j["tau_lo"] = tau_lo;
    j["tau_hi"] = tau_hi;
    j["m_lo"] = m_lo;
    j["m_hi"] = m_hi;
    j["alpha"] = alpha;
    j["curvature_norm"] = curvature_norm;
    j["tau_axis"] = tau_axis;
    j["m_axis"] = m_axis;
    j["band"] = band;
    return j;
}

surface_layer surface_layer::from_json(const nlohmann::json& j) {
    if (j.value("link", std::string()) != "squared")
        throw data_error("surface_layer: unsupported link type");
    surface_layer layer;
    layer.one_d = j.at("one_d").get<bool>();
    layer.basis_tau = bspline_basis(j.at("n_basis_tau").get<std::size_t>(), 0.0, 1.0);
    layer.basis_m = bspline_basis(j.at("n_basis_m").get<std::size_t>(), 0.0, 1.0);
    layer.coef = j.at("coef").get<std::vector<double>>();
    layer.tau_lo = j.at("tau_lo").get<double>();
    layer.tau_hi = j.at("tau_hi").get<double>();
    layer.m_lo = j.at("m_lo").get<double>();
    layer.m_hi = j.at("m_hi").get<double>();
    layer.alpha = j.at("alpha").get<double>();
    layer.curvature_norm = j.at("curvature_norm").get<double>();
    layer.tau_axis = j.at("tau_axis").get<std::vector<double>>();
    layer.m_axis = j.at("m_axis").get<std::vector<double>>();
    layer.band = j.at("band").get<std::vector<double>>();
    const std::size_t want =
        layer.one_d ? layer.basis_tau.size() : layer.basis_tau.size() * layer.basis_m.size();
    if (layer.coef.size() != want)
        throw data_error("surface_layer: coefficient count mismatch");
    return layer;
}

nlohmann::json belief_surface::to_json() const {
    nlohmann::json j;
    j["moneyness"] = "logit";
    nlohmann::json w = nlohmann::json::array();
    for (const auto& nw : news_windows) w.push_back({nw.first, nw.second});
    j["news_windows"] = w;
    j["sigma_b"] = sigma_b.to_json();
    j["lambda"] = lambda.to_json();
    j["sJ2"] = sJ2.to_json();
    return j;
}

belief_surface belief_surface::from_json(const nlohmann::json& j) {
    belief_surface s;
    s.sigma_b = surface_layer::from_json(j.at("sigma_b"));
    s.lambda = surface_layer::from_json(j.at("lambda"));
    s.sJ2 = surface_layer::from_json(j.at("sJ2"));
    for (const auto& w : j.value("news_windows", nlohmann::json::array()))
        s.news_windows.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
    return s;
}

void write_surface_csv(const belief_surface& surf, const std::string& path,
                       const std::string& manifest_id) {
    csv_writer out(path, manifest_id,
                   {"tau", "m", "sigma_b", "lambda", "sJ2", "band_sigma_b", "band_lambda",
                    "band_sJ2"});
    const auto& taus = surf.sigma_b.tau_axis;
    const auto& ms = surf.sigma_b.m_axis;
    for (double tau : taus)
        for (double m : ms) {
            out.write_row(tau, m, surf.sigma_b.value_at(tau, m), surf.lambda.value_at(tau, m),
                          surf.sJ2.value_at(tau, m), surf.sigma_b.band_at(tau, m),
                          surf.lambda.band_at(tau, m), surf.sJ2.band_at(tau, m));
        }
}

} // namespace oddskit
