#include "oddskit/pricer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <sstream>
#include <thread>
#include <utility>

#include "oddskit/logistic.hpp"

namespace oddskit {

namespace {

void check_window(double t0, double T, const char* what) {
    if (!std::isfinite(t0) || !std::isfinite(T) || t0 < 0.0 || !(T > t0)) {
        std::ostringstream os;
        os << what << ": need 0 <= t0 < T (got t0=" << t0 << ", T=" << T << ")";
        throw config_error(os.str());
    }
}

// Exact integral of a function that is piecewise constant on the parameter
// grid: midpoint sampling between consecutive breakpoints.
double integrate_pc(double param_dt, double t0, double T,
                    const std::function<double(double)>& f) {
    double acc = 0.0;
    double a = t0;
    double k = std::floor(t0 / param_dt) + 1.0;
    double b = k * param_dt;
    while (b < T) {
        if (b > a) {
            acc += (b - a) * f(0.5 * (a + b));
            a = b;
        }
        k += 1.0;
        b = k * param_dt;
    }
    if (T > a) acc += (T - a) * f(0.5 * (a + T));
    return acc;
}

double max_lambda_on(const kernel_params& params, double t0, double T) {
    double m = 0.0;
    integrate_pc(params.param_dt, t0, T, [&](double u) {
        m = std::max(m, params.lambda_at(u));
        return 0.0;
    });
    return m;
}

void merge_warnings(std::vector<std::string>& into, const std::vector<std::string>& from) {
    for (const auto& w : from)
        if (std::find(into.begin(), into.end(), w) == into.end()) into.push_back(w);
}

} // namespace

// ---------------------------------------------------------------------------
// Spec validation
// ---------------------------------------------------------------------------

void variance_swap_spec::validate() const {
    check_window(t0, T, "variance swap");
    if (has_corridor) {
        if (!std::isfinite(corridor_lo) || !std::isfinite(corridor_hi) || corridor_lo <= 0.0 ||
            corridor_hi >= 1.0 || !(corridor_lo < corridor_hi))
            throw config_error("variance swap: corridor needs 0 < lo < hi < 1");
    }
}

void first_passage_spec::validate() const {
    if (!std::isfinite(level) || level <= 0.0 || level >= 1.0)
        throw config_error("first passage: level must lie strictly inside (0, 1)");
    if (!std::isfinite(T) || !(T > 0.0))
        throw config_error("first passage: maturity must be positive");
    if (!std::isfinite(payout) || !(payout > 0.0))
        throw config_error("first passage: payout must be positive");
    if (!std::isfinite(monitor_dt) || monitor_dt < 0.0)
        throw config_error("first passage: monitor_dt must be zero or positive");
}

void pide_grid::validate() const {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_max > x_min))
        throw config_error("pide grid: need x_min < x_max, both finite");
    if (n_x < 64) throw config_error("pide grid: need at least 64 space intervals");
    if (n_t < 32) throw config_error("pide grid: need at least 32 time steps");
    if (!std::isfinite(theta) || theta < 0.5 || theta > 1.0)
        throw config_error("pide grid: theta must lie in [0.5, 1]");
}

void greeks_config::validate() const {
    if (!std::isfinite(dx) || !(dx > 0.0))
        throw config_error("greeks: state bump dx must be positive");
    if (!std::isfinite(rel_bump) || rel_bump <= 0.0 || rel_bump >= 1.0)
        throw config_error("greeks: relative bump must lie in (0, 1)");
    if (!std::isfinite(rho_bump) || !(rho_bump > 0.0))
        throw config_error("greeks: correlation bump must be positive");
}

std::string to_string(price_method m) {
    switch (m) {
    case price_method::closed_form: return "closed_form";
    case price_method::pide: return "pide";
    case price_method::mc: return "mc";
    }
    return "unknown";
}

nlohmann::json price_result::to_json() const {
    return nlohmann::json{{"value", value},
                          {"error", error},
                          {"method", oddskit::to_string(method)},
                          {"warnings", warnings}};
}

// ---------------------------------------------------------------------------
// Closed-form strikes
// ---------------------------------------------------------------------------

price_result x_var_strike(const kernel_params& params, double t0, double T) {
    params.validate();
    check_window(t0, T, "x-variance strike");
    const double m2 = params.law.second_moment();
    price_result out;
    out.method = price_method::closed_form;
    out.value = integrate_pc(params.param_dt, t0, T, [&](double u) {
        const double s = params.sigma_at(u);
        return s * s + params.lambda_at(u) * m2;
    });
    return out;
}

price_result p_var_strike(double x0, const kernel_params& params, double t0, double T) {
    params.validate();
    check_window(t0, T, "p-variance strike");
    if (!std::isfinite(x0)) throw config_error("p-variance strike: x0 must be finite");

    const double xc = clamp_logit(x0);
    const double p0 = sigmoid(xc);
    const double sp = sigmoid_d1(xc);

    const double int_sig2 = integrate_pc(params.param_dt, t0, T, [&](double u) {
        const double s = params.sigma_at(u);
        return s * s;
    });
    const double int_lam = integrate_pc(params.param_dt, t0, T,
                                        [&](double u) { return params.lambda_at(u); });

    double jump_m2 = 0.0;
    if (int_lam > 0.0) {
        jump_m2 = jump_expectation(params.law, params.quad_nodes, 12345, [&](double z) {
            const double d = sigmoid(clamp_logit(xc + z)) - p0;
            return d * d;
        });
    }

    price_result out;
    out.method = price_method::closed_form;
    out.value = sp * sp * int_sig2 + jump_m2 * int_lam;
    if (int_sig2 > 0.5) {
        std::ostringstream os;
        os << "p-variance strike: integrated variance " << int_sig2
           << " exceeds 0.5 over the window; the frozen-state approximation degrades";
        out.warnings.push_back(os.str());
    }
    return out;
}

price_result covariance_strike(double x_i, const kernel_params& params_i, double x_j,
                               const kernel_params& params_j, double rho,
                               const pair_dependence* cojump, double t0, double T) {
    params_i.validate();
    params_j.validate();
    check_window(t0, T, "covariance strike");
    if (!std::isfinite(x_i) || !std::isfinite(x_j))
        throw config_error("covariance strike: states must be finite");
    if (!std::isfinite(rho) || rho < -1.0 || rho > 1.0)
        throw config_error("covariance strike: correlation must lie in [-1, 1]");
    if (params_i.param_dt != params_j.param_dt)
        throw config_error("covariance strike: the two parameter grids must share param_dt");

    const double sp_i = sigmoid_d1(clamp_logit(x_i));
    const double sp_j = sigmoid_d1(clamp_logit(x_j));
    const double int_ss = integrate_pc(params_i.param_dt, t0, T, [&](double u) {
        return params_i.sigma_at(u) * params_j.sigma_at(u);
    });

    price_result out;
    out.method = price_method::closed_form;
    out.value = sp_i * sp_j * rho * int_ss;
    if (cojump != nullptr)
        out.value += cojump->cojump_intensity * cojump->cojump_m2 * (T - t0);
    return out;
}

price_result correlation_strike(double x_i, const kernel_params& params_i, double x_j,
                                const kernel_params& params_j, double rho,
                                const pair_dependence* cojump, double t0, double T) {
    price_result cov = covariance_strike(x_i, params_i, x_j, params_j, rho, cojump, t0, T);
    price_result v_i = p_var_strike(x_i, params_i, t0, T);
    price_result v_j = p_var_strike(x_j, params_j, t0, T);
    if (!(v_i.value > 0.0) || !(v_j.value > 0.0))
        throw data_error("correlation strike undefined: a marginal p-variance strike is zero");
    price_result out;
    out.method = price_method::closed_form;
    out.value = cov.value / std::sqrt(v_i.value * v_j.value);
    merge_warnings(out.warnings, cov.warnings);
    merge_warnings(out.warnings, v_i.warnings);
    merge_warnings(out.warnings, v_j.warnings);
    return out;
}

price_result variance_strike(const variance_swap_spec& spec, double x0,
                             const kernel_params& params) {
    spec.validate();
    if (spec.has_corridor)
        throw config_error("variance swap: corridor strikes are priced by Monte Carlo accrual; "
                           "use corridor_payoff with mc_price");
    if (spec.space == variance_space::logit) return x_var_strike(params, spec.t0, spec.T);
    return p_var_strike(x0, params, spec.t0, spec.T);
}

// ---------------------------------------------------------------------------
// PIDE solver
// ---------------------------------------------------------------------------

namespace {

double jump_support_radius(const jump_law& law) {
    switch (law.family) {
    case jump_family::symmetric_gaussian: return 8.0 * law.sd;
    case jump_family::double_exponential: return 14.0 / std::min(law.eta_up, law.eta_dn);
    case jump_family::empirical_bins: {
        double r = 0.0;
        for (double e : law.bin_edges) r = std::max(r, std::abs(e));
        return r;
    }
    }
    return 0.0;
}

double interp_at(const std::vector<double>& xs, const std::vector<double>& vs, double x0) {
    if (x0 <= xs.front()) return vs.front();
    if (x0 >= xs.back()) return vs.back();
    const double dx = xs[1] - xs[0];
    std::size_t k = static_cast<std::size_t>((x0 - xs.front()) / dx);
    k = std::min(k, xs.size() - 2);
    double f = (x0 - xs[k]) / dx;
    f = std::clamp(f, 0.0, 1.0);
    return (1.0 - f) * vs[k] + f * vs[k + 1];
}

// In-place Thomas elimination; the assembled matrices are strictly
// diagonally dominant, so no pivoting is needed.
void solve_tridiagonal(std::vector<double>& dl, std::vector<double>& dm,
                       std::vector<double>& du, std::vector<double>& rhs,
                       std::vector<double>& out) {
    const std::size_t n = dm.size();
    for (std::size_t k = 1; k < n; ++k) {
        const double w = dl[k] / dm[k - 1];
        dm[k] -= w * du[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    out[n - 1] = rhs[n - 1] / dm[n - 1];
    for (std::size_t k = n - 1; k-- > 0;) out[k] = (rhs[k] - du[k] * out[k + 1]) / dm[k];
}

struct core_result {
    std::vector<double> x;
    std::vector<double> v;
    bool monotonicity_warning = false;
};

core_result solve_core(const std::function<double(double)>& payoff, const kernel_params& params,
                       double t0, double T, double x_min, double x_max, std::size_t n_x,
                       std::size_t n_t, double theta, const first_passage_spec* barrier,
                       std::size_t monitor_stride) {
    const std::size_t n = n_x + 1;
    const double dx = (x_max - x_min) / static_cast<double>(n_x);

    // Snap the grid so a node lands exactly on the barrier level; the shift
    // is at most dx/2 either way.
    std::ptrdiff_t k_h = -1;
    bool absorb_above = false;
    double payout = 0.0;
    if (barrier != nullptr) {
        const double x_h = clamp_logit(logit(barrier->level));
        std::ptrdiff_t k = static_cast<std::ptrdiff_t>(std::llround((x_h - x_min) / dx));
        k = std::clamp<std::ptrdiff_t>(k, 1, static_cast<std::ptrdiff_t>(n_x) - 1);
        const double shift = x_h - (x_min + static_cast<double>(k) * dx);
        x_min += shift;
        x_max += shift;
        k_h = k;
        absorb_above = barrier->direction == passage_direction::hit_above;
        payout = barrier->payout;
    }

    core_result out;
    out.x.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.x[k] = x_min + static_cast<double>(k) * dx;

    std::vector<double>& v = out.v;
    v.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        v[k] = payoff(out.x[k]);
        if (!std::isfinite(v[k]))
            throw config_error("pide: payoff returned a non-finite value on the grid");
    }
    // Absorption at a monitoring date: nodes strictly beyond the level take
    // the payout; the node sitting exactly on the level takes the average of
    // payout and continuation, which is the cell average of the kinked
    // post-monitoring value and keeps the scheme second order in dx.
    auto enforce_barrier = [&](std::vector<double>& w) {
        if (k_h < 0) return;
        const std::size_t kb = static_cast<std::size_t>(k_h);
        w[kb] = 0.5 * (payout + w[kb]);
        if (absorb_above)
            for (std::size_t k = kb + 1; k < n; ++k) w[k] = payout;
        else
            for (std::size_t k = 0; k < kb; ++k) w[k] = payout;
    };
    enforce_barrier(v);

    const double boundary_lo = v.front();
    const double boundary_hi = v.back();

    // Discrete jump kernel: probability weights on offsets m*dx, normalized
    // to sum exactly to one so constants are annihilated and the scheme
    // conserves a flat value function.
    const double m2 = params.law.second_moment();
    std::ptrdiff_t half_width = 0;
    std::vector<double> weights;
    if (m2 > 0.0) {
        const double radius = jump_support_radius(params.law);
        half_width = std::max<std::ptrdiff_t>(
            1, static_cast<std::ptrdiff_t>(std::ceil(radius / dx)));
        weights.resize(static_cast<std::size_t>(2 * half_width + 1));
        double total = 0.0;
        for (std::ptrdiff_t m = -half_width; m <= half_width; ++m) {
            const double w = params.law.density(static_cast<double>(m) * dx);
            weights[static_cast<std::size_t>(m + half_width)] = w;
            total += w;
        }
        if (total > 0.0)
            for (auto& w : weights) w /= total;
        else
            weights.clear();
    }

    const double dt = (T - t0) / static_cast<double>(n_t);
    std::vector<double> lo_c(n, 0.0), up_c(n, 0.0);
    std::vector<double> dl(n), dm(n), du(n), rhs(n), jump_term(n, 0.0), v_next(n);
    double prev_sigma = -1.0, prev_lambda = -1.0;

    for (std::size_t j = n_t; j >= 1; --j) {
        const double t_mid = t0 + (static_cast<double>(j) - 0.5) * dt;
        const double sigma = params.sigma_at(t_mid);
        const double lambda = params.lambda_at(t_mid);
        const double diff = 0.5 * sigma * sigma / (dx * dx);

        // The advection/diffusion stencil depends on time only through the
        // frozen slab parameters; reuse it while they repeat.
        if (sigma != prev_sigma || lambda != prev_lambda) {
            for (std::size_t k = 1; k + 1 < n; ++k) {
                const double a = state_drift(params, out.x[k], t_mid);
                double lo, up;
                if (sigma * sigma >= std::abs(a) * dx) {
                    lo = diff - 0.5 * a / dx;
                    up = diff + 0.5 * a / dx;
                } else if (a > 0.0) {
                    lo = diff;
                    up = diff + a / dx;
                } else {
                    lo = diff - a / dx;
                    up = diff;
                }
                lo_c[k] = lo;
                up_c[k] = up;
            }
            prev_sigma = sigma;
            prev_lambda = lambda;
        }

        const bool jumps_on = lambda > 0.0 && !weights.empty();
        if (jumps_on) {
            for (std::size_t k = 1; k + 1 < n; ++k) {
                double acc = 0.0;
                for (std::ptrdiff_t m = -half_width; m <= half_width; ++m) {
                    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(k) + m;
                    double vv;
                    if (idx < 0)
                        vv = boundary_lo;
                    else if (idx >= static_cast<std::ptrdiff_t>(n))
                        vv = boundary_hi;
                    else
                        vv = v[static_cast<std::size_t>(idx)];
                    acc += weights[static_cast<std::size_t>(m + half_width)] * vv;
                }
                jump_term[k] = lambda * (acc - v[k]);
            }
        }

        for (std::size_t k = 1; k + 1 < n; ++k) {
            double ex = v[k];
            if (theta < 1.0)
                ex += (1.0 - theta) * dt *
                      (lo_c[k] * v[k - 1] - (lo_c[k] + up_c[k]) * v[k] + up_c[k] * v[k + 1]);
            if (jumps_on) ex += dt * jump_term[k];
            rhs[k] = ex;

            const double explicit_diag = 1.0 - (1.0 - theta) * dt * (lo_c[k] + up_c[k]) -
                                         (jumps_on ? lambda * dt : 0.0);
            if (explicit_diag < 0.0) out.monotonicity_warning = true;

            const double pl = theta * dt * lo_c[k];
            const double pu = theta * dt * up_c[k];
            dl[k] = -pl;
            dm[k] = 1.0 + (pl + pu);
            du[k] = -pu;
        }
        dl[0] = 0.0;
        dm[0] = 1.0;
        du[0] = 0.0;
        rhs[0] = boundary_lo;
        dl[n - 1] = 0.0;
        dm[n - 1] = 1.0;
        du[n - 1] = 0.0;
        rhs[n - 1] = boundary_hi;

        solve_tridiagonal(dl, dm, du, rhs, v_next);
        // Between monitoring dates the barrier side carries a live
        // continuation value; absorption applies only when the level just
        // reached is a monitoring date.
        if ((j - 1) % monitor_stride == 0) enforce_barrier(v_next);
        v.swap(v_next);
    }

    return out;
}

} // namespace

pide_grid default_pide_grid(double x0, const kernel_params& params, double t0, double T) {
    params.validate();
    check_window(t0, T, "pide grid");
    if (!std::isfinite(x0)) throw config_error("pide grid: x0 must be finite");
    const double total_var = x_var_strike(params, t0, T).value;
    double half = 6.0 * std::sqrt(std::max(total_var, 0.0));
    const double m2 = params.law.second_moment();
    if (m2 > 0.0 && max_lambda_on(params, t0, T) > 0.0) half += 3.0 * std::sqrt(m2);
    half = std::max(half, 1.0);
    pide_grid grid;
    grid.x_min = x0 - half;
    grid.x_max = x0 + half;
    grid.n_x = 256;
    grid.n_t = 256;
    grid.theta = 1.0;
    return grid;
}

pide_solution pide_solve(const std::function<double(double)>& payoff,
                         const kernel_params& params, double x0, double t0, double T,
                         const pide_grid& grid, const first_passage_spec* barrier) {
    if (!payoff) throw config_error("pide: payoff function is empty");
    params.validate();
    grid.validate();
    check_window(t0, T, "pide");
    if (!std::isfinite(x0) || x0 < grid.x_min || x0 > grid.x_max)
        throw config_error("pide: x0 lies outside the grid");

    const double dt_grid = (T - t0) / static_cast<double>(grid.n_t);
    const double lam_max = max_lambda_on(params, t0, T);
    if (lam_max * dt_grid > 0.5) {
        std::ostringstream os;
        os << "pide: lambda * dt = " << lam_max * dt_grid
           << " makes the explicit jump step unstable; refine the time grid (raise n_t)";
        throw config_error(os.str());
    }

    const double total_var = x_var_strike(params, t0, T).value;
    const double span = 6.0 * std::sqrt(std::max(total_var, 0.0));
    if (x0 - span < grid.x_min - 1e-9 || x0 + span > grid.x_max + 1e-9)
        throw config_error("pide: grid must cover x0 +/- 6 sqrt(total variance); "
                           "widen [x_min, x_max]");

    std::size_t stride_fine = 1;
    if (barrier != nullptr) {
        barrier->validate();
        const double x_h = clamp_logit(logit(barrier->level));
        const double dxg = (grid.x_max - grid.x_min) / static_cast<double>(grid.n_x);
        if (x_h < grid.x_min + dxg || x_h > grid.x_max - dxg)
            throw config_error("pide: barrier level lies outside the interior of the grid; "
                               "widen [x_min, x_max]");
        if (barrier->monitor_dt > 0.0) {
            const double ratio = barrier->monitor_dt / dt_grid;
            const double rounded = std::round(ratio);
            if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, rounded))
                throw config_error("pide: monitor_dt must be an integer multiple of the solver "
                                   "time step; adjust n_t");
            const double n_windows = (T - t0) / barrier->monitor_dt;
            if (std::abs(n_windows - std::round(n_windows)) > 1e-9 * std::max(1.0, n_windows))
                throw config_error("pide: the window must span a whole number of monitoring "
                                   "intervals");
            stride_fine = static_cast<std::size_t>(rounded);
        }
    }

    const std::size_t n_t_half = std::max<std::size_t>(grid.n_t / 2, 4);
    std::size_t stride_half = 1;
    if (barrier != nullptr && barrier->monitor_dt > 0.0) {
        const double dt_half = (T - t0) / static_cast<double>(n_t_half);
        stride_half = static_cast<std::size_t>(
            std::max<long long>(1, std::llround(barrier->monitor_dt / dt_half)));
    }

    core_result fine = solve_core(payoff, params, t0, T, grid.x_min, grid.x_max, grid.n_x,
                                  grid.n_t, grid.theta, barrier, stride_fine);
    core_result half = solve_core(payoff, params, t0, T, grid.x_min, grid.x_max,
                                  std::max<std::size_t>(grid.n_x / 2, 8), n_t_half, grid.theta,
                                  barrier, stride_half);

    const double v_fine = interp_at(fine.x, fine.v, x0);
    const double v_half = interp_at(half.x, half.v, x0);

    pide_solution out;
    out.x = std::move(fine.x);
    out.value = std::move(fine.v);
    out.result.value = v_fine;
    out.result.error = std::abs(v_fine - v_half);
    out.result.method = price_method::pide;
    if (fine.monotonicity_warning)
        out.result.warnings.push_back(
            "pide: the explicit part of the update is not monotone at this resolution; "
            "raise n_t or theta");
    return out;
}

price_result first_passage_pide(double x0, const kernel_params& params,
                                const first_passage_spec& spec, double t0,
                                const pide_grid* grid_override) {
    spec.validate();
    check_window(t0, spec.T, "first passage");
    pide_grid grid =
        grid_override != nullptr ? *grid_override : default_pide_grid(x0, params, t0, spec.T);
    if (grid_override == nullptr && spec.monitor_dt > 0.0) {
        // Align the solver clock with the monitoring clock: eight sub-steps
        // per monitoring date keep the per-date transition kernel accurate.
        const double n_windows = (spec.T - t0) / spec.monitor_dt;
        if (std::abs(n_windows - std::round(n_windows)) > 1e-9 * std::max(1.0, n_windows))
            throw config_error("first passage: the window must span a whole number of "
                               "monitoring intervals");
        const std::size_t n_win = static_cast<std::size_t>(std::llround(n_windows));
        grid.n_t = std::max<std::size_t>(n_win * 8, 32);
    }
    const double x_h = clamp_logit(logit(spec.level));
    const bool above = spec.direction == passage_direction::hit_above;
    // Strict inequality: the node snapped onto the level is handled by the
    // solver's absorption rule, which half-weights it as the cell average of
    // the discontinuous payoff.
    auto terminal = [&](double x) {
        const bool hit = above ? x > x_h : x < x_h;
        return hit ? spec.payout : 0.0;
    };
    return pide_solve(terminal, params, x0, t0, spec.T, grid, &spec).result;
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

path_payoff terminal_payoff(std::function<double(double)> g) {
    if (!g) throw config_error("terminal payoff: function is empty");
    return [g = std::move(g)](const logit_path& path) { return g(path.x.back()); };
}

path_payoff qv_payoff(variance_space space) {
    return [space](const logit_path& path) {
        const std::vector<double>& s =
            space == variance_space::logit ? path.x : path.p;
        double acc = 0.0;
        for (std::size_t k = 1; k < s.size(); ++k) {
            const double d = s[k] - s[k - 1];
            acc += d * d;
        }
        return acc;
    };
}

path_payoff corridor_payoff(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo <= 0.0 || hi >= 1.0 || !(lo < hi))
        throw config_error("corridor payoff: need 0 < lo < hi < 1");
    return [lo, hi](const logit_path& path) {
        double acc = 0.0;
        for (std::size_t k = 1; k < path.p.size(); ++k) {
            const double left = path.p[k - 1];
            if (left < lo || left > hi) continue;
            const double d = path.p[k] - path.p[k - 1];
            acc += d * d;
        }
        return acc;
    };
}

path_payoff first_passage_payoff(const first_passage_spec& spec) {
    spec.validate();
    const bool above = spec.direction == passage_direction::hit_above;
    const double level = spec.level;
    const double payout = spec.payout;
    const double monitor_dt = spec.monitor_dt;
    return [above, level, payout, monitor_dt](const logit_path& path) {
        for (std::size_t k = 0; k < path.p.size(); ++k) {
            if (monitor_dt > 0.0) {
                const double phase = path.t[k] / monitor_dt;
                if (std::abs(phase - std::round(phase)) > 1e-9) continue;
            }
            const double p = path.p[k];
            if (above ? p >= level : p <= level) return payout;
        }
        return 0.0;
    };
}

price_result mc_price(const path_payoff& payoff, const kernel_params& params, double x0,
                      double horizon, double dt, std::size_t n_paths, std::uint64_t seed,
                      bool antithetic) {
    if (!payoff) throw config_error("mc_price: payoff function is empty");
    params.validate();
    if (!std::isfinite(x0)) throw config_error("mc_price: x0 must be finite");
    if (!std::isfinite(horizon) || !(horizon > 0.0) || !std::isfinite(dt) || !(dt > 0.0) ||
        dt > horizon)
        throw config_error("mc_price: need 0 < dt <= horizon");
    if (n_paths < 1000)
        throw config_error("mc_price: need at least 1000 paths for a usable standard error");
    if (antithetic && n_paths % 2 != 0)
        throw config_error("mc_price: antithetic sampling needs an even path count");

    const std::size_t n_eff = antithetic ? n_paths / 2 : n_paths;
    std::vector<double> vals(n_eff);

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double v;
            if (antithetic) {
                const logit_path a = simulate_path(params, x0, horizon, dt, seed, i, false);
                const logit_path b = simulate_path(params, x0, horizon, dt, seed, i, true);
                v = 0.5 * (payoff(a) + payoff(b));
            } else {
                v = payoff(simulate_path(params, x0, horizon, dt, seed, i, false));
            }
            if (!std::isfinite(v))
                throw config_error("mc_price: payoff produced a non-finite value");
            vals[i] = v;
        }
    };

    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t n_workers = std::min(hw, n_eff);
    const std::size_t chunk = (n_eff + n_workers - 1) / n_workers;
    std::vector<std::future<void>> futures;
    for (std::size_t c = 0; c < n_workers; ++c) {
        const std::size_t lo = c * chunk;
        const std::size_t hi = std::min(n_eff, lo + chunk);
        if (lo >= hi) break;
        futures.push_back(std::async(std::launch::async, run_range, lo, hi));
    }
    for (auto& f : futures) f.get();

    // Reduce in index order so the result is independent of thread count.
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(n_eff);
    double ss = 0.0;
    for (double v : vals) {
        const double d = v - mean;
        ss += d * d;
    }
    price_result out;
    out.value = mean;
    out.error = n_eff > 1
                    ? std::sqrt(ss / static_cast<double>(n_eff - 1) / static_cast<double>(n_eff))
                    : 0.0;
    out.method = price_method::mc;
    return out;
}

// ---------------------------------------------------------------------------
// Greeks
// ---------------------------------------------------------------------------

jump_law scale_jump_second_moment(const jump_law& law, double factor) {
    if (!std::isfinite(factor) || !(factor > 0.0))
        throw config_error("jump bump: second-moment factor must be positive");
    jump_law out = law;
    const double s = std::sqrt(factor);
    switch (law.family) {
    case jump_family::symmetric_gaussian: out.sd = law.sd * s; break;
    case jump_family::double_exponential:
        out.eta_up = law.eta_up / s;
        out.eta_dn = law.eta_dn / s;
        break;
    case jump_family::empirical_bins:
        for (auto& e : out.bin_edges) e *= s;
        break;
    }
    out.validate();
    return out;
}

namespace {

void validate_bumped(const kernel_params& params, const char* which) {
    try {
        params.validate();
    } catch (const config_error& e) {
        std::ostringstream os;
        os << "greeks: " << which << " bump produces invalid parameters (" << e.what()
           << "); shrink the bump";
        throw config_error(os.str());
    }
}

} // namespace

greeks_result greeks(const pricing_fn& price, double x0, const kernel_params& params,
                     double rho, const greeks_config& cfg) {
    if (!price) throw config_error("greeks: pricing function is empty");
    cfg.validate();
    params.validate();
    if (!std::isfinite(x0)) throw config_error("greeks: x0 must be finite");

    auto eval = [&](double x, const kernel_params& kp, double r) {
        const double v = price(x, kp, r);
        if (!std::isfinite(v))
            throw config_error("greeks: pricing function returned a non-finite value");
        return v;
    };

    greeks_result out;
    const double base = eval(x0, params, rho);
    const double up_x = eval(x0 + cfg.dx, params, rho);
    const double dn_x = eval(x0 - cfg.dx, params, rho);
    out.delta_x = (up_x - dn_x) / (2.0 * cfg.dx);
    out.gamma_x = (up_x - 2.0 * base + dn_x) / (cfg.dx * cfg.dx);

    kernel_params sig_up = params;
    kernel_params sig_dn = params;
    for (auto& s : sig_up.sigma_b) s *= 1.0 + cfg.rel_bump;
    for (auto& s : sig_dn.sigma_b) s *= 1.0 - cfg.rel_bump;
    validate_bumped(sig_up, "volatility");
    validate_bumped(sig_dn, "volatility");
    out.vega_b = (eval(x0, sig_up, rho) - eval(x0, sig_dn, rho)) / (2.0 * cfg.rel_bump);

    kernel_params jmp_up = params;
    kernel_params jmp_dn = params;
    jmp_up.law = scale_jump_second_moment(params.law, 1.0 + cfg.rel_bump);
    jmp_dn.law = scale_jump_second_moment(params.law, 1.0 - cfg.rel_bump);
    validate_bumped(jmp_up, "jump");
    validate_bumped(jmp_dn, "jump");
    out.jump_vega = (eval(x0, jmp_up, rho) - eval(x0, jmp_dn, rho)) / (2.0 * cfg.rel_bump);

    out.vega_rho =
        (eval(x0, params, rho + cfg.rho_bump) - eval(x0, params, rho - cfg.rho_bump)) /
        (2.0 * cfg.rho_bump);
    return out;
}

} // namespace oddskit
