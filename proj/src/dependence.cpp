/*
 * Cross-event dependence estimators.
 *
 * The de-jumped correlation works on probability-scale increment products
 * S'(x) dx, restricted to steps where neither series is jump-flagged, over
 * a rolling window; the common 1/W normalization cancels in the ratio, and
 * windows with too few usable steps emit NaN gaps.  Co-jump moments count
 * same-step joint flags and average the product of probability increments
 * on them.  Hedge ratios shrink the diffusive beta, add the co-jump
 * correction when supplied, and clamp the result.
 */

#include "oddskit/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oddskit/csv.hpp"
#include "oddskit/logistic.hpp"

namespace oddskit {

namespace {

constexpr double kSprimeFloor = 1e-4;

void check_aligned(std::size_t n_i, std::size_t n_j, const char* what) {
    if (n_i != n_j) throw data_error(std::string(what) + ": series grids are not aligned");
}

} // namespace

void dependence_config::validate() const {
    if (window_steps < 60) throw config_error("dependence: window must span at least 60 steps");
    if (min_valid_steps < 1)
        throw config_error("dependence: min_valid_steps must be at least 1");
    if (!(tau_J > 0.0) || !(tau_J < 1.0))
        throw config_error("dependence: tau_J must lie in (0, 1)");
    if (!(dt > 0.0)) throw config_error("dependence: dt must be positive");
}

std::vector<double> dejumped_correlation_products(const std::vector<double>& a_i,
                                                  const std::vector<double>& a_j,
                                                  const std::vector<unsigned char>& valid,
                                                  const dependence_config& cfg) {
    cfg.validate();
    check_aligned(a_i.size(), a_j.size(), "dejumped_correlation");
    check_aligned(a_i.size(), valid.size(), "dejumped_correlation");
    const std::size_t n = a_i.size();
    const std::size_t W = cfg.window_steps;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> rho(n, nan);
    if (n < W) return rho;

    // Prefix sums over included steps only.
    std::vector<double> cum_ij(n + 1, 0.0), cum_ii(n + 1, 0.0), cum_jj(n + 1, 0.0);
    std::vector<std::size_t> cum_n(n + 1, 0);
    for (std::size_t u = 0; u < n; ++u) {
        const double use = valid[u] ? 1.0 : 0.0;
        cum_ij[u + 1] = cum_ij[u] + use * a_i[u] * a_j[u];
        cum_ii[u + 1] = cum_ii[u] + use * a_i[u] * a_i[u];
        cum_jj[u + 1] = cum_jj[u] + use * a_j[u] * a_j[u];
        cum_n[u + 1] = cum_n[u] + (valid[u] ? 1 : 0);
    }
    for (std::size_t u = W - 1; u < n; ++u) {
        const std::size_t lo = u + 1 - W;
        const std::size_t used = cum_n[u + 1] - cum_n[lo];
        if (used < cfg.min_valid_steps) continue; // gap
        const double cov = cum_ij[u + 1] - cum_ij[lo];
        const double var_i = cum_ii[u + 1] - cum_ii[lo];
        const double var_j = cum_jj[u + 1] - cum_jj[lo];
        if (!(var_i > 0.0) || !(var_j > 0.0)) continue; // degenerate window
        rho[u] = std::clamp(cov / std::sqrt(var_i * var_j), -1.0, 1.0);
    }
    return rho;
}

std::vector<double> dejumped_correlation(const std::vector<double>& x_hat_i,
                                         const std::vector<double>& gamma_i,
                                         const std::vector<double>& x_hat_j,
                                         const std::vector<double>& gamma_j,
                                         const dependence_config& cfg) {
    check_aligned(x_hat_i.size(), x_hat_j.size(), "dejumped_correlation");
    if (x_hat_i.size() < 2) throw data_error("dejumped_correlation: need at least 2 samples");
    const std::size_t n = x_hat_i.size() - 1;
    check_aligned(gamma_i.size(), n, "dejumped_correlation (gamma_i)");
    check_aligned(gamma_j.size(), n, "dejumped_correlation (gamma_j)");
    std::vector<double> a_i(n), a_j(n);
    std::vector<unsigned char> valid(n);
    for (std::size_t u = 0; u < n; ++u) {
        a_i[u] = sigmoid_d1(x_hat_i[u]) * (x_hat_i[u + 1] - x_hat_i[u]);
        a_j[u] = sigmoid_d1(x_hat_j[u]) * (x_hat_j[u + 1] - x_hat_j[u]);
        valid[u] = std::max(gamma_i[u], gamma_j[u]) < cfg.tau_J ? 1 : 0;
    }
    return dejumped_correlation_products(a_i, a_j, valid, cfg);
}

std::pair<double, double> cojump_moments(const std::vector<double>& x_hat_i,
                                         const std::vector<double>& gamma_i,
                                         const std::vector<double>& x_hat_j,
                                         const std::vector<double>& gamma_j, double dt,
                                         double tau_J) {
    check_aligned(x_hat_i.size(), x_hat_j.size(), "cojump_moments");
    if (x_hat_i.size() < 2) throw data_error("cojump_moments: need at least 2 samples");
    if (!(dt > 0.0)) throw config_error("cojump_moments: dt must be positive");
    const std::size_t n = x_hat_i.size() - 1;
    check_aligned(gamma_i.size(), n, "cojump_moments (gamma_i)");
    check_aligned(gamma_j.size(), n, "cojump_moments (gamma_j)");
    std::size_t joint = 0;
    double sum_prod = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
        if (gamma_i[u] > tau_J && gamma_j[u] > tau_J) {
            ++joint;
            const double dp_i = sigmoid(x_hat_i[u + 1]) - sigmoid(x_hat_i[u]);
            const double dp_j = sigmoid(x_hat_j[u + 1]) - sigmoid(x_hat_j[u]);
            sum_prod += dp_i * dp_j;
        }
    }
    const double intensity = static_cast<double>(joint) / (static_cast<double>(n) * dt);
    const double m2 = joint > 0 ? sum_prod / static_cast<double>(joint) : 0.0;
    return {intensity, m2};
}

pair_dependence estimate_pair_dependence(const std::vector<double>& x_hat_i,
                                         const std::vector<double>& gamma_i,
                                         const std::vector<double>& x_hat_j,
                                         const std::vector<double>& gamma_j,
                                         const dependence_config& cfg) {
    pair_dependence out;
    out.rho = dejumped_correlation(x_hat_i, gamma_i, x_hat_j, gamma_j, cfg);
    const auto [lam, m2] = cojump_moments(x_hat_i, gamma_i, x_hat_j, gamma_j, cfg.dt, cfg.tau_J);
    out.cojump_intensity = lam;
    out.cojump_m2 = m2;
    out.window = static_cast<double>(cfg.window_steps) * cfg.dt;
    return out;
}

nlohmann::json pair_dependence::to_json() const {
    nlohmann::json j;
    j["cojump_intensity"] = cojump_intensity;
    j["cojump_m2"] = cojump_m2;
    j["window_seconds"] = window;
    std::size_t defined = 0;
    double mean = 0.0;
    for (double r : rho)
        if (std::isfinite(r)) {
            ++defined;
            mean += r;
        }
    j["rho_defined_steps"] = defined;
    j["rho_mean"] = defined > 0 ? mean / static_cast<double>(defined) : 0.0;
    j["rho_gaps"] = rho.size() - defined;
    return j;
}

double hedge_ratio::effective() const {
    return std::clamp(shrinkage_alpha * beta + jump_correction, -clamp_abs, clamp_abs);
}

hedge_ratio beta_hedge(const hedge_inputs& in, double alpha, double clamp_abs,
                       const pair_dependence* cojump) {
    if (!(in.sigma_b_j > 0.0)) throw config_error("beta_hedge: sigma_b_j must be positive");
    if (alpha < 0.5 || alpha > 1.0)
        throw config_error("beta_hedge: shrinkage alpha must lie in [0.5, 1]");
    if (!(clamp_abs > 0.0)) throw config_error("beta_hedge: clamp_abs must be positive");
    hedge_ratio h;
    h.shrinkage_alpha = alpha;
    h.clamp_abs = clamp_abs;
    const double sp_i = sigmoid_d1(in.x_i);
    const double sp_j = std::max(sigmoid_d1(in.x_j), kSprimeFloor);
    h.beta = sp_i / sp_j * in.rho;
    if (cojump) {
        h.jump_correction = cojump->cojump_m2 * cojump->cojump_intensity /
                            (sp_j * sp_j * in.sigma_b_j * in.sigma_b_j);
    }
    return h;
}

void write_pair_csv(const std::string& path, const std::vector<double>& t,
                    const std::vector<double>& rho, const std::string& manifest_id) {
    if (t.size() != rho.size()) throw data_error("write_pair_csv: t and rho lengths differ");
    csv_writer out(path, manifest_id, {"t", "rho"});
    for (std::size_t u = 0; u < t.size(); ++u) {
        if (std::isfinite(rho[u]))
            out.write_row(t[u], rho[u]);
        else
            out.write_row(t[u], ""); // gap
    }
}

} // namespace oddskit
