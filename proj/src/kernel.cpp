#include "oddskit/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "oddskit/errors.hpp"
#include "oddskit/logistic.hpp"

namespace oddskit {

void kernel_params::validate() const {
    if (sigma_b.empty() || lambda.empty()) throw config_error("kernel: empty parameter grid");
    if (sigma_b.size() != lambda.size())
        throw config_error("kernel: sigma_b and lambda grids must have equal length");
    for (double s : sigma_b)
        if (!(s >= 0.0) || !std::isfinite(s)) throw config_error("kernel: sigma_b must be >= 0");
    for (double l : lambda)
        if (!(l >= 0.0) || !std::isfinite(l)) throw config_error("kernel: lambda must be >= 0");
    if (!(param_dt > 0.0)) throw config_error("kernel: param_dt must be positive");
    if (!(truncation_radius > 0.0)) throw config_error("kernel: truncation radius must be positive");
    if (!(drift_cap > 0.0)) throw config_error("kernel: drift cap must be positive");
    if (!(sprime_floor > 0.0)) throw config_error("kernel: S' floor must be positive");
    if (quad_nodes < 32) throw config_error("kernel: need at least 32 quadrature nodes");
    law.validate();
}

namespace {

double grid_at(const std::vector<double>& g, double t, double param_dt) {
    if (t <= 0.0) return g.front();
    auto idx = static_cast<std::size_t>(t / param_dt);
    if (idx >= g.size()) idx = g.size() - 1;
    return g[idx];
}

} // namespace

double kernel_params::sigma_at(double t) const { return grid_at(sigma_b, t, param_dt); }
double kernel_params::lambda_at(double t) const { return grid_at(lambda, t, param_dt); }

double jump_compensation(const kernel_params& params, double x, std::uint64_t mc_seed) {
    const double sx = sigmoid(x);
    const double sp = sigmoid_d1(x);
    const double r = params.truncation_radius;
    // E[S(x+Z) - S(x)] minus S'(x) E[chi(Z)]; the truncated mean has a closed
    // form per family, so the quadrature only has to handle the smooth part.
    const double smooth = jump_expectation(
        params.law, params.quad_nodes, mc_seed,
        [&](double z) { return sigmoid(x + z) - sx; });
    return smooth - sp * params.law.truncated_mean(r);
}

double jump_compensation_mc(const kernel_params& params, double x, int n_draws,
                            std::uint64_t seed) {
    const double sx = sigmoid(x);
    const double sp = sigmoid_d1(x);
    const double r = params.truncation_radius;
    rng_stream rs(seed);
    double acc = 0.0;
    for (int i = 0; i < n_draws; ++i) {
        const double z = params.law.sample(rs);
        const double chi = (std::abs(z) < r) ? z : 0.0;
        acc += sigmoid(x + z) - sx - sp * chi;
    }
    return acc / n_draws;
}

double rn_drift(const kernel_params& params, double x, double t) {
    x = clamp_logit(x);
    const double sig = params.sigma_at(t);
    const double lam = params.lambda_at(t);
    const double curvature = 0.5 * sigmoid_d2(x) * sig * sig;
    const double comp = (lam > 0.0) ? lam * jump_compensation(params, x) : 0.0;
    const double denom = std::max(sigmoid_d1(x), params.sprime_floor);
    const double mu = -(curvature + comp) / denom;
    return std::clamp(mu, -params.drift_cap, params.drift_cap);
}

double state_drift(const kernel_params& params, double x, double t) {
    const double mu = rn_drift(params, x, t);
    const double lam = params.lambda_at(t);
    if (lam <= 0.0) return mu;
    return mu - lam * params.law.truncated_mean(params.truncation_radius);
}

logit_path simulate_path(const kernel_params& params, double x0, double horizon, double dt,
                         std::uint64_t seed, std::uint64_t path_index, bool antithetic) {
    params.validate();
    if (!(dt > 0.0) || !(horizon > 0.0)) throw config_error("simulate: horizon and dt must be positive");
    const auto n_steps = static_cast<std::size_t>(std::llround(horizon / dt));
    if (n_steps == 0) throw config_error("simulate: horizon shorter than one step");
    const double max_lambda = *std::max_element(params.lambda.begin(), params.lambda.end());
    if (max_lambda * dt >= 1.0)
        throw config_error("simulate: lambda * dt >= 1; shrink the step or the intensity");

    rng_stream brownian(derive_seed(seed, path_index, 1));
    rng_stream jumps(derive_seed(seed, path_index, 2));
    const double flip = antithetic ? -1.0 : 1.0;

    logit_path path;
    path.t.resize(n_steps + 1);
    path.x.resize(n_steps + 1);
    path.p.resize(n_steps + 1);
    path.jump.assign(n_steps + 1, 0);
    path.jump_size.assign(n_steps + 1, 0.0);

    double x = clamp_logit(x0);
    path.t[0] = 0.0;
    path.x[0] = x;
    path.p[0] = sigmoid(x);

    const double sqdt = std::sqrt(dt);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = k * dt;
        const double mu = state_drift(params, x, t);
        const double dw = flip * brownian.normal() * sqdt;
        x += mu * dt + params.sigma_at(t) * dw;
        // Bernoulli thinning: at most one jump per step.  Antithetic partners
        // share this stream, so their jump times and sizes coincide and only
        // the Brownian part is mirrored.
        const double u = jumps.uniform();
        double z = 0.0;
        if (u < params.lambda_at(t) * dt) {
            z = params.law.sample(jumps);
            x += z;
            path.jump[k + 1] = 1;
        }
        x = clamp_logit(x);
        path.t[k + 1] = (k + 1) * dt;
        path.x[k + 1] = x;
        path.p[k + 1] = sigmoid(x);
        path.jump_size[k + 1] = z;
    }
    return path;
}

} // namespace oddskit
