// ---------------------------------------------------------------------------
// EM jump-separation tests: posterior responsibilities against a direct
// Bayes-rule computation, weighted-moment updates, rolling-window blending,
// drift enforcement, and full-loop recovery on simulated ground truth.
// ---------------------------------------------------------------------------

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oddskit/em.hpp"
#include "oddskit/errors.hpp"
#include "oddskit/kernel.hpp"
#include "oddskit/logistic.hpp"
#include "oddskit/rng.hpp"
#include "oddskit/stats.hpp"

using namespace oddskit;

namespace {

uniform_series bare_series(const std::vector<double>& y, double dt = 1.0) {
    uniform_series s;
    s.dt = dt;
    s.y = y;
    const std::size_t n = y.size();
    s.t.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.t[i] = dt * static_cast<double>(i);
    s.p_tilde.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.p_tilde[i] = sigmoid(y[i]);
    s.spread.assign(n, 0.02);
    s.inv_depth.assign(n, 0.5);
    s.trade_rate.assign(n, 1.0);
    s.imbalance.assign(n, 0.0);
    s.halted.assign(n, 0);
    return s;
}

mixture_estimates const_estimates(std::size_t n, double sigma_b2, double lambda, double sJ2) {
    mixture_estimates est;
    est.family = jump_family::symmetric_gaussian;
    est.sigma_b2.assign(n, sigma_b2);
    est.lambda.assign(n, lambda);
    est.sJ2.assign(n, sJ2);
    est.window_center = {(static_cast<double>(n) - 1.0) / 2.0};
    jump_law law;
    law.family = jump_family::symmetric_gaussian;
    law.sd = std::sqrt(sJ2);
    est.window_law = {law};
    return est;
}

double normal_density(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) /
           std::sqrt(2.0 * 3.14159265358979323846 * var);
}

} // namespace

TEST_CASE("posterior jump probabilities: closed cases and Bayes oracle") {
    const double dt = 1.0;

    SUBCASE("identical component densities give gamma = lambda*dt") {
        const double sig2 = 4e-4, lam = 0.05;
        std::vector<double> dx = {-0.03, 0.0, 0.011, 0.5, -0.2};
        // Jump second moment equal to the diffusive step variance makes the
        // two gaussian components coincide pointwise.
        auto est = const_estimates(dx.size(), sig2, lam, sig2 * dt);
        auto resp = e_step(dx, {}, est, dt, 0.7);
        for (double g : resp.gamma) CHECK(g == doctest::Approx(lam * dt).epsilon(1e-12));
        CHECK_FALSE(resp.degenerate_warning);
    }

    SUBCASE("zero intensity forces gamma to zero even on huge moves") {
        std::vector<double> dx = {5.0, -8.0, 0.001};
        auto est = const_estimates(dx.size(), 4e-4, 0.0, 0.25);
        auto resp = e_step(dx, {}, est, dt, 0.7);
        for (double g : resp.gamma) CHECK(g == 0.0);
    }

    SUBCASE("matches a directly computed two-component posterior") {
        const double sigma_b = 0.02;
        const double move = 10.0 * sigma_b * std::sqrt(dt);
        const double jump_sd = 5.0 * sigma_b * std::sqrt(dt);
        const double lam = 0.01;
        std::vector<double> dx = {move};
        auto est = const_estimates(1, sigma_b * sigma_b, lam, jump_sd * jump_sd);
        auto resp = e_step(dx, {}, est, dt, 0.7);

        const double phi = normal_density(move, 0.0, sigma_b * sigma_b * dt);
        const double psi = normal_density(move, 0.0, jump_sd * jump_sd);
        const double direct = lam * dt * psi / (lam * dt * psi + (1.0 - lam * dt) * phi);
        CHECK(resp.gamma[0] == doctest::Approx(direct).epsilon(1e-10));
        CHECK(resp.jump_flags[0] == (direct > 0.7 ? 1 : 0));
    }

    SUBCASE("both densities underflowing yields 0.5 and a warning") {
        std::vector<double> dx = {1000.0};
        auto est = const_estimates(1, 1e-6, 0.01, 1e-6);
        auto resp = e_step(dx, {}, est, dt, 0.7);
        CHECK(resp.gamma[0] == 0.5);
        CHECK(resp.degenerate_warning);
    }

    SUBCASE("responsibilities are location-equivariant") {
        rng_stream rng(991);
        const std::size_t n = 200;
        std::vector<double> dx(n), mu(n), dx_s(n), mu_s(n);
        const double shift = 0.37;
        for (std::size_t u = 0; u < n; ++u) {
            dx[u] = 0.03 * rng.normal() + (rng.uniform() < 0.02 ? 0.6 : 0.0);
            mu[u] = 0.001 * rng.normal();
            dx_s[u] = dx[u] + shift;
            mu_s[u] = mu[u] + shift / dt;
        }
        auto est = const_estimates(n, 9e-4, 0.02, 0.36);
        auto a = e_step(dx, mu, est, dt, 0.7);
        auto b = e_step(dx_s, mu_s, est, dt, 0.7);
        for (std::size_t u = 0; u < n; ++u)
            CHECK(a.gamma[u] == doctest::Approx(b.gamma[u]).epsilon(1e-12));
    }
}

TEST_CASE("weighted-moment updates reproduce their defining formulas") {
    const double dt = 0.5;
    rng_stream rng(1234);
    const std::size_t n = 400;
    std::vector<double> dx(n), mu(n, 0.002);
    responsibilities resp;
    resp.gamma.assign(n, 0.0);
    resp.jump_flags.assign(n, 0);

    for (std::size_t u = 0; u < n; ++u) dx[u] = 0.04 * rng.normal() + mu[u] * dt;

    SUBCASE("all-diffusion responsibilities") {
        auto est = m_step(dx, mu, resp, static_cast<double>(n) * dt, dt,
                          jump_family::symmetric_gaussian);
        double acc = 0.0;
        for (std::size_t u = 0; u < n; ++u)
            acc += (dx[u] - mu[u] * dt) * (dx[u] - mu[u] * dt);
        const double expected = acc / (static_cast<double>(n) * dt);
        for (std::size_t u = 0; u < n; ++u) {
            CHECK(est.sigma_b2[u] == doctest::Approx(expected).epsilon(1e-12));
            CHECK(est.lambda[u] == 0.0);
            CHECK(est.sJ2[u] == 0.0);
        }
    }

    SUBCASE("all-jump responsibilities are diffusive-degenerate") {
        responsibilities all_jump;
        all_jump.gamma.assign(n, 1.0);
        all_jump.jump_flags.assign(n, 1);
        CHECK_THROWS_AS(m_step(dx, mu, all_jump, static_cast<double>(n) * dt, dt,
                               jump_family::symmetric_gaussian),
                        data_error);
    }

    SUBCASE("mixed responsibilities match hand-computed moments") {
        rng_stream jrng(77);
        for (std::size_t u = 0; u < n; u += 25) {
            dx[u] = (jrng.uniform() < 0.5 ? 1.0 : -1.0) * (0.5 + 0.2 * jrng.uniform());
            resp.gamma[u] = 0.95;
        }
        for (std::size_t u = 13; u < n; u += 40) resp.gamma[u] = std::max(resp.gamma[u], 0.2);

        auto est = m_step(dx, mu, resp, static_cast<double>(n) * dt, dt,
                          jump_family::symmetric_gaussian);
        double sg = 0.0, s1g = 0.0, sdiff = 0.0, sjump = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            sg += resp.gamma[u];
            s1g += 1.0 - resp.gamma[u];
            sdiff += (1.0 - resp.gamma[u]) * (dx[u] - mu[u] * dt) * (dx[u] - mu[u] * dt);
            sjump += resp.gamma[u] * dx[u] * dx[u];
        }
        CHECK(est.sigma_b2[0] == doctest::Approx(sdiff / (s1g * dt)).epsilon(1e-12));
        CHECK(est.lambda[0] ==
              doctest::Approx(sg / static_cast<double>(n) / dt).epsilon(1e-12));
        CHECK(est.sJ2[0] == doctest::Approx(sjump / sg).epsilon(1e-12));
        CHECK(est.window_law[0].sd ==
              doctest::Approx(std::sqrt(sjump / sg)).epsilon(1e-12));
    }

    SUBCASE("diffusive variance is location-equivariant") {
        const double shift = 0.21;
        std::vector<double> dx_s(n), mu_s(n);
        for (std::size_t u = 0; u < n; ++u) {
            dx_s[u] = dx[u] + shift;
            mu_s[u] = mu[u] + shift / dt;
        }
        auto a = m_step(dx, mu, resp, static_cast<double>(n) * dt, dt,
                        jump_family::symmetric_gaussian);
        auto b = m_step(dx_s, mu_s, resp, static_cast<double>(n) * dt, dt,
                        jump_family::symmetric_gaussian);
        CHECK(a.sigma_b2[0] == doctest::Approx(b.sigma_b2[0]).epsilon(1e-12));
    }

    SUBCASE("window shorter than 30 steps is rejected") {
        CHECK_THROWS_AS(
            m_step(dx, mu, resp, 10.0 * dt, dt, jump_family::symmetric_gaussian),
            data_error);
    }
}

TEST_CASE("rolling windows blend linearly and inherit on degeneracy") {
    const double dt = 1.0;
    const std::size_t n = 200;
    rng_stream rng(555);
    std::vector<double> dx(n), mu;
    responsibilities resp;
    resp.gamma.assign(n, 0.0);
    resp.jump_flags.assign(n, 0);
    // Low variance in the first half, higher in the second.
    for (std::size_t u = 0; u < n; ++u)
        dx[u] = (u < n / 2 ? 0.02 : 0.06) * rng.normal();

    SUBCASE("per-step values are flat outside the outer centers and monotone between") {
        auto est = m_step(dx, mu, resp, 100.0, dt, jump_family::symmetric_gaussian);
        // Windows start at 0, 50, 100 with width 100; centers 49.5, 99.5, 149.5.
        REQUIRE(est.window_center.size() == 3);
        CHECK(est.window_center[0] == doctest::Approx(49.5));
        CHECK(est.window_center[2] == doctest::Approx(149.5));
        double w0 = 0.0;
        for (std::size_t u = 0; u < 100; ++u) w0 += dx[u] * dx[u];
        w0 /= 100.0 * dt;
        for (std::size_t u = 0; u < 50; ++u)
            CHECK(est.sigma_b2[u] == doctest::Approx(w0).epsilon(1e-12));
        for (std::size_t u = 51; u < 149; ++u)
            CHECK(est.sigma_b2[u] >= est.sigma_b2[u - 1] - 1e-15);
        CHECK(est.sigma_b2[199] == doctest::Approx(est.sigma_b2[150]).epsilon(1e-12));
        CHECK(est.sigma_b2[199] > w0);
    }

    SUBCASE("a fully jump-weighted window inherits its predecessor") {
        for (std::size_t u = 100; u < n; ++u) {
            resp.gamma[u] = 1.0;
            dx[u] = (u % 2 == 0) ? 0.5 : -0.5;
        }
        auto est = m_step(dx, mu, resp, 100.0, dt, jump_family::symmetric_gaussian);
        // Window [100,200) has no diffusive weight; it must carry window
        // [50,150)'s estimates, whose intensity is 50 flagged of 100 steps.
        CHECK(est.lambda[199] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(est.sJ2[199] == doctest::Approx(0.25).epsilon(1e-12));
    }

    SUBCASE("a window with thin jump mass takes the pooled scale") {
        // Three certain jumps early, one half-weight move late: the last
        // window's local scale rests on half a jump, so it must pool, while
        // its intensity stays local.
        resp.gamma[10] = resp.gamma[20] = resp.gamma[30] = 1.0;
        dx[10] = 0.6;
        dx[20] = -0.6;
        dx[30] = 0.6;
        resp.gamma[160] = 0.5;
        dx[160] = 0.3;
        auto est = m_step(dx, mu, resp, 100.0, dt, jump_family::symmetric_gaussian);
        const double pooled = (3.0 * 0.36 + 0.5 * 0.09) / 3.5;
        CHECK(est.sJ2[0] == doctest::Approx(0.36).epsilon(1e-12));
        CHECK(est.sJ2[199] == doctest::Approx(pooled).epsilon(1e-12));
        CHECK(est.lambda[199] == doctest::Approx(0.005).epsilon(1e-12));
        CHECK(est.lambda[99] < 1e-3);
    }
}

TEST_CASE("risk-neutral drift enforcement matches the kernel and is capped") {
    em_config cfg;
    cfg.dt = 1.0;

    SUBCASE("symmetric setup at the origin gives zero drift") {
        std::vector<double> x(51, 0.0);
        auto est = const_estimates(50, 0.01, 0.02, 0.09);
        auto mu = enforce_rn_drift(x, est, cfg);
        REQUIRE(mu.size() == 50);
        for (double m : mu) CHECK(std::abs(m) < 1e-15);
    }

    SUBCASE("diffusion-only drift equals the closed form at x = 2") {
        std::vector<double> x(41, 2.0);
        auto est = const_estimates(40, 0.01, 0.0, 0.0);
        auto mu = enforce_rn_drift(x, est, cfg);
        for (double m : mu)
            CHECK(m == doctest::Approx(3.8079707797788230e-03).epsilon(1e-9));
    }

    SUBCASE("large diffusive variance engages the cap") {
        std::vector<double> x(31, 5.0);
        auto est = const_estimates(30, 25.0, 0.0, 0.0);
        auto mu = enforce_rn_drift(x, est, cfg);
        for (double m : mu) CHECK(std::abs(m) == doctest::Approx(0.25).epsilon(1e-12));
    }
}

TEST_CASE("calibration on noiseless pure diffusion finds no jumps") {
    kernel_params kp;
    kp.sigma_b = {0.05};
    kp.lambda = {0.0};
    kp.law.family = jump_family::symmetric_gaussian;
    kp.law.sd = 0.3;
    auto path = simulate_path(kp, 0.2, 3000.0, 1.0, 4242);

    auto series = bare_series(path.x);
    std::vector<double> meas_var(series.y.size(), 0.0);
    em_config cfg;
    auto res = calibrate(series, meas_var, cfg);

    CHECK(res.converged);
    CHECK(res.outer_loops_used == 1);
    CHECK(mean(res.est.lambda) < 1e-4);
    CHECK(std::sqrt(mean(res.est.sigma_b2)) == doctest::Approx(0.05).epsilon(0.10));
    for (double m : res.drift) CHECK(std::abs(m) < 0.01);
    CHECK(res.sanity["ratio"].get<double>() == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("calibration recovers planted diffusion and jump parameters") {
    const double sigma_true = 0.08, lambda_true = 0.002, sd_true = 0.5;
    kernel_params kp;
    kp.sigma_b = {sigma_true};
    kp.lambda = {lambda_true};
    kp.law.family = jump_family::symmetric_gaussian;
    kp.law.sd = sd_true;
    auto path = simulate_path(kp, -0.2, 6000.0, 1.0, 13);

    std::size_t true_jumps = 0;
    for (auto f : path.jump) true_jumps += f;
    REQUIRE(true_jumps > 0);

    auto series = bare_series(path.x);
    std::vector<double> meas_var(series.y.size(), 0.0);
    em_config cfg;
    auto res = calibrate(series, meas_var, cfg);

    // Global-phase log-likelihood is nondecreasing (EM ascent property).
    REQUIRE(res.global_loglik.size() >= 2);
    for (std::size_t i = 1; i < res.global_loglik.size(); ++i)
        CHECK(res.global_loglik[i] >= res.global_loglik[i - 1] - 1e-9);

    const double sig_hat = std::sqrt(mean(res.est.sigma_b2));
    const double lam_hat = mean(res.est.lambda);
    CHECK(std::abs(sig_hat - sigma_true) / sigma_true < 0.15);
    CHECK(std::abs(lam_hat - lambda_true) / lambda_true < 0.30);

    // Flags line up with the planted jumps: every jump whose realized move
    // clears the diffusive band is caught, and the count stays near truth.
    std::size_t caught = 0, large = 0;
    for (std::size_t u = 0; u + 1 < path.x.size(); ++u) {
        if (path.jump[u + 1] && std::abs(path.x[u + 1] - path.x[u]) > 0.4) {
            ++large;
            if (res.resp.jump_flags[u]) ++caught;
        }
    }
    CHECK(caught == large);
    CHECK(res.sanity["jump_count"].get<std::size_t>() <= true_jumps + 3);
    CHECK(res.sanity["ratio"].get<double>() > 0.8);
    CHECK(res.sanity["ratio"].get<double>() < 1.25);

    // De-jumped residuals look more Gaussian than the raw increments.
    std::vector<double> raw, dejumped;
    for (std::size_t u = 0; u + 1 < path.x.size(); ++u) {
        const double d = path.x[u + 1] - path.x[u];
        raw.push_back(d);
        if (res.resp.gamma[u] <= cfg.tau_J) dejumped.push_back(d);
    }
    CHECK(std::abs(excess_kurtosis(dejumped)) < std::abs(excess_kurtosis(raw)));
}

TEST_CASE("calibration tolerates observation noise") {
    kernel_params kp;
    kp.sigma_b = {0.08};
    kp.lambda = {0.002};
    kp.law.family = jump_family::symmetric_gaussian;
    kp.law.sd = 0.5;
    auto path = simulate_path(kp, 0.1, 6000.0, 1.0, 21);

    rng_stream noise(2100);
    const double eta = 0.04;
    std::vector<double> y(path.x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = path.x[i] + eta * noise.normal();
    auto series = bare_series(y);
    std::vector<double> meas_var(y.size(), eta * eta);

    em_config cfg;
    auto res = calibrate(series, meas_var, cfg);
    const double sig_hat = std::sqrt(mean(res.est.sigma_b2));
    const double lam_hat = mean(res.est.lambda);
    CHECK(std::abs(sig_hat - 0.08) / 0.08 < 0.20);
    CHECK(lam_hat > 0.001);
    CHECK(lam_hat < 0.004);
}

TEST_CASE("drift-corrected resimulation keeps the belief a martingale") {
    // Simulate with parameters of the same magnitude EM recovers, using the
    // kernel's drift: ensemble terminal beliefs must center on the start.
    kernel_params kp;
    kp.sigma_b = {0.08};
    kp.lambda = {0.002};
    kp.law.family = jump_family::symmetric_gaussian;
    kp.law.sd = 0.5;
    const double x0 = -0.2, p0 = sigmoid(x0);
    const int n_pairs = 800;
    std::vector<double> terminal;
    terminal.reserve(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        auto a = simulate_path(kp, x0, 200.0, 0.5, 909, i, false);
        auto b = simulate_path(kp, x0, 200.0, 0.5, 909, i, true);
        terminal.push_back(0.5 * (a.p.back() + b.p.back()));
    }
    const double m = mean(terminal);
    const double se = std::sqrt(variance(terminal) / terminal.size());
    CHECK(std::abs(m - p0) < 3.0 * se);
}
