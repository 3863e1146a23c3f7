#include <doctest.h>

#include <cmath>
#include <vector>

#include "oddskit/errors.hpp"
#include "oddskit/kernel.hpp"
#include "oddskit/logistic.hpp"
#include "oddskit/quadrature.hpp"

using namespace oddskit;

namespace {

kernel_params flat_params(double sigma, double lambda, jump_law law, std::size_t n = 4000,
                          double param_dt = 1.0) {
    kernel_params kp;
    kp.sigma_b.assign(n, sigma);
    kp.lambda.assign(n, lambda);
    kp.param_dt = param_dt;
    kp.law = law;
    return kp;
}

jump_law gaussian_law(double sd) {
    jump_law l;
    l.family = jump_family::symmetric_gaussian;
    l.sd = sd;
    return l;
}

jump_law de_law(double up, double dn) {
    jump_law l;
    l.family = jump_family::double_exponential;
    l.eta_up = up;
    l.eta_dn = dn;
    return l;
}

} // namespace

TEST_CASE("logistic map: values, derivatives, round trip") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(std::abs(sigmoid(1.0) - 0.731058578630005) < 1e-14);
    CHECK(std::abs(sigmoid_d1(1.0) - 0.196611933241482) < 1e-14);
    CHECK(sigmoid_d2(0.0) == 0.0);
    for (double x : {-12.0, -3.2, -0.5, 0.0, 0.7, 4.4, 18.0})
        CHECK(std::abs(logit(sigmoid(x)) - x) < 1e-9);
    // clamp: map saturates, inverse stays finite
    CHECK(sigmoid(500.0) == sigmoid(kLogitClamp));
    CHECK(logit(1.0) == kLogitClamp);
    CHECK(logit(0.0) == -kLogitClamp);
    // derivative identities against finite differences
    for (double x : {-2.0, -0.3, 1.1, 2.7}) {
        const double h = 1e-6;
        const double d1 = (sigmoid(x + h) - sigmoid(x - h)) / (2 * h);
        const double d2 = (sigmoid_d1(x + h) - sigmoid_d1(x - h)) / (2 * h);
        CHECK(std::abs(d1 - sigmoid_d1(x)) < 1e-9);
        CHECK(std::abs(d2 - sigmoid_d2(x)) < 1e-9);
    }
}

TEST_CASE("quadrature rules: moments of the weight functions") {
    // \int e^{-t^2} = sqrt(pi); \int t^2 e^{-t^2} = sqrt(pi)/2
    const quad_rule& gh = gauss_hermite(40);
    double s0 = 0, s2 = 0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
        s0 += gh.weights[i];
        s2 += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
    }
    CHECK(std::abs(s0 - std::sqrt(M_PI)) < 1e-12);
    CHECK(std::abs(s2 - 0.5 * std::sqrt(M_PI)) < 1e-12);
    // \int_0^inf t^k e^{-t} = k!
    const quad_rule& gl = gauss_laguerre(32);
    double l0 = 0, l1 = 0, l2 = 0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        l0 += gl.weights[i];
        l1 += gl.weights[i] * gl.nodes[i];
        l2 += gl.weights[i] * gl.nodes[i] * gl.nodes[i];
    }
    CHECK(std::abs(l0 - 1.0) < 1e-12);
    CHECK(std::abs(l1 - 1.0) < 1e-11);
    CHECK(std::abs(l2 - 2.0) < 1e-10);
}

TEST_CASE("jump compensation: quadrature matches frozen Monte Carlo reference") {
    // Reference for E[S(1+Z) - S(1) - S'(1) chi(Z)], Z ~ N(0, 0.5^2), radius 1,
    // from an independent 1e7-draw simulation: -1.048524632047e-02 (SE 1.57e-5).
    auto kp = flat_params(0.1, 0.02, gaussian_law(0.5));
    const double v = jump_compensation(kp, 1.0);
    CHECK(std::abs(v - (-1.048524632047e-02)) < 3.0 * 1.570e-05);
    // and the quadrature value itself, pinned tight (independent 200-node rule)
    CHECK(std::abs(v - (-1.047776338671e-02)) < 1e-9);
}

TEST_CASE("jump compensation: internal MC fallback agrees with quadrature") {
    auto kp_g = flat_params(0.1, 0.02, gaussian_law(0.35));
    const double vq = jump_compensation(kp_g, 0.8);
    const double vm = jump_compensation_mc(kp_g, 0.8, 400000, 99);
    CHECK(std::abs(vq - vm) < 5e-4);

    auto kp_d = flat_params(0.1, 0.02, de_law(6.0, 13.0));
    const double dq = jump_compensation(kp_d, -0.7);
    const double dm = jump_compensation_mc(kp_d, -0.7, 400000, 123);
    CHECK(std::abs(dq - dm) < 5e-4);
}

TEST_CASE("double exponential law: centering and truncated mean") {
    jump_law l = de_law(5.0, 11.0);
    l.validate();
    CHECK(l.mean() == 0.0);
    // sample moments agree with the formulas
    rng_stream rs(42);
    double m1 = 0, m2 = 0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const double z = l.sample(rs);
        m1 += z;
        m2 += z * z;
    }
    m1 /= n;
    m2 /= n;
    CHECK(std::abs(m1) < 3e-3);
    CHECK(std::abs(m2 - l.second_moment()) < 3e-3);
    // truncated mean vs direct integration by sampling
    rng_stream rs2(43);
    double tm = 0;
    for (int i = 0; i < n; ++i) {
        const double z = l.sample(rs2);
        if (std::abs(z) < 1.0) tm += z;
    }
    tm /= n;
    CHECK(std::abs(tm - l.truncated_mean(1.0)) < 3e-3);
}

TEST_CASE("empirical bins: validation, moments, sampling") {
    jump_law l;
    l.family = jump_family::empirical_bins;
    l.bin_edges = {-0.9, -0.3, 0.0, 0.2, 0.8};
    l.bin_masses = {0.15, 0.25, 0.35, 0.25};
    l.validate();
    CHECK(l.second_moment() > 0.0);
    // sampling reproduces bin masses
    rng_stream rs(7);
    std::vector<int> hits(4, 0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = l.sample(rs);
        for (int b = 0; b < 4; ++b)
            if (z >= l.bin_edges[b] && z < l.bin_edges[b + 1]) { ++hits[b]; break; }
    }
    for (int b = 0; b < 4; ++b)
        CHECK(std::abs(hits[b] / double(n) - l.bin_masses[b]) < 5e-3);
    // bad masses rejected
    jump_law bad = l;
    bad.bin_masses[0] += 0.01;
    CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("risk-neutral drift: origin, closed form, antisymmetry, cap") {
    auto kp = flat_params(0.1, 0.0, gaussian_law(0.4));
    // lambda = 0, x = 2: mu = 0.5 sigma^2 (2p - 1)
    CHECK(std::abs(rn_drift(kp, 2.0, 0.0) - 3.8079707797788230e-03) < 1e-9);

    auto kpj = flat_params(0.08, 0.05, gaussian_law(0.4));
    CHECK(std::abs(rn_drift(kpj, 0.0, 0.0)) < 1e-12);
    for (double x : {0.4, 1.3, 2.6}) {
        CHECK(std::abs(rn_drift(kpj, x, 0.0) + rn_drift(kpj, -x, 0.0)) < 1e-12);
    }
    auto kpd = flat_params(0.08, 0.05, de_law(9.0, 9.0));
    for (double x : {0.5, 1.7})
        CHECK(std::abs(rn_drift(kpd, x, 0.0) + rn_drift(kpd, -x, 0.0)) < 1e-12);

    auto hot = flat_params(5.0, 0.0, gaussian_law(0.4));
    CHECK(rn_drift(hot, 3.0, 0.0) == 0.25);
    CHECK(rn_drift(hot, -3.0, 0.0) == -0.25);
}

TEST_CASE("simulate: determinism and antithetic stream separation") {
    auto kp = flat_params(0.06, 0.02, gaussian_law(0.3), 400);
    auto a = simulate_path(kp, 0.3, 120.0, 0.5, 11, 5, false);
    auto b = simulate_path(kp, 0.3, 120.0, 0.5, 11, 5, false);
    CHECK(a.x == b.x);
    CHECK(a.jump == b.jump);

    auto c = simulate_path(kp, 0.3, 120.0, 0.5, 11, 5, true);
    CHECK(c.jump == a.jump);
    CHECK(c.jump_size == a.jump_size);
    bool x_differs = false;
    for (std::size_t i = 0; i < a.x.size(); ++i)
        if (a.x[i] != c.x[i]) { x_differs = true; break; }
    CHECK(x_differs);

    auto d = simulate_path(kp, 0.3, 120.0, 0.5, 11, 6, false);
    bool differs = false;
    for (std::size_t i = 0; i < a.x.size(); ++i)
        if (a.x[i] != d.x[i]) { differs = true; break; }
    CHECK(differs);
}

TEST_CASE("simulate: rejects lambda * dt >= 1") {
    auto kp = flat_params(0.05, 2.5, gaussian_law(0.3), 100);
    CHECK_THROWS_AS(simulate_path(kp, 0.0, 10.0, 0.5, 1), config_error);
}

TEST_CASE("simulate: probability is a martingale (symmetric jumps)") {
    auto kp = flat_params(0.10, 0.01, gaussian_law(0.4), 200, 1.0);
    const double x0 = 0.6;
    const double p0 = sigmoid(x0);
    const int pairs = 2000;
    std::vector<double> avg;
    avg.reserve(pairs);
    for (int i = 0; i < pairs; ++i) {
        auto up = simulate_path(kp, x0, 200.0, 0.5, 2024, i, false);
        auto dn = simulate_path(kp, x0, 200.0, 0.5, 2024, i, true);
        avg.push_back(0.5 * (up.p.back() + dn.p.back()));
    }
    double m = 0, s2 = 0;
    for (double v : avg) m += v;
    m /= pairs;
    for (double v : avg) s2 += (v - m) * (v - m);
    s2 /= (pairs - 1);
    const double se = std::sqrt(s2 / pairs);
    CHECK(std::abs(m - p0) < 3.0 * se);
}

TEST_CASE("simulate: martingale holds for asymmetric jumps via the compensator") {
    auto kp = flat_params(0.05, 0.05, de_law(5.0, 12.0), 200, 1.0);
    const double x0 = -0.4;
    const double p0 = sigmoid(x0);
    const int pairs = 2000;
    std::vector<double> avg;
    avg.reserve(pairs);
    for (int i = 0; i < pairs; ++i) {
        auto up = simulate_path(kp, x0, 150.0, 0.5, 515, i, false);
        auto dn = simulate_path(kp, x0, 150.0, 0.5, 515, i, true);
        avg.push_back(0.5 * (up.p.back() + dn.p.back()));
    }
    double m = 0, s2 = 0;
    for (double v : avg) m += v;
    m /= pairs;
    for (double v : avg) s2 += (v - m) * (v - m);
    s2 /= (pairs - 1);
    const double se = std::sqrt(s2 / pairs);
    CHECK(std::abs(m - p0) < 3.0 * se);
}
