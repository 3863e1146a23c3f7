// ---------------------------------------------------------------------------
// Belief-surface tests: B-spline basis identities, weighted binning,
// squared-link penalized fits (constant and planar limits, smoothing gain
// over raw bins), hull-checked evaluation, bootstrap reproducibility, and
// serialization round-trips.
// ---------------------------------------------------------------------------

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "oddskit/bspline.hpp"
#include "oddskit/csv.hpp"
#include "oddskit/errors.hpp"
#include "oddskit/rng.hpp"
#include "oddskit/surface.hpp"

using namespace oddskit;

namespace {

// Samples laid on an n_tau x n_m lattice of cell centers with values from
// a callable truth(tau, m).
template <class F>
calib_series lattice_series(std::size_t n_tau, std::size_t n_m, double tau_max, double m_lo,
                            double m_hi, F truth, double var_hat = 0.01,
                            std::size_t per_cell = 1, double noise_sd = 0.0,
                            std::uint64_t seed = 0) {
    calib_series s;
    s.resolution_time = tau_max;
    rng_stream rng(seed ? seed : 1);
    const double dtau = tau_max / static_cast<double>(n_tau);
    const double dm = (m_hi - m_lo) / static_cast<double>(n_m);
    for (std::size_t i = 0; i < n_tau; ++i)
        for (std::size_t j = 0; j < n_m; ++j)
            for (std::size_t r = 0; r < per_cell; ++r) {
                const double tau = (static_cast<double>(i) + 0.5) * dtau;
                const double m = m_lo + (static_cast<double>(j) + 0.5) * dm;
                s.t.push_back(s.resolution_time - tau);
                s.m.push_back(m);
                double v = truth(tau, m);
                if (noise_sd > 0.0) v += noise_sd * rng.normal();
                s.value.push_back(v);
                s.var_hat.push_back(var_hat);
            }
    return s;
}

grid_spec lattice_spec(std::size_t n_tau, std::size_t n_m, double tau_max, double m_lo,
                       double m_hi) {
    grid_spec spec;
    spec.n_tau = n_tau;
    spec.n_m = n_m;
    spec.tau_min = 0.0;
    spec.tau_max = tau_max;
    spec.m_min = m_lo;
    spec.m_max = m_hi;
    return spec;
}

fit_config fast_fit(double alpha = std::numeric_limits<double>::quiet_NaN()) {
    fit_config cfg;
    cfg.alpha = alpha;
    cfg.n_basis_tau = 8;
    cfg.n_basis_m = 5;
    cfg.compute_bands = false;
    return cfg;
}

} // namespace

TEST_CASE("cubic B-spline basis: partition of unity, linear reproduction, derivatives") {
    const bspline_basis B(9, 0.0, 1.0);

    SUBCASE("values sum to one across the domain") {
        for (double x : {0.0, 0.013, 0.25, 0.4999, 0.5, 0.77, 0.999, 1.0}) {
            const auto vals = B.eval(x, 0);
            double s = 0.0;
            for (double v : vals) s += v;
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
            for (double v : vals) CHECK(v >= 0.0);
        }
    }

    SUBCASE("Greville coefficients reproduce the identity") {
        const auto g = B.greville();
        for (double x : {0.0, 0.1, 0.37, 0.5, 0.81, 1.0}) {
            const auto vals = B.eval(x, 0);
            double s = 0.0;
            for (std::size_t k = 0; k < vals.size(); ++k) s += vals[k] * g[k];
            CHECK(s == doctest::Approx(x).epsilon(1e-10));
        }
    }

    SUBCASE("second derivative matches a central finite difference") {
        const double x = 0.43, h = 1e-5;
        const auto d2 = B.eval(x, 2);
        const auto up = B.eval(x + h, 0);
        const auto dn = B.eval(x - h, 0);
        const auto mid = B.eval(x, 0);
        for (std::size_t k = 0; k < d2.size(); ++k) {
            const double fd = (up[k] - 2.0 * mid[k] + dn[k]) / (h * h);
            CHECK(d2[k] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
        }
    }

    SUBCASE("derivative of the partition of unity vanishes") {
        for (double x : {0.05, 0.5, 0.95}) {
            const auto d1 = B.eval(x, 1);
            double s = 0.0;
            for (double v : d1) s += v;
            CHECK(s == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("bin_estimates: weighted cells and two-regime recovery") {
    SUBCASE("single series with constant estimates fills cells with the constant") {
        auto s = lattice_series(6, 4, 60.0, -1.0, 1.0, [](double, double) { return 0.42; }, 0.04);
        const auto grid = bin_estimates({s}, lattice_spec(6, 4, 60.0, -1.0, 1.0));
        REQUIRE(grid.populated_cells() == 24);
        for (std::size_t i = 0; i < grid.n_tau(); ++i)
            for (std::size_t j = 0; j < grid.n_m(); ++j) {
                CHECK(grid.value_at(i, j) == doctest::Approx(0.42).epsilon(1e-14));
                // one sample per cell, inverse variance 1/0.04 = 25
                CHECK(grid.weight_at(i, j) == doctest::Approx(25.0).epsilon(1e-12));
            }
    }

    SUBCASE("two series in one cell combine as a precision-weighted mean") {
        calib_series a, b;
        a.resolution_time = b.resolution_time = 100.0;
        a.t = {50.0};
        a.m = {0.0};
        a.value = {1.0};
        a.var_hat = {0.5}; // precision 2
        b.t = {50.0};
        b.m = {0.0};
        b.value = {4.0};
        b.var_hat = {0.25}; // precision 4
        grid_spec spec = lattice_spec(1, 1, 100.0, -1.0, 1.0);
        const auto grid = bin_estimates({a, b}, spec);
        REQUIRE(grid.populated_cells() == 1);
        CHECK(grid.value_at(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
        // count x mean inverse posterior variance = 2 x 3 = 6
        CHECK(grid.weight_at(0, 0) == doctest::Approx(6.0).epsilon(1e-14));
    }

    SUBCASE("samples at or past resolution are rejected") {
        calib_series s;
        s.resolution_time = 10.0;
        s.t = {10.0};
        s.m = {0.0};
        s.value = {1.0};
        CHECK_THROWS_AS(bin_estimates({s}, grid_spec{}), data_error);
    }

    SUBCASE("no samples is an empty-grid error") {
        CHECK_THROWS_AS(bin_estimates({}, grid_spec{}), data_error);
        calib_series s;
        s.resolution_time = 10.0;
        CHECK_THROWS_AS(bin_estimates({s}, grid_spec{}), data_error);
    }

    SUBCASE("two-regime sigma_b(tau) binned within 10 percent per cell") {
        // sigma(tau) = 0.05 + 0.05 * 1{tau < 300}, sampled once per second.
        calib_series s;
        s.resolution_time = 600.0;
        rng_stream rng(99);
        for (int k = 0; k < 600; ++k) {
            const double t = static_cast<double>(k) + 0.5;
            const double tau = s.resolution_time - t;
            s.t.push_back(t);
            s.m.push_back(0.2 * rng.normal());
            s.value.push_back((tau < 300.0 ? 0.10 : 0.05) + 0.003 * rng.normal());
            s.var_hat.push_back(0.01);
        }
        grid_spec spec = lattice_spec(12, 1, 600.0, -2.0, 2.0);
        const auto grid = bin_estimates({s}, spec);
        for (std::size_t i = 0; i < grid.n_tau(); ++i) {
            if (grid.weight_at(i, 0) <= 0.0) continue;
            const double truth = grid.tau_axis[i] < 300.0 ? 0.10 : 0.05;
            CHECK(std::abs(grid.value_at(i, 0) - truth) < 0.1 * truth);
        }
    }
}

TEST_CASE("fit_surface: constant data gives a constant surface for any alpha") {
    auto s = lattice_series(8, 5, 80.0, -2.0, 2.0, [](double, double) { return 0.7; });
    const auto grid = bin_estimates({s}, lattice_spec(8, 5, 80.0, -2.0, 2.0));
    for (double alpha : {1e-2, 1.0, 1e2}) {
        const auto layer = fit_surface(grid, fast_fit(alpha));
        CHECK_FALSE(layer.one_d);
        CHECK(layer.curvature_norm < 1e-10);
        for (double tau : {grid.tau_axis.front(), 33.0, grid.tau_axis.back()})
            for (double m : {grid.m_axis.front(), 0.3, grid.m_axis.back()})
                CHECK(evaluate(layer, tau, m) == doctest::Approx(0.7).epsilon(1e-6));
    }
}

TEST_CASE("fit_surface: huge alpha on linear-in-tau data is planar") {
    auto plane = [](double tau, double) { return 0.2 + 0.001 * tau; };
    auto s = lattice_series(8, 5, 80.0, -2.0, 2.0, plane);
    const auto grid = bin_estimates({s}, lattice_spec(8, 5, 80.0, -2.0, 2.0));

    const auto stiff = fit_surface(grid, fast_fit(1e6));
    CHECK(stiff.curvature_norm < 1e-8);
    for (std::size_t i = 0; i < grid.n_tau(); ++i)
        for (std::size_t j = 0; j < grid.n_m(); ++j) {
            const double fitted = stiff.value_at(grid.tau_axis[i], grid.m_axis[j]);
            CHECK(std::abs(fitted - plane(grid.tau_axis[i], grid.m_axis[j])) < 5e-4);
        }

    SUBCASE("midpoint between adjacent grid knots averages their fitted values") {
        for (std::size_t i = 0; i + 1 < grid.n_tau(); ++i) {
            const double a = grid.tau_axis[i], b = grid.tau_axis[i + 1];
            const double f_mid = stiff.value_at(0.5 * (a + b), 0.0);
            const double avg = 0.5 * (stiff.value_at(a, 0.0) + stiff.value_at(b, 0.0));
            CHECK(f_mid == doctest::Approx(avg).epsilon(1e-5));
        }
    }
}

TEST_CASE("fit_surface: smoothing beats raw binning on a noisy smooth surface") {
    auto truth = [](double tau, double m) {
        const double u = tau / 80.0;
        const double v = (m + 2.0) / 4.0;
        return 0.04 + 0.12 * u * (1.0 - u) + 0.01 * v;
    };
    auto s = lattice_series(8, 5, 80.0, -2.0, 2.0, truth, 0.01, 4, 0.02, 424242);
    const auto grid = bin_estimates({s}, lattice_spec(8, 5, 80.0, -2.0, 2.0));
    const auto layer = fit_surface(grid, fast_fit()); // alpha by GCV

    double ise_fit = 0.0, ise_raw = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < grid.n_tau(); ++i)
        for (std::size_t j = 0; j < grid.n_m(); ++j) {
            if (grid.weight_at(i, j) <= 0.0) continue;
            const double f0 = truth(grid.tau_axis[i], grid.m_axis[j]);
            const double df = layer.value_at(grid.tau_axis[i], grid.m_axis[j]) - f0;
            const double dr = grid.value_at(i, j) - f0;
            ise_fit += df * df;
            ise_raw += dr * dr;
            ++n;
        }
    REQUIRE(n == 40);
    CHECK(ise_fit < ise_raw);

    SUBCASE("fitted surface stays nonnegative even where raw cells dip negative") {
        auto noisy = lattice_series(8, 5, 80.0, -2.0, 2.0,
                                    [](double, double) { return 0.001; }, 0.01, 1, 0.05, 777);
        const auto g2 = bin_estimates({noisy}, lattice_spec(8, 5, 80.0, -2.0, 2.0));
        bool has_negative_cell = false;
        for (std::size_t q = 0; q < g2.values.size(); ++q)
            if (g2.weights[q] > 0.0 && g2.values[q] < 0.0) has_negative_cell = true;
        REQUIRE(has_negative_cell);
        const auto l2 = fit_surface(g2, fast_fit());
        for (int a = 0; a <= 20; ++a)
            for (int b = 0; b <= 20; ++b) {
                const double tau = g2.tau_axis.front() +
                                   (g2.tau_axis.back() - g2.tau_axis.front()) * a / 20.0;
                const double m =
                    g2.m_axis.front() + (g2.m_axis.back() - g2.m_axis.front()) * b / 20.0;
                CHECK(evaluate(l2, tau, m) >= 0.0);
            }
    }
}

TEST_CASE("fit_surface: larger alpha never increases the curvature norm") {
    auto truth = [](double tau, double m) {
        const double u = tau / 80.0;
        return 0.05 + 0.10 * u * (1.0 - u) + 0.005 * m;
    };
    auto s = lattice_series(8, 5, 80.0, -2.0, 2.0, truth, 0.01, 2, 0.015, 31337);
    const auto grid = bin_estimates({s}, lattice_spec(8, 5, 80.0, -2.0, 2.0));
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha : {1e-4, 1e-2, 1.0, 1e2, 1e4}) {
        const auto layer = fit_surface(grid, fast_fit(alpha));
        CHECK(layer.curvature_norm <= prev * (1.0 + 1e-9) + 1e-15);
        prev = layer.curvature_norm;
    }
}

TEST_CASE("evaluate: hull checks, knot queries, and the 1-D fallback") {
    auto s = lattice_series(8, 5, 80.0, -2.0, 2.0, [](double tau, double) { return 0.3 + 0.001 * tau; });
    const auto grid = bin_estimates({s}, lattice_spec(8, 5, 80.0, -2.0, 2.0));
    const auto layer = fit_surface(grid, fast_fit(1.0));

    SUBCASE("knot query returns the fitted value at the knot") {
        for (std::size_t i = 0; i < grid.n_tau(); i += 3)
            for (std::size_t j = 0; j < grid.n_m(); j += 2) {
                const double tau = grid.tau_axis[i], m = grid.m_axis[j];
                CHECK(evaluate(layer, tau, m) == layer.value_at(tau, m));
            }
    }

    SUBCASE("queries outside the hull name the bounds") {
        CHECK_THROWS_WITH_AS(evaluate(layer, grid.tau_axis.back() + 5.0, 0.0),
                             doctest::Contains("outside knot hull"), data_error);
        CHECK_THROWS_AS(evaluate(layer, grid.tau_axis.front(), 99.0), data_error);
        try {
            evaluate(layer, -10.0, 0.0);
            FAIL("expected data_error");
        } catch (const data_error& e) {
            CHECK(std::string(e.what()).find("tau:[") != std::string::npos);
            CHECK(std::string(e.what()).find("m:[") != std::string::npos);
        }
    }

    SUBCASE("too few populated m bins falls back to a 1-D fit in tau") {
        auto thin = lattice_series(8, 2, 80.0, -0.5, 0.5,
                                   [](double tau, double) { return 0.2 + 0.001 * tau; });
        grid_spec spec = lattice_spec(8, 2, 80.0, -0.5, 0.5);
        const auto g1 = bin_estimates({thin}, spec);
        const auto l1 = fit_surface(g1, fast_fit(1e6));
        CHECK(l1.one_d);
        // m is ignored by a 1-D layer: far outside the m range still answers
        CHECK(evaluate(l1, 40.0, 50.0) == doctest::Approx(evaluate(l1, 40.0, 0.0)));
        // near-linear data: midpoints average adjacent knot values
        const double f_mid = l1.value_at(0.5 * (g1.tau_axis[2] + g1.tau_axis[3]), 0.0);
        const double avg = 0.5 * (l1.value_at(g1.tau_axis[2], 0.0) +
                                  l1.value_at(g1.tau_axis[3], 0.0));
        CHECK(f_mid == doctest::Approx(avg).epsilon(1e-5));
    }

    SUBCASE("too few populated tau bins is a rank-deficiency error") {
        calib_series tiny;
        tiny.resolution_time = 100.0;
        tiny.t = {10.0, 11.0};
        tiny.m = {0.0, 0.1};
        tiny.value = {0.5, 0.5};
        grid_spec spec = lattice_spec(8, 2, 100.0, -0.5, 0.5);
        const auto g = bin_estimates({tiny}, spec);
        CHECK_THROWS_WITH_AS(fit_surface(g, fast_fit(1.0)),
                             doctest::Contains("rank-deficient"), data_error);
    }

    SUBCASE("invalid fit configs are rejected") {
        fit_config bad = fast_fit(1.0);
        bad.news_relax = 0.0;
        CHECK_THROWS_AS(fit_surface(grid, bad), config_error);
        bad = fast_fit(-1.0);
        CHECK_THROWS_AS(fit_surface(grid, bad), config_error);
    }
}

TEST_CASE("news windows relax the tau-curvature penalty locally") {
    // A sharp step in tau: with the window covering the step, the fit should
    // track it more closely than the same alpha without the window.
    auto step = [](double tau, double) { return tau < 40.0 ? 0.05 : 0.15; };
    auto s = lattice_series(16, 5, 80.0, -2.0, 2.0, step);
    const auto grid = bin_estimates({s}, lattice_spec(16, 5, 80.0, -2.0, 2.0));
    fit_config cfg = fast_fit(10.0);
    cfg.n_basis_tau = 12;
    const auto rigid = fit_surface(grid, cfg);
    const auto relaxed = fit_surface(grid, cfg, {{35.0, 45.0}});
    double err_rigid = 0.0, err_relaxed = 0.0;
    for (std::size_t i = 0; i < grid.n_tau(); ++i)
        for (std::size_t j = 0; j < grid.n_m(); ++j) {
            const double f0 = step(grid.tau_axis[i], grid.m_axis[j]);
            const double dr = rigid.value_at(grid.tau_axis[i], grid.m_axis[j]) - f0;
            const double dx = relaxed.value_at(grid.tau_axis[i], grid.m_axis[j]) - f0;
            err_rigid += dr * dr;
            err_relaxed += dx * dx;
        }
    CHECK(err_relaxed < err_rigid);
}

TEST_CASE("bootstrap bands: deterministic under a fixed seed, sensitive to it") {
    auto truth = [](double tau, double m) { return 0.05 + 0.001 * tau + 0.002 * m; };
    auto s = lattice_series(8, 5, 80.0, -2.0, 2.0, truth, 0.01, 2, 0.01, 5150);
    const auto grid = bin_estimates({s}, lattice_spec(8, 5, 80.0, -2.0, 2.0));
    fit_config cfg = fast_fit(1.0);
    cfg.compute_bands = true;
    cfg.bootstrap_resamples = 40;

    const auto a = fit_surface(grid, cfg);
    const auto b = fit_surface(grid, cfg);
    REQUIRE(a.band.size() == b.band.size());
    for (std::size_t q = 0; q < a.band.size(); ++q) {
        CHECK(a.band[q] == b.band[q]); // bitwise reproducible
        CHECK(a.band[q] >= 0.0);
        CHECK(std::isfinite(a.band[q]));
    }
    bool any_positive = false;
    for (double v : a.band) any_positive = any_positive || v > 0.0;
    CHECK(any_positive);

    cfg.bootstrap_seed = 9999;
    const auto c = fit_surface(grid, cfg);
    double max_diff = 0.0;
    for (std::size_t q = 0; q < a.band.size(); ++q)
        max_diff = std::max(max_diff, std::abs(a.band[q] - c.band[q]));
    CHECK(max_diff > 0.0);
}

TEST_CASE("belief surface: assembly, evaluation, JSON round-trip, CSV export") {
    auto sig = lattice_series(8, 5, 80.0, -2.0, 2.0,
                              [](double tau, double) { return 0.05 + 0.0002 * tau; });
    auto lam = lattice_series(8, 5, 80.0, -2.0, 2.0, [](double, double) { return 0.002; });
    auto sj = lattice_series(8, 5, 80.0, -2.0, 2.0, [](double, double m) { return 0.2 + 0.01 * m; });
    const auto spec = lattice_spec(8, 5, 80.0, -2.0, 2.0);
    const auto g_sig = bin_estimates({sig}, spec);
    const auto g_lam = bin_estimates({lam}, spec);
    const auto g_sj = bin_estimates({sj}, spec);

    fit_config cfg = fast_fit(1.0);
    cfg.compute_bands = true;
    cfg.bootstrap_resamples = 12;
    const auto surf = build_belief_surface(g_sig, g_lam, g_sj, cfg, {{10.0, 20.0}});

    const auto p = evaluate(surf, 40.0, 0.0);
    CHECK(p.sigma_b == doctest::Approx(0.05 + 0.0002 * 40.0).epsilon(0.02));
    CHECK(p.lambda == doctest::Approx(0.002).epsilon(0.02));
    CHECK(p.sJ2 == doctest::Approx(0.2).epsilon(0.02));
    CHECK(p.band_sigma_b >= 0.0);
    CHECK(p.band_lambda >= 0.0);
    CHECK(p.band_sJ2 >= 0.0);

    SUBCASE("JSON text round-trip preserves evaluations exactly") {
        const auto text = surf.to_json().dump();
        const auto back = belief_surface::from_json(nlohmann::json::parse(text));
        REQUIRE(back.news_windows.size() == 1);
        CHECK(back.news_windows[0].first == 10.0);
        CHECK(back.news_windows[0].second == 20.0);
        for (double tau : {5.0, 40.0, 75.0})
            for (double m : {-1.6, 0.0, 1.6}) {
                const auto q0 = evaluate(surf, tau, m);
                const auto q1 = evaluate(back, tau, m);
                CHECK(q0.sigma_b == q1.sigma_b);
                CHECK(q0.lambda == q1.lambda);
                CHECK(q0.sJ2 == q1.sJ2);
                CHECK(q0.band_sigma_b == q1.band_sigma_b);
            }
    }

    SUBCASE("CSV export covers the grid") {
        const std::string path = "surface_test_export.csv";
        write_surface_csv(surf, path);
        const auto table = read_csv(path);
        CHECK(table.header ==
              std::vector<std::string>{"tau", "m", "sigma_b", "lambda", "sJ2", "band_sigma_b",
                                       "band_lambda", "band_sJ2"});
        CHECK(table.rows.size() == 8 * 5);
        const auto sigma_col = table.numeric_column("sigma_b");
        for (double v : sigma_col) CHECK(v >= 0.0);
        std::remove(path.c_str());
    }
}
