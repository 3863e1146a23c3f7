// ---------------------------------------------------------------------------
// oddskit command line: simulate | filter | calibrate | surface | price |
// quote | bench.  Stages communicate through plain CSV/JSON artifacts in the
// output directory; every artifact cites the manifest id of the run that
// produced it.  Exit codes: 0 success, 2 config error, 3 data error.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oddskit/config.hpp"
#include "oddskit/csv.hpp"
#include "oddskit/em.hpp"
#include "oddskit/errors.hpp"
#include "oddskit/forecast.hpp"
#include "oddskit/kalman.hpp"
#include "oddskit/kernel.hpp"
#include "oddskit/logistic.hpp"
#include "oddskit/noise_model.hpp"
#include "oddskit/pricer.hpp"
#include "oddskit/quoting.hpp"
#include "oddskit/rng.hpp"
#include "oddskit/scenario.hpp"
#include "oddskit/stats.hpp"
#include "oddskit/surface.hpp"
#include "oddskit/svg.hpp"
#include "oddskit/ticks.hpp"

namespace {

using namespace oddskit;
using nlohmann::json;

std::string path_join(const std::string& dir, const std::string& name) {
    return dir.empty() ? name : dir + "/" + name;
}

void require_input(const std::string& path, const std::string& producer) {
    if (!std::filesystem::exists(path))
        throw data_error("missing input '" + path + "' — run the " + producer +
                         " subcommand first");
}

class stage_timer {
  public:
    stage_timer(std::map<std::string, double>& out, std::string name)
        : out_(out), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
    ~stage_timer() {
        const auto t1 = std::chrono::steady_clock::now();
        out_[name_] = std::chrono::duration<double>(t1 - t0_).count();
    }

  private:
    std::map<std::string, double>& out_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
};

run_manifest start_manifest(const std::string& sub, const run_config& cfg) {
    run_manifest m;
    m.id = manifest_id(sub, cfg);
    m.subcommand = sub;
    m.seed = cfg.seed;
    m.started_utc = utc_timestamp();
    m.config = cfg.to_json(true);
    return m;
}

void finish_manifest(run_manifest& m, const run_config& cfg) {
    m.finished_utc = utc_timestamp();
    write_manifest(path_join(cfg.out_dir, "manifest_" + m.subcommand + ".json"), m);
}

// Stride-subsampled copy for chart polylines (keeps files small).
std::vector<double> chart_sample(const std::vector<double>& v, std::size_t max_pts = 1500) {
    if (v.size() <= max_pts) return v;
    const std::size_t stride = (v.size() + max_pts - 1) / max_pts;
    std::vector<double> out;
    out.reserve(v.size() / stride + 1);
    for (std::size_t i = 0; i < v.size(); i += stride) out.push_back(v[i]);
    return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

void run_simulate(const run_config& cfg) {
    run_manifest m = start_manifest("simulate", cfg);
    scenario_output out;
    {
        stage_timer t(m.durations_s, "simulate");
        out = make_scenario(cfg.scenario, cfg.seed);
        write_path_csv(path_join(cfg.out_dir, "truth.csv"), out.truth, m.id);
        write_ticks_csv(path_join(cfg.out_dir, "ticks.csv"), out.ticks, m.id);
        write_schedule_csv(path_join(cfg.out_dir, "schedule.csv"), cfg.scenario.schedule, m.id);
    }
    finish_manifest(m, cfg);
    std::cout << "simulate: wrote " << out.truth.size() << " samples to "
              << path_join(cfg.out_dir, "truth.csv") << " (manifest " << m.id << ")\n";
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

struct filtered_stage {
    uniform_series series;
    noise_model_coeffs coeffs;
    std::vector<double> meas_var;
    filter_output fo;
};

filtered_stage filter_pipeline(const run_config& cfg, const std::vector<tick_record>& ticks,
                               bool causal_proxy) {
    filtered_stage st;
    st.series = canonical_mid(ticks, cfg.filter.bin_s, cfg.filter.tick_size);
    st.coeffs = fit_noise_from_series(st.series);
    st.meas_var = noise_variance(st.series, st.coeffs);
    st.fo = kalman_filter_smoother(st.series.y, st.meas_var, st.series.dt, nullptr, nullptr,
                                   &st.series.halted, causal_proxy);
    return st;
}

void run_filter(const run_config& cfg) {
    run_manifest m = start_manifest("filter", cfg);
    const std::string ticks_path = path_join(cfg.out_dir, "ticks.csv");
    require_input(ticks_path, "simulate");
    filtered_stage st;
    {
        stage_timer t(m.durations_s, "filter");
        st = filter_pipeline(cfg, read_ticks_csv(ticks_path), false);

        csv_writer w(path_join(cfg.out_dir, "filtered.csv"), m.id,
                     {"t", "p_tilde", "y", "x_hat", "var_hat", "innov"});
        for (std::size_t u = 0; u < st.series.size(); ++u) {
            const double innov = u == 0 ? 0.0 : st.fo.innovations[u - 1];
            w.write_row(st.series.t[u], st.series.p_tilde[u], st.series.y[u], st.fo.x_hat[u],
                        st.fo.var_hat[u], innov);
        }

        const residual_report diag = residual_diagnostics(st.fo);
        json payload;
        payload["coeffs"] = {{"a0", st.coeffs.a0}, {"a1", st.coeffs.a1}, {"a2", st.coeffs.a2},
                             {"a3", st.coeffs.a3}, {"a4", st.coeffs.a4},
                             {"clamp_lo", st.coeffs.clamp_lo}, {"clamp_hi", st.coeffs.clamp_hi}};
        payload["loglik"] = st.fo.loglik;
        payload["diagnostics"] = {{"lb10", diag.lb10},
                                  {"lb20", diag.lb20},
                                  {"pass_lb10", diag.pass_lb10},
                                  {"pass_lb20", diag.pass_lb20},
                                  {"variance_ratio", diag.variance_ratio},
                                  {"excess_kurt_nonjump", diag.excess_kurt_nonjump},
                                  {"degenerate", diag.degenerate}};
        write_json_artifact(path_join(cfg.out_dir, "noise.json"), m.id, cfg.to_json(false),
                            "noise_model", payload);

        chart_series obs{"y (observed logit)", chart_sample(st.series.t),
                         chart_sample(st.series.y)};
        chart_series fit{"x_hat (smoothed)", chart_sample(st.series.t),
                         chart_sample(st.fo.x_hat)};
        chart_band band;
        band.x = chart_sample(st.series.t);
        std::vector<double> lo(st.fo.x_hat.size()), hi(st.fo.x_hat.size());
        for (std::size_t u = 0; u < st.fo.x_hat.size(); ++u) {
            const double half = 2.0 * std::sqrt(std::max(st.fo.var_hat[u], 0.0));
            lo[u] = st.fo.x_hat[u] - half;
            hi[u] = st.fo.x_hat[u] + half;
        }
        band.lo = chart_sample(lo);
        band.hi = chart_sample(hi);
        write_line_chart(path_join(cfg.out_dir, "filter.svg"),
                         "observed vs filtered log-odds", {obs, fit}, {band});
    }
    finish_manifest(m, cfg);
    std::cout << "filter: wrote " << path_join(cfg.out_dir, "filtered.csv") << " (manifest "
              << m.id << ")\n";
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

void run_calibrate(const run_config& cfg) {
    run_manifest m = start_manifest("calibrate", cfg);
    const std::string ticks_path = path_join(cfg.out_dir, "ticks.csv");
    require_input(ticks_path, "simulate");
    {
        stage_timer t(m.durations_s, "calibrate");
        filtered_stage st = filter_pipeline(cfg, read_ticks_csv(ticks_path), false);
        em_config ec = cfg.calibrate;
        ec.dt = st.series.dt;
        const calibration_result res = calibrate(st.series, st.meas_var, ec, cfg.calibrate_family);

        csv_writer w(path_join(cfg.out_dir, "em.csv"), m.id,
                     {"t", "sigma_b2", "lambda", "sJ2", "gamma", "mu"});
        const std::size_t n_inc = res.est.sigma_b2.size();
        for (std::size_t u = 0; u < n_inc; ++u)
            w.write_row(st.series.t[u], res.est.sigma_b2[u], res.est.lambda[u], res.est.sJ2[u],
                        res.resp.gamma[u], res.drift[u]);

        json payload = res.sanity;
        payload["converged"] = res.converged;
        payload["outer_loops_used"] = res.outer_loops_used;
        payload["global_loglik"] = res.global_loglik;
        payload["degenerate_warning"] = res.resp.degenerate_warning;
        write_json_artifact(path_join(cfg.out_dir, "sanity.json"), m.id, cfg.to_json(false),
                            "sanity", payload);

        std::vector<double> sig_b(n_inc);
        for (std::size_t u = 0; u < n_inc; ++u) sig_b[u] = std::sqrt(res.est.sigma_b2[u]);
        std::vector<double> tt(st.series.t.begin(), st.series.t.begin() + n_inc);
        std::vector<chart_marker> flags;
        for (std::size_t u = 0; u < n_inc; ++u)
            if (res.resp.jump_flags[u]) flags.push_back({st.series.t[u], ""});
        if (flags.size() > 60) flags.resize(60);
        write_line_chart(path_join(cfg.out_dir, "calibrate.svg"),
                         "belief volatility estimate with jump flags",
                         {chart_series{"sigma_b_hat", chart_sample(tt), chart_sample(sig_b)}}, {},
                         flags);
    }
    finish_manifest(m, cfg);
    std::cout << "calibrate: wrote " << path_join(cfg.out_dir, "em.csv") << " (manifest " << m.id
              << ")\n";
}

// ---------------------------------------------------------------------------
// surface
// ---------------------------------------------------------------------------

void run_surface(const run_config& cfg) {
    run_manifest m = start_manifest("surface", cfg);
    const std::string em_path = path_join(cfg.out_dir, "em.csv");
    const std::string filt_path = path_join(cfg.out_dir, "filtered.csv");
    require_input(em_path, "calibrate");
    require_input(filt_path, "filter");
    {
        stage_timer t(m.durations_s, "surface");
        const csv_table em_tab = read_csv(em_path);
        const csv_table f_tab = read_csv(filt_path);
        const std::vector<double> em_t = em_tab.numeric_column("t");
        const std::vector<double> sigma_b2 = em_tab.numeric_column("sigma_b2");
        const std::vector<double> lambda = em_tab.numeric_column("lambda");
        const std::vector<double> sJ2 = em_tab.numeric_column("sJ2");
        const std::vector<double> f_t = f_tab.numeric_column("t");
        const std::vector<double> x_hat = f_tab.numeric_column("x_hat");
        const std::vector<double> var_hat = f_tab.numeric_column("var_hat");
        if (em_t.size() + 1 != f_t.size())
            throw data_error("surface: em.csv rows must be filtered.csv rows minus one (" +
                             std::to_string(em_t.size()) + " vs " + std::to_string(f_t.size()) +
                             ")");
        const double dt = f_t.size() > 1 ? f_t[1] - f_t[0] : 1.0;
        const double T = cfg.surface.resolution_time > 0.0 ? cfg.surface.resolution_time
                                                           : f_t.back() + dt;

        calib_series base;
        base.resolution_time = T;
        base.t = em_t;
        base.m.assign(x_hat.begin(), x_hat.begin() + static_cast<long>(em_t.size()));
        base.var_hat.assign(var_hat.begin(), var_hat.begin() + static_cast<long>(em_t.size()));

        calib_series s_sig = base, s_lam = base, s_sj2 = base;
        s_sig.value.resize(em_t.size());
        for (std::size_t u = 0; u < em_t.size(); ++u) s_sig.value[u] = std::sqrt(sigma_b2[u]);
        s_lam.value = lambda;
        s_sj2.value = sJ2;

        std::vector<std::pair<double, double>> news;
        const std::string sched_path = path_join(cfg.out_dir, "schedule.csv");
        if (std::filesystem::exists(sched_path)) {
            for (const auto& e : read_schedule_csv(sched_path)) {
                const double hi = T - (e.center - e.width);
                const double lo = std::max(T - (e.center + e.width), 0.0);
                if (hi > 0.0) news.emplace_back(lo, hi);
            }
        }

        const surface_grid g_sig = bin_estimates({s_sig}, cfg.surface.grid);
        const surface_grid g_lam = bin_estimates({s_lam}, cfg.surface.grid);
        const surface_grid g_sj2 = bin_estimates({s_sj2}, cfg.surface.grid);
        const belief_surface surf =
            build_belief_surface(g_sig, g_lam, g_sj2, cfg.surface.fit, news);

        write_json_artifact(path_join(cfg.out_dir, "surface.json"), m.id, cfg.to_json(false),
                            "surface", surf.to_json());
        write_surface_csv(surf, path_join(cfg.out_dir, "surface_grid.csv"), m.id);

        const auto& taus = surf.sigma_b.tau_axis;
        const auto& ms = surf.sigma_b.m_axis;
        std::vector<double> vals(taus.size() * ms.size());
        for (std::size_t i = 0; i < taus.size(); ++i)
            for (std::size_t j = 0; j < ms.size(); ++j)
                vals[i * ms.size() + j] = surf.sigma_b.value_at(taus[i], ms[j]);
        write_heatmap(path_join(cfg.out_dir, "surface.svg"),
                      "belief volatility surface sigma_b(tau, m)", taus, ms, vals, "tau (s)",
                      "m (logit)");
    }
    finish_manifest(m, cfg);
    std::cout << "surface: wrote " << path_join(cfg.out_dir, "surface.json") << " (manifest "
              << m.id << ")\n";
}

// ---------------------------------------------------------------------------
// price
// ---------------------------------------------------------------------------

json price_one(const run_config& cfg, const price_instrument& in, std::size_t idx,
               const kernel_params& kp, double x0) {
    const double t0 = cfg.price.t0;
    const double T = cfg.price.horizon_T;
    json out;
    out["type"] = in.type;
    const std::uint64_t mc_seed = derive_seed(cfg.seed, 7100 + idx);

    const auto solve_grid = [&]() {
        pide_grid g = default_pide_grid(x0, kp, t0, T);
        if (!cfg.price.pide_default_grid) {
            g.n_x = cfg.price.pide.n_x;
            g.n_t = cfg.price.pide.n_t;
        }
        g.theta = cfg.price.pide.theta;
        return g;
    };

    if (in.type == "vanilla") {
        price_result r;
        r.value = sigmoid(x0);
        r.error = 0.0;
        r.method = "closed-form";
        out["result"] = r.to_json();
    } else if (in.type == "digital") {
        const double x_k = logit(in.level_p);
        const bool above = in.direction != "below";
        const double payout = in.payout;
        const auto g = [x_k, above, payout](double x) {
            return (above ? x >= x_k : x <= x_k) ? payout : 0.0;
        };
        if (in.method == "pide" || in.method == "both")
            out["result"] = pide_solve(g, kp, x0, t0, T, solve_grid()).result.to_json();
        if (in.method == "mc" || in.method == "both")
            out["mc"] = mc_price(terminal_payoff(g), kp, x0, T - t0, cfg.price.mc_dt,
                                 cfg.price.mc_paths, mc_seed, cfg.price.mc_antithetic)
                            .to_json();
        if (!out.contains("result") && !out.contains("mc"))
            throw config_error("price: digital method must be pide, mc, or both");
    } else if (in.type == "x_variance") {
        out["result"] = x_var_strike(kp, t0, T).to_json();
        if (cfg.price.run_mc)
            out["mc"] = mc_price(qv_payoff(variance_space::logit), kp, x0, T - t0,
                                 cfg.price.mc_dt, cfg.price.mc_paths, mc_seed,
                                 cfg.price.mc_antithetic)
                            .to_json();
    } else if (in.type == "p_variance") {
        out["result"] = p_var_strike(x0, kp, t0, T).to_json();
        if (cfg.price.run_mc)
            out["mc"] = mc_price(qv_payoff(variance_space::probability), kp, x0, T - t0,
                                 cfg.price.mc_dt, cfg.price.mc_paths, mc_seed,
                                 cfg.price.mc_antithetic)
                            .to_json();
    } else if (in.type == "variance_swap") {
        variance_swap_spec spec;
        spec.space = in.space == "probability" ? variance_space::probability
                                               : variance_space::logit;
        spec.t0 = t0;
        spec.T = T;
        if (in.corridor_hi > in.corridor_lo && in.corridor_hi > 0.0) {
            out["result"] = mc_price(corridor_payoff(in.corridor_lo, in.corridor_hi), kp, x0,
                                     T - t0, cfg.price.mc_dt, cfg.price.mc_paths, mc_seed,
                                     cfg.price.mc_antithetic)
                                .to_json();
        } else {
            out["result"] = variance_strike(spec, x0, kp).to_json();
        }
    } else if (in.type == "first_passage") {
        first_passage_spec spec;
        spec.level = in.level_p;
        spec.T = T;
        spec.direction = in.direction == "below" ? passage_direction::hit_below
                                                 : passage_direction::hit_above;
        spec.payout = in.payout;
        spec.monitor_dt = in.monitor_dt;
        out["result"] = first_passage_pide(x0, kp, spec, t0).to_json();
        if (cfg.price.run_mc) {
            const double mc_dt = spec.monitor_dt > 0.0 ? spec.monitor_dt : cfg.price.mc_dt;
            out["mc"] = mc_price(first_passage_payoff(spec), kp, x0, T - t0, mc_dt,
                                 cfg.price.mc_paths, mc_seed, cfg.price.mc_antithetic)
                            .to_json();
        }
    } else if (in.type == "covariance" || in.type == "correlation") {
        const double x_j = logit(in.x0_j_p);
        const price_result r =
            in.type == "covariance"
                ? covariance_strike(x0, kp, x_j, cfg.price.kernel_j, in.rho, nullptr, t0, T)
                : correlation_strike(x0, kp, x_j, cfg.price.kernel_j, in.rho, nullptr, t0, T);
        out["result"] = r.to_json();
    } else {
        throw config_error("price: unknown instrument type '" + in.type + "'");
    }

    if (cfg.price.run_greeks && in.type == "vanilla") {
        const pricing_fn fn = [](double x, const kernel_params&, double) { return sigmoid(x); };
        const greeks_result gr = greeks(fn, x0, kp, 0.0);
        out["greeks"] = {{"delta_x", gr.delta_x},
                         {"gamma_x", gr.gamma_x},
                         {"vega_b", gr.vega_b},
                         {"vega_rho", gr.vega_rho},
                         {"jump_vega", gr.jump_vega}};
    }
    return out;
}

void run_price(const run_config& cfg) {
    run_manifest m = start_manifest("price", cfg);
    {
        stage_timer t(m.durations_s, "price");
        kernel_params kp = cfg.price.kernel;
        if (kp.sigma_b.empty()) kp.sigma_b = {0.05};
        if (kp.lambda.empty()) kp.lambda = {0.002};
        // Horizon coverage: the piecewise grids extend over [0, T].
        const double span = kp.param_dt * static_cast<double>(kp.sigma_b.size());
        if (span < cfg.price.horizon_T && kp.sigma_b.size() == 1) {
            const std::size_t need = static_cast<std::size_t>(
                std::ceil(cfg.price.horizon_T / kp.param_dt));
            kp.sigma_b.assign(need, kp.sigma_b[0]);
        }
        if (kp.param_dt * static_cast<double>(kp.lambda.size()) < cfg.price.horizon_T &&
            kp.lambda.size() == 1) {
            const std::size_t need = static_cast<std::size_t>(
                std::ceil(cfg.price.horizon_T / kp.param_dt));
            kp.lambda.assign(need, kp.lambda[0]);
        }
        kp.validate();
        if (!(cfg.price.x0_p > 0.0) || !(cfg.price.x0_p < 1.0))
            throw config_error("price: x0_p must lie in (0,1)");
        const double x0 = logit(cfg.price.x0_p);

        json items = json::array();
        for (std::size_t i = 0; i < cfg.price.instruments.size(); ++i)
            items.push_back(price_one(cfg, cfg.price.instruments[i], i, kp, x0));
        json payload;
        payload["x0"] = x0;
        payload["x0_p"] = cfg.price.x0_p;
        payload["t0"] = cfg.price.t0;
        payload["T"] = cfg.price.horizon_T;
        payload["instruments"] = items;
        write_json_artifact(path_join(cfg.out_dir, "prices.json"), m.id, cfg.to_json(false),
                            "prices", payload);
    }
    finish_manifest(m, cfg);
    std::cout << "price: wrote " << path_join(cfg.out_dir, "prices.json") << " (manifest " << m.id
              << ")\n";
}

// ---------------------------------------------------------------------------
// quote
// ---------------------------------------------------------------------------

void run_quote(const run_config& cfg) {
    run_manifest m = start_manifest("quote", cfg);
    const std::string filt_path = path_join(cfg.out_dir, "filtered.csv");
    const std::string em_path = path_join(cfg.out_dir, "em.csv");
    const std::string ticks_path = path_join(cfg.out_dir, "ticks.csv");
    require_input(filt_path, "filter");
    require_input(em_path, "calibrate");
    require_input(ticks_path, "simulate");
    {
        stage_timer t(m.durations_s, "quote");
        const csv_table f_tab = read_csv(filt_path);
        const csv_table em_tab = read_csv(em_path);
        const std::vector<double> tt = f_tab.numeric_column("t");
        const std::vector<double> x_hat = f_tab.numeric_column("x_hat");
        const std::vector<double> sigma_b2 = em_tab.numeric_column("sigma_b2");
        const std::vector<double> gamma = em_tab.numeric_column("gamma");
        if (sigma_b2.size() + 1 != tt.size())
            throw data_error("quote: em.csv rows must be filtered.csv rows minus one");
        const uniform_series series =
            canonical_mid(read_ticks_csv(ticks_path), cfg.filter.bin_s, cfg.filter.tick_size);
        if (series.size() != tt.size())
            throw data_error("quote: ticks.csv and filtered.csv disagree on the grid");
        const double dt = series.dt;

        quoting_params params = cfg.quote.params;
        guard_config guards = cfg.quote.guards;
        const std::string sched_path = path_join(cfg.out_dir, "schedule.csv");
        if (std::filesystem::exists(sched_path)) {
            for (const auto& e : read_schedule_csv(sched_path))
                guards.news.push_back({e.center - e.width, e.center + e.width});
        }
        const std::vector<double> sig2_bar = trailing_sigma2(sigma_b2, dt, cfg.quote.sigma_window_s);

        quote_engine engine(params, guards);
        rng_stream fill_rng(derive_seed(cfg.seed, 903));
        std::vector<tape_row> tape;
        std::vector<double> ledger_t;
        std::vector<pnl_components> ledger;
        const std::size_t n_inc = sigma_b2.size();
        tape.reserve(n_inc);
        for (std::size_t u = 0; u < n_inc; ++u) {
            market_snapshot snap;
            snap.t = tt[u];
            snap.x = x_hat[u];
            snap.sigma2_bar = sig2_bar[u];
            snap.signed_flow = series.imbalance[u];
            snap.jump_gamma = gamma[u];
            snap.age = 0.0;
            const refresh_result rr = engine.refresh(snap);
            tape.push_back({tt[u], rr.quotes, engine.inventory().q});

            if (rr.quotes.state != quote_state::pulled) {
                const double p_mid = sigmoid(x_hat[u]);
                const double d_bid = std::max(p_mid - rr.quotes.p_bid, 0.0);
                const double d_ask = std::max(rr.quotes.p_ask - p_mid, 0.0);
                const double pr_bid = std::min(
                    1.0, cfg.quote.fill_intensity * std::exp(-cfg.quote.fill_decay * d_bid) * dt);
                const double pr_ask = std::min(
                    1.0, cfg.quote.fill_intensity * std::exp(-cfg.quote.fill_decay * d_ask) * dt);
                if (fill_rng.uniform() < pr_bid) engine.apply_fill(+1.0, x_hat[u], tt[u]);
                if (fill_rng.uniform() < pr_ask) engine.apply_fill(-1.0, x_hat[u], tt[u]);
            }

            attribution_step step;
            step.t = tt[u];
            step.dp = sigmoid(x_hat[u + 1]) - sigmoid(x_hat[u]);
            step.d_sigma_b =
                u + 1 < n_inc ? std::sqrt(sigma_b2[u + 1]) - std::sqrt(sigma_b2[u]) : 0.0;
            step.d_rho = 0.0;
            step.jump = gamma[u] > guards.tau_jump;
            const double q = engine.inventory().q;
            step.d_value = q * step.dp;
            book_greeks bg;
            bg.delta = q;
            ledger_t.push_back(tt[u]);
            ledger.push_back(pnl_attribution(q, {step}, bg));
        }

        write_quote_tape(path_join(cfg.out_dir, "quote_tape.csv"), tape, m.id);
        write_pnl_ledger(path_join(cfg.out_dir, "pnl.csv"), ledger_t, ledger, m.id);

        std::vector<double> pb(tape.size()), pa(tape.size()), pm(tape.size()), qq(tape.size());
        for (std::size_t u = 0; u < tape.size(); ++u) {
            pb[u] = tape[u].quotes.p_bid;
            pa[u] = tape[u].quotes.p_ask;
            pm[u] = sigmoid(x_hat[u]);
            qq[u] = tape[u].q;
        }
        std::vector<chart_marker> marks;
        for (const auto& w : guards.news) marks.push_back({w.start, "news"});
        write_line_chart(path_join(cfg.out_dir, "quote.svg"), "quote tape (probability space)",
                         {chart_series{"p_bid", chart_sample(ledger_t), chart_sample(pb)},
                          chart_series{"p_ask", chart_sample(ledger_t), chart_sample(pa)},
                          chart_series{"p_mid", chart_sample(ledger_t), chart_sample(pm)}},
                         {}, marks);
    }
    finish_manifest(m, cfg);
    std::cout << "quote: wrote " << path_join(cfg.out_dir, "quote_tape.csv") << " (manifest "
              << m.id << ")\n";
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

void run_bench_cmd(const run_config& cfg) {
    run_manifest m = start_manifest("bench", cfg);
    {
        stage_timer t(m.durations_s, "bench");
        std::vector<std::uint64_t> seeds = cfg.bench.seeds;
        if (seeds.empty())
            for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(cfg.seed + s);

        bench_config bc = cfg.bench.cfg;
        bc.task.schedule = cfg.scenario.schedule;
        bc.task.dt = cfg.filter.bin_s;
        bc.stream.dt = cfg.filter.bin_s;

        const std::vector<std::string> model_ids = {"rn_jd", "rw_logit", "const_sigma",
                                                    "wf_jacobi", "ar_garch"};
        json per_seed = json::array();
        std::map<std::string, std::vector<double>> mse, mae, qlike, logmse;
        std::map<std::string, int> wins_mse, wins_mae;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            const std::uint64_t s = seeds[si];
            const scenario_output scen = make_scenario(cfg.scenario, s);
            const filtered_stage st = filter_pipeline(cfg, scen.ticks, true);
            const bench_result br = run_bench(st.fo.filt_x, bc, cfg.bench.family);

            json entry = br.to_json();
            entry["seed"] = s;
            per_seed.push_back(entry);

            double best_mse = std::numeric_limits<double>::infinity();
            double best_mae = std::numeric_limits<double>::infinity();
            std::string best_mse_model, best_mae_model;
            for (const auto& mb : br.models) {
                mse[mb.model].push_back(mb.report.overall.mse);
                mae[mb.model].push_back(mb.report.overall.mae);
                qlike[mb.model].push_back(mb.report.overall.qlike);
                logmse[mb.model].push_back(mb.report.overall.log_mse);
                if (mb.report.overall.mse < best_mse) {
                    best_mse = mb.report.overall.mse;
                    best_mse_model = mb.model;
                }
                if (mb.report.overall.mae < best_mae) {
                    best_mae = mb.report.overall.mae;
                    best_mae_model = mb.model;
                }
            }
            wins_mse[best_mse_model] += 1;
            wins_mae[best_mae_model] += 1;

            if (si == 0 && cfg.bench.write_series) {
                for (const auto& mb : br.models) {
                    const auto records = make_records(mb.v_hat, br.rv, br.regimes, bc.task.dt,
                                                      br.splits.test_begin, br.splits.test_end);
                    write_forecast_csv(path_join(cfg.out_dir, "forecast_" + mb.model + ".csv"),
                                       records, m.id);
                }
            }
        }

        json aggregate;
        for (const auto& id : model_ids) {
            if (mse.find(id) == mse.end()) continue;
            aggregate[id] = {{"mse_mean", mean(mse[id])},
                             {"mae_mean", mean(mae[id])},
                             {"qlike_mean", mean(qlike[id])},
                             {"log_mse_mean", mean(logmse[id])},
                             {"wins_mse", wins_mse[id]},
                             {"wins_mae", wins_mae[id]}};
        }
        json payload;
        payload["seeds"] = seeds;
        payload["aggregate"] = aggregate;
        payload["per_seed"] = per_seed;
        write_json_artifact(path_join(cfg.out_dir, "bench.json"), m.id, cfg.to_json(false),
                            "bench", payload);

        // Aligned-column text table from the aggregate.
        std::ofstream txt(path_join(cfg.out_dir, "bench.txt"));
        if (!txt) throw data_error("cannot write bench.txt");
        txt << "# manifest=" << m.id << "\n";
        char line[256];
        std::snprintf(line, sizeof line, "%-12s %14s %14s %14s %14s %9s %9s\n", "model", "mse",
                      "mae", "qlike", "log_mse", "wins_mse", "wins_mae");
        txt << line;
        for (const auto& id : model_ids) {
            if (mse.find(id) == mse.end()) continue;
            std::snprintf(line, sizeof line, "%-12s %14.6g %14.6g %14.6g %14.6g %9d %9d\n",
                          id.c_str(), mean(mse[id]), mean(mae[id]), mean(qlike[id]),
                          mean(logmse[id]), wins_mse[id], wins_mae[id]);
            txt << line;
        }
        txt.flush();

        // Bar chart of per-model mean QLIKE, read back from the JSON artifact.
        std::ifstream back(path_join(cfg.out_dir, "bench.json"));
        json parsed;
        back >> parsed;
        std::vector<std::string> labels;
        std::vector<double> values;
        for (const auto& id : model_ids) {
            if (!parsed["bench"]["aggregate"].contains(id)) continue;
            labels.push_back(id);
            values.push_back(parsed["bench"]["aggregate"][id]["qlike_mean"].get<double>());
        }
        write_bar_chart(path_join(cfg.out_dir, "bench.svg"), "mean QLIKE by model", labels,
                        values);
    }
    finish_manifest(m, cfg);
    std::cout << "bench: wrote " << path_join(cfg.out_dir, "bench.json") << " (manifest " << m.id
              << ")\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-neutral logit jump-diffusion toolkit for event contracts"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;

    const std::vector<std::pair<std::string, std::string>> subs = {
        {"simulate", "synthesize a scenario: true path, tick tape, schedule"},
        {"filter", "canonical mid, noise model, Kalman filter/smoother"},
        {"calibrate", "EM jump/diffusion separation on the filtered series"},
        {"surface", "penalized belief-surface fit over (tau, m)"},
        {"price", "closed-form / PIDE / Monte Carlo instrument pricing"},
        {"quote", "inventory-aware quoting replay with guards and PnL ledger"},
        {"bench", "causal variance-forecast benchmark across seeds"}};
    std::map<std::string, CLI::App*> sub_map;
    for (const auto& [name, desc] : subs) {
        CLI::App* s = app.add_subcommand(name, desc);
        s->add_option("--config", config_path, "JSON config file (defaults when omitted)");
        s->add_option("--seed", seed, "override the config seed");
        s->add_option("--out", out_dir, "override the output directory");
        sub_map[name] = s;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        run_config cfg = load_run_config(config_path);
        CLI::App* active = app.get_subcommands().front();
        if (active->count("--seed") > 0) override_seed(cfg, seed);
        if (active->count("--out") > 0) override_out_dir(cfg, out_dir);
        std::filesystem::create_directories(cfg.out_dir);

        const std::string name = active->get_name();
        if (name == "simulate") run_simulate(cfg);
        else if (name == "filter") run_filter(cfg);
        else if (name == "calibrate") run_calibrate(cfg);
        else if (name == "surface") run_surface(cfg);
        else if (name == "price") run_price(cfg);
        else if (name == "quote") run_quote(cfg);
        else if (name == "bench") run_bench_cmd(cfg);
        return 0;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
