// ---------------------------------------------------------------------------
// Synthetic scenario generation and the CSV round-trips used by the
// command-line pipeline.
// ---------------------------------------------------------------------------

#include "oddskit/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "oddskit/csv.hpp"
#include "oddskit/errors.hpp"
#include "oddskit/logistic.hpp"
#include "oddskit/rng.hpp"

namespace oddskit {

void scenario_config::validate() const {
    if (n_steps < 2) throw config_error("scenario: n_steps must be at least 2");
    if (!(dt > 0.0)) throw config_error("scenario: dt must be positive");
    if (!(p0 > 0.0) || !(p0 < 1.0)) throw config_error("scenario: p0 must lie in (0,1)");
    if (!(sigma_calm > 0.0) || !(sigma_breakout > 0.0))
        throw config_error("scenario: volatilities must be positive");
    if (terminal_resolution && !(sigma_terminal > 0.0))
        throw config_error("scenario: sigma_terminal must be positive");
    if (breakout_end < breakout_start)
        throw config_error("scenario: breakout_end must not precede breakout_start");
    if (lambda_background < 0.0 || lambda_window < 0.0)
        throw config_error("scenario: jump intensities must be non-negative");
    if (!(jump_sd > 0.0)) throw config_error("scenario: jump_sd must be positive");
    if (noise_scale < 0.0) throw config_error("scenario: noise_scale must be non-negative");
    if (spread_calm < 0.0 || spread_elevated < 0.0)
        throw config_error("scenario: spreads must be non-negative");
    if (trade_prob < 0.0 || trade_prob > 1.0)
        throw config_error("scenario: trade_prob must lie in [0,1]");
    for (const auto& e : schedule)
        if (!(e.width > 0.0)) throw config_error("scenario: schedule widths must be positive");
}

namespace {

double scenario_sigma(const scenario_config& sc, double t) {
    const double horizon = static_cast<double>(sc.n_steps - 1) * sc.dt;
    if (sc.terminal_resolution && sc.terminal_s > 0.0 && t >= horizon - sc.terminal_s)
        return sc.sigma_terminal;
    if (t >= sc.breakout_start && t < sc.breakout_end) return sc.sigma_breakout;
    return sc.sigma_calm;
}

double scenario_lambda(const scenario_config& sc, double t) {
    for (const auto& e : sc.schedule)
        if (std::abs(t - e.center) <= e.width) return sc.lambda_window;
    return sc.lambda_background;
}

} // namespace

kernel_params scenario_kernel(const scenario_config& sc) {
    sc.validate();
    kernel_params kp;
    kp.param_dt = sc.dt;
    kp.sigma_b.resize(sc.n_steps);
    kp.lambda.resize(sc.n_steps);
    for (std::size_t u = 0; u < sc.n_steps; ++u) {
        const double t = static_cast<double>(u) * sc.dt;
        kp.sigma_b[u] = scenario_sigma(sc, t);
        kp.lambda[u] = scenario_lambda(sc, t);
    }
    kp.law.family = jump_family::symmetric_gaussian;
    kp.law.sd = sc.jump_sd;
    kp.validate();
    return kp;
}

scenario_output make_scenario(const scenario_config& sc, std::uint64_t seed) {
    sc.validate();
    const kernel_params kp = scenario_kernel(sc);
    const double horizon = static_cast<double>(sc.n_steps - 1) * sc.dt;

    scenario_output out;
    out.truth = simulate_path(kp, logit(sc.p0), horizon, sc.dt, seed);

    rng_stream obs_rng(derive_seed(seed, 901));
    rng_stream trade_rng(derive_seed(seed, 902));
    out.ticks.reserve(out.truth.size());
    for (std::size_t u = 0; u < out.truth.size(); ++u) {
        const double t = out.truth.t[u];
        const double sig = scenario_sigma(sc, t);
        const double noise_sd =
            sc.zero_noise ? 0.0
                          : sc.noise_scale * std::min(sig, sc.sigma_breakout) * std::sqrt(sc.dt);
        const double y_obs = out.truth.x[u] + noise_sd * obs_rng.normal();
        const double p_mid = sigmoid(y_obs);
        const double spread = sc.zero_noise ? 0.0
                              : (sig > sc.sigma_calm) ? sc.spread_elevated
                                                      : sc.spread_calm;

        tick_record r;
        r.ts_ms = static_cast<std::int64_t>(std::llround(t * 1000.0));
        r.bid = std::clamp(p_mid - 0.5 * spread, 1e-4, 1.0 - 1e-4);
        r.ask = std::clamp(p_mid + 0.5 * spread, r.bid, 1.0 - 1e-4);
        if (!sc.zero_noise && trade_rng.uniform() < sc.trade_prob) {
            r.has_trade = true;
            r.trade_px = trade_rng.uniform() < 0.5 ? r.bid : r.ask;
            r.trade_sz = 1.0 + std::floor(4.0 * trade_rng.uniform());
        }
        out.ticks.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV round-trips
// ---------------------------------------------------------------------------

void write_path_csv(const std::string& path, const logit_path& p,
                    const std::string& manifest_id) {
    csv_writer w(path, manifest_id, {"t", "x", "p", "jump", "jump_size"});
    for (std::size_t u = 0; u < p.size(); ++u)
        w.write_row(p.t[u], p.x[u], sigmoid(p.x[u]), static_cast<int>(p.jump[u]),
                    p.jump_size[u]);
}

logit_path read_path_csv(const std::string& path) {
    const csv_table tab = read_csv(path);
    logit_path p;
    p.t = tab.numeric_column("t");
    p.x = tab.numeric_column("x");
    const std::vector<double> jf = tab.numeric_column("jump");
    p.jump.reserve(jf.size());
    for (double v : jf) p.jump.push_back(v != 0.0 ? 1 : 0);
    p.jump_size = tab.numeric_column("jump_size");
    if (p.t.empty()) throw data_error("path csv '" + path + "' has no rows");
    return p;
}

void write_ticks_csv(const std::string& path, const std::vector<tick_record>& ticks,
                     const std::string& manifest_id) {
    csv_writer w(path, manifest_id, {"ts_ms", "bid", "ask", "trade_px", "trade_sz", "flags"});
    for (const auto& r : ticks) {
        std::string flags;
        const auto add_flag = [&flags](const char* f) {
            if (!flags.empty()) flags += '|';
            flags += f;
        };
        if (r.f_halt) add_flag("halt");
        if (r.f_crossed) add_flag("crossed");
        if (r.f_locked) add_flag("locked");
        char px[32] = "";
        char sz[32] = "";
        if (r.has_trade) {
            std::snprintf(px, sizeof px, "%.17g", r.trade_px);
            std::snprintf(sz, sizeof sz, "%.17g", r.trade_sz);
        }
        char bid[32], ask[32];
        std::snprintf(bid, sizeof bid, "%.17g", r.bid);
        std::snprintf(ask, sizeof ask, "%.17g", r.ask);
        w.write_row_strings({std::to_string(r.ts_ms), bid, ask, px, sz, flags});
    }
}

void write_schedule_csv(const std::string& path, const std::vector<schedule_entry>& schedule,
                        const std::string& manifest_id) {
    csv_writer w(path, manifest_id, {"center_ts", "width_s"});
    for (const auto& e : schedule) w.write_row(e.center, e.width);
}

std::vector<schedule_entry> read_schedule_csv(const std::string& path) {
    const csv_table tab = read_csv(path);
    const std::vector<double> c = tab.numeric_column("center_ts");
    const std::vector<double> wd = tab.numeric_column("width_s");
    std::vector<schedule_entry> out;
    out.reserve(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out.push_back({c[i], wd[i]});
    return out;
}

} // namespace oddskit
