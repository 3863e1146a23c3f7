#pragma once

// ---------------------------------------------------------------------------
// Default synthetic scenario: a risk-neutral logit path over ~100 minutes at
// 1 Hz with a calm regime, an early high-volatility breakout segment,
// scheduled jump windows, and a terminal resolution stretch where volatility
// rises and the risk-neutral drift carries the state toward a boundary.  The
// observed market is synthesized as a tick tape (quotes, sporadic trades)
// whose noise and spread switch with the volatility regime.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <vector>

#include "oddskit/forecast.hpp"
#include "oddskit/kernel.hpp"
#include "oddskit/ticks.hpp"

namespace oddskit {

struct scenario_config {
    std::size_t n_steps = 6000; // samples on the uniform grid
    double dt = 1.0;            // seconds per step
    double p0 = 0.45;

    // Diffusion regimes (logit volatility per sqrt-second).
    double sigma_calm = 0.02;
    double sigma_breakout = 0.08;
    double breakout_start = 600.0;
    double breakout_end = 1800.0;

    // Terminal resolution stretch: elevated volatility over the last
    // terminal_s seconds; the risk-neutral drift then pushes the saturating
    // state toward a boundary.  Set terminal_s = 0 (or the flag) to disable.
    bool terminal_resolution = true;
    double sigma_terminal = 0.30;
    double terminal_s = 300.0;

    // Jump component: background intensity everywhere, elevated intensity
    // inside +/- width of each scheduled center.
    double lambda_background = 5e-4;
    double lambda_window = 0.02;
    double jump_sd = 0.3;
    std::vector<schedule_entry> schedule{{1200.0, 90.0}, {3000.0, 90.0}, {4800.0, 90.0}};

    // Observation synthesis: logit-space noise scaled to the local diffusion
    // step (capped at the breakout level), spread and trade flow switching
    // with the regime.
    double noise_scale = 3.0;
    bool zero_noise = false;
    double spread_calm = 0.01;
    double spread_elevated = 0.03;
    double trade_prob = 0.3;

    void validate() const;
};

// Kernel parameter schedule implied by the regimes (per-second sigma_b and
// lambda vectors over the scenario span).
kernel_params scenario_kernel(const scenario_config& sc);

struct scenario_output {
    logit_path truth;
    std::vector<tick_record> ticks;
};

// Simulates the true path and synthesizes the tick tape; deterministic in
// (config, seed).
scenario_output make_scenario(const scenario_config& sc, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization used by the command-line pipeline
// ---------------------------------------------------------------------------

// Columns t,x,p,jump,jump_size.
void write_path_csv(const std::string& path, const logit_path& p,
                    const std::string& manifest_id = "");
logit_path read_path_csv(const std::string& path);

// Columns ts_ms,bid,ask,trade_px,trade_sz,flags (trade fields empty on
// quote-only rows).
void write_ticks_csv(const std::string& path, const std::vector<tick_record>& ticks,
                     const std::string& manifest_id = "");

// Columns center_ts,width_s.
void write_schedule_csv(const std::string& path, const std::vector<schedule_entry>& schedule,
                        const std::string& manifest_id = "");
std::vector<schedule_entry> read_schedule_csv(const std::string& path);

} // namespace oddskit
