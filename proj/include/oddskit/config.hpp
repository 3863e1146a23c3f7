#pragma once

// ---------------------------------------------------------------------------
// Run configuration for the command-line pipeline: one human-editable JSON
// file with per-subcommand blocks that mirror the module config types.
// Unknown keys are hard errors, defaults are materialized, and the resolved
// config is echoed into every JSON artifact.  A short manifest id — a hash of
// the resolved config (paths excluded) plus the seed — ties every output
// file of a run together.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "oddskit/em.hpp"
#include "oddskit/forecast.hpp"
#include "oddskit/kernel.hpp"
#include "oddskit/pricer.hpp"
#include "oddskit/quoting.hpp"
#include "oddskit/scenario.hpp"
#include "oddskit/surface.hpp"

namespace oddskit {

inline constexpr const char* kCodeVersion = "0.1.0";

struct filter_config {
    double bin_s = 1.0;
    double tick_size = 0.01;
};

struct surface_stage_config {
    double resolution_time = -1.0; // <= 0: use the series span
    grid_spec grid{};
    fit_config fit{};
};

// One instrument request for the price subcommand.  Probability-space inputs
// (x0_p, level_p) are converted to log-odds internally.
struct price_instrument {
    std::string type;              // vanilla | digital | x_variance | p_variance |
                                   // variance_swap | first_passage | covariance |
                                   // correlation
    std::string method = "pide";   // digital: pide | mc | both
    std::string space = "logit";   // variance_swap: logit | probability
    double corridor_lo = 0.0;      // variance_swap corridor (probability units)
    double corridor_hi = 0.0;      // 0,0 disables the corridor
    double level_p = 0.7;          // first_passage threshold (probability)
    std::string direction = "above";
    double monitor_dt = 1.0;       // first_passage: 0 = continuous
    double payout = 1.0;
    double rho = 0.0;              // covariance / correlation
    double x0_j_p = 0.5;           // second-leg start (probability)
};

struct price_config {
    double x0_p = 0.6;
    double t0 = 0.0;
    double horizon_T = 600.0;
    kernel_params kernel{};
    kernel_params kernel_j{}; // second leg for covariance/correlation
    std::vector<price_instrument> instruments;
    pide_grid pide{};
    bool pide_default_grid = true; // ignore pide n_x/n_t and size from the state
    bool run_mc = false;           // cross-check each instrument with Monte Carlo
    std::size_t mc_paths = 20000;
    double mc_dt = 0.25;
    bool mc_antithetic = true;
    bool run_greeks = false;
};

struct quote_stage_config {
    quoting_params params{};
    guard_config guards{};
    double fill_intensity = 0.5; // A in the fill arrival A*exp(-k_fill*delta_p)
    double fill_decay = 40.0;    // k_fill (1/probability)
    double sigma_window_s = 300.0;
};

struct bench_stage_config {
    bench_config cfg{};
    jump_family family = jump_family::symmetric_gaussian;
    std::vector<std::uint64_t> seeds; // empty: seed .. seed+9
    bool write_series = true;         // per-model forecast CSVs for the first seed
};

struct run_config {
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    scenario_config scenario{};
    filter_config filter{};
    em_config calibrate{};
    jump_family calibrate_family = jump_family::symmetric_gaussian;
    surface_stage_config surface{};
    price_config price{};
    quote_stage_config quote{};
    bench_stage_config bench{};

    // Resolved-config echo with defaults materialized.  Paths (out_dir) are
    // excluded unless requested so that artifact bytes do not depend on where
    // they are written.
    nlohmann::json to_json(bool include_paths = false) const;
};

// Parses the config file (strict: unknown keys are config errors).  An empty
// path yields the defaults.
run_config load_run_config(const std::string& path);

// Applies CLI overrides after loading.
void override_seed(run_config& cfg, std::uint64_t seed);
void override_out_dir(run_config& cfg, const std::string& out_dir);

// Manifest id: 16 hex digits hashed from subcommand, resolved config (paths
// excluded), and seed.
std::string manifest_id(const std::string& subcommand, const run_config& cfg);

struct run_manifest {
    std::string id;
    std::string code_version = kCodeVersion;
    std::string subcommand;
    std::uint64_t seed = 0;
    std::string started_utc;
    std::string finished_utc;
    std::map<std::string, double> durations_s;
    nlohmann::json config; // full echo including paths

    nlohmann::json to_json() const;
};

std::string utc_timestamp();
void write_manifest(const std::string& path, const run_manifest& m);

// Shared helper for JSON artifacts: wraps a payload with the manifest id and
// the resolved config echo, and writes it with a trailing newline.
void write_json_artifact(const std::string& path, const std::string& id,
                         const nlohmann::json& config_echo, const std::string& payload_key,
                         const nlohmann::json& payload);

} // namespace oddskit
