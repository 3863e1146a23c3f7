// ---------------------------------------------------------------------------
// Strict JSON run configuration: per-subcommand blocks, unknown keys are
// hard errors, defaults materialized, manifest id hashing, and the shared
// JSON-artifact writer.
// ---------------------------------------------------------------------------

#include "oddskit/config.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>

#include "oddskit/errors.hpp"

namespace oddskit {

namespace {

using nlohmann::json;

// Wraps one JSON object and tracks which keys were consumed; any leftover key
// is a config error naming the block.
class json_block {
  public:
    json_block(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object())
            throw config_error("config: block '" + name_ + "' must be a JSON object");
    }

    bool has(const std::string& key) {
        if (j_.contains(key)) {
            used_.insert(key);
            return true;
        }
        return false;
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw config_error("config: bad value for '" + key + "' in block '" + name_ +
                               "': " + e.what());
        }
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (used_.find(it.key()) == used_.end())
                throw config_error("config: unknown key '" + it.key() + "' in block '" + name_ +
                                   "'");
    }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> used_;
};

jump_family parse_family(const std::string& s, const std::string& where) {
    if (s == "symmetric_gaussian") return jump_family::symmetric_gaussian;
    if (s == "double_exponential") return jump_family::double_exponential;
    if (s == "empirical_bins") return jump_family::empirical_bins;
    throw config_error("config: unknown jump family '" + s + "' in block '" + where + "'");
}

const char* family_name(jump_family f) {
    switch (f) {
        case jump_family::symmetric_gaussian: return "symmetric_gaussian";
        case jump_family::double_exponential: return "double_exponential";
        default: return "empirical_bins";
    }
}

// Scalar or array of numbers -> vector.
std::vector<double> parse_levels(const json& v, const std::string& key, const std::string& where) {
    std::vector<double> out;
    if (v.is_number()) {
        out.push_back(v.get<double>());
        return out;
    }
    if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_number())
                throw config_error("config: '" + key + "' in block '" + where +
                                   "' must hold numbers");
            out.push_back(e.get<double>());
        }
        if (!out.empty()) return out;
    }
    throw config_error("config: '" + key + "' in block '" + where +
                       "' must be a number or a non-empty array");
}

void parse_jump_law(const json& j, jump_law& law, const std::string& where) {
    json_block b(j, where);
    std::string fam = family_name(law.family);
    b.get("family", fam);
    law.family = parse_family(fam, where);
    b.get("sd", law.sd);
    b.get("eta_up", law.eta_up);
    b.get("eta_dn", law.eta_dn);
    b.get("bin_edges", law.bin_edges);
    b.get("bin_masses", law.bin_masses);
    b.get("mc_draws", law.mc_draws);
    b.finish();
}

json jump_law_json(const jump_law& law) {
    json j;
    j["family"] = family_name(law.family);
    j["sd"] = law.sd;
    j["eta_up"] = law.eta_up;
    j["eta_dn"] = law.eta_dn;
    if (!law.bin_edges.empty()) {
        j["bin_edges"] = law.bin_edges;
        j["bin_masses"] = law.bin_masses;
    }
    return j;
}

void parse_kernel(const json& j, kernel_params& kp, const std::string& where) {
    json_block b(j, where);
    if (b.has("sigma_b")) kp.sigma_b = parse_levels(b.raw("sigma_b"), "sigma_b", where);
    if (b.has("lambda")) kp.lambda = parse_levels(b.raw("lambda"), "lambda", where);
    b.get("param_dt", kp.param_dt);
    b.get("truncation_radius", kp.truncation_radius);
    b.get("drift_cap", kp.drift_cap);
    b.get("sprime_floor", kp.sprime_floor);
    b.get("quad_nodes", kp.quad_nodes);
    if (b.has("jump")) parse_jump_law(b.raw("jump"), kp.law, where + ".jump");
    b.finish();
}

json kernel_json(const kernel_params& kp) {
    json j;
    j["sigma_b"] = kp.sigma_b;
    j["lambda"] = kp.lambda;
    j["param_dt"] = kp.param_dt;
    j["truncation_radius"] = kp.truncation_radius;
    j["drift_cap"] = kp.drift_cap;
    j["sprime_floor"] = kp.sprime_floor;
    j["quad_nodes"] = kp.quad_nodes;
    j["jump"] = jump_law_json(kp.law);
    return j;
}

void parse_schedule(const json& v, std::vector<schedule_entry>& out, const std::string& where) {
    if (!v.is_array())
        throw config_error("config: 'schedule' in block '" + where + "' must be an array");
    out.clear();
    for (const auto& e : v) {
        json_block b(e, where + ".schedule");
        schedule_entry se;
        b.get("center", se.center);
        b.get("width", se.width);
        b.finish();
        out.push_back(se);
    }
}

void parse_scenario(const json& j, scenario_config& sc) {
    json_block b(j, "scenario");
    b.get("n_steps", sc.n_steps);
    b.get("dt", sc.dt);
    b.get("p0", sc.p0);
    b.get("sigma_calm", sc.sigma_calm);
    b.get("sigma_breakout", sc.sigma_breakout);
    b.get("breakout_start", sc.breakout_start);
    b.get("breakout_end", sc.breakout_end);
    b.get("terminal_resolution", sc.terminal_resolution);
    b.get("sigma_terminal", sc.sigma_terminal);
    b.get("terminal_s", sc.terminal_s);
    b.get("lambda_background", sc.lambda_background);
    b.get("lambda_window", sc.lambda_window);
    b.get("jump_sd", sc.jump_sd);
    b.get("noise_scale", sc.noise_scale);
    b.get("zero_noise", sc.zero_noise);
    b.get("spread_calm", sc.spread_calm);
    b.get("spread_elevated", sc.spread_elevated);
    b.get("trade_prob", sc.trade_prob);
    if (b.has("schedule")) parse_schedule(b.raw("schedule"), sc.schedule, "scenario");
    b.finish();
}

json scenario_json(const scenario_config& sc) {
    json j;
    j["n_steps"] = sc.n_steps;
    j["dt"] = sc.dt;
    j["p0"] = sc.p0;
    j["sigma_calm"] = sc.sigma_calm;
    j["sigma_breakout"] = sc.sigma_breakout;
    j["breakout_start"] = sc.breakout_start;
    j["breakout_end"] = sc.breakout_end;
    j["terminal_resolution"] = sc.terminal_resolution;
    j["sigma_terminal"] = sc.sigma_terminal;
    j["terminal_s"] = sc.terminal_s;
    j["lambda_background"] = sc.lambda_background;
    j["lambda_window"] = sc.lambda_window;
    j["jump_sd"] = sc.jump_sd;
    j["noise_scale"] = sc.noise_scale;
    j["zero_noise"] = sc.zero_noise;
    j["spread_calm"] = sc.spread_calm;
    j["spread_elevated"] = sc.spread_elevated;
    j["trade_prob"] = sc.trade_prob;
    json sched = json::array();
    for (const auto& e : sc.schedule) sched.push_back({{"center", e.center}, {"width", e.width}});
    j["schedule"] = sched;
    return j;
}

void parse_filter(const json& j, filter_config& fc) {
    json_block b(j, "filter");
    b.get("bin_s", fc.bin_s);
    b.get("tick_size", fc.tick_size);
    b.finish();
}

void parse_calibrate(const json& j, em_config& ec, jump_family& family) {
    json_block b(j, "calibrate");
    std::string fam = family_name(family);
    b.get("family", fam);
    family = parse_family(fam, "calibrate");
    b.get("global_steps", ec.global_steps);
    b.get("rolling_window", ec.rolling_window);
    b.get("tau_J", ec.tau_J);
    b.get("outer_loops", ec.outer_loops);
    b.get("tol", ec.tol);
    b.get("window_iters", ec.window_iters);
    b.get("drift_ewma_halflife", ec.drift_ewma_halflife);
    b.finish();
}

void parse_surface(const json& j, surface_stage_config& sc) {
    json_block b(j, "surface");
    b.get("resolution_time", sc.resolution_time);
    b.get("n_tau", sc.grid.n_tau);
    b.get("n_m", sc.grid.n_m);
    double alpha = -1.0;
    if (b.has("alpha")) {
        b.get("alpha", alpha);
        sc.fit.alpha = alpha > 0.0 ? alpha : std::numeric_limits<double>::quiet_NaN();
    }
    b.get("n_basis_tau", sc.fit.n_basis_tau);
    b.get("n_basis_m", sc.fit.n_basis_m);
    b.get("news_relax", sc.fit.news_relax);
    b.get("edge_penalty_boost", sc.fit.edge_penalty_boost);
    b.get("edge_quantile", sc.fit.edge_quantile);
    b.get("bootstrap_resamples", sc.fit.bootstrap_resamples);
    b.get("bootstrap_seed", sc.fit.bootstrap_seed);
    b.get("compute_bands", sc.fit.compute_bands);
    b.get("max_iterations", sc.fit.max_iterations);
    b.finish();
}

void parse_instrument(const json& j, price_instrument& in) {
    json_block b(j, "price.instruments");
    b.get("type", in.type);
    b.get("method", in.method);
    b.get("space", in.space);
    b.get("corridor_lo", in.corridor_lo);
    b.get("corridor_hi", in.corridor_hi);
    b.get("level_p", in.level_p);
    b.get("direction", in.direction);
    b.get("monitor_dt", in.monitor_dt);
    b.get("payout", in.payout);
    b.get("rho", in.rho);
    b.get("x0_j_p", in.x0_j_p);
    b.finish();
    if (in.type.empty())
        throw config_error("config: each price instrument needs a 'type'");
}

void parse_price(const json& j, price_config& pc) {
    json_block b(j, "price");
    b.get("x0_p", pc.x0_p);
    b.get("t0", pc.t0);
    b.get("T", pc.horizon_T);
    bool kernel_j_given = false;
    if (b.has("kernel")) parse_kernel(b.raw("kernel"), pc.kernel, "price.kernel");
    if (b.has("kernel_j")) {
        parse_kernel(b.raw("kernel_j"), pc.kernel_j, "price.kernel_j");
        kernel_j_given = true;
    }
    if (!kernel_j_given) pc.kernel_j = pc.kernel;
    if (b.has("instruments")) {
        const json& arr = b.raw("instruments");
        if (!arr.is_array())
            throw config_error("config: 'instruments' in block 'price' must be an array");
        pc.instruments.clear();
        for (const auto& e : arr) {
            price_instrument in;
            parse_instrument(e, in);
            pc.instruments.push_back(in);
        }
    }
    if (b.has("pide")) {
        json_block g(b.raw("pide"), "price.pide");
        std::int64_t nx = 0, nt = 0;
        g.get("n_x", nx);
        g.get("n_t", nt);
        g.get("theta", pc.pide.theta);
        g.finish();
        if (nx > 0 && nt > 0) {
            pc.pide.n_x = static_cast<std::size_t>(nx);
            pc.pide.n_t = static_cast<std::size_t>(nt);
            pc.pide_default_grid = false;
        }
    }
    if (b.has("mc")) {
        json_block g(b.raw("mc"), "price.mc");
        g.get("enabled", pc.run_mc);
        g.get("n_paths", pc.mc_paths);
        g.get("dt", pc.mc_dt);
        g.get("antithetic", pc.mc_antithetic);
        g.finish();
    }
    b.get("greeks", pc.run_greeks);
    b.finish();
}

json instruments_json(const std::vector<price_instrument>& ins) {
    json arr = json::array();
    for (const auto& in : ins) {
        json j;
        j["type"] = in.type;
        j["method"] = in.method;
        j["space"] = in.space;
        j["corridor_lo"] = in.corridor_lo;
        j["corridor_hi"] = in.corridor_hi;
        j["level_p"] = in.level_p;
        j["direction"] = in.direction;
        j["monitor_dt"] = in.monitor_dt;
        j["payout"] = in.payout;
        j["rho"] = in.rho;
        j["x0_j_p"] = in.x0_j_p;
        arr.push_back(j);
    }
    return arr;
}

void parse_quote(const json& j, quote_stage_config& qc) {
    json_block b(j, "quote");
    b.get("gamma", qc.params.gamma);
    b.get("k", qc.params.k);
    b.get("arrival_scale", qc.params.arrival_scale);
    b.get("horizon_T", qc.params.horizon_T);
    b.get("floor_delta_p", qc.params.floor_delta_p);
    b.get("q_cap_scale", qc.params.q_cap_scale);
    b.get("tau_tox", qc.guards.tau_tox);
    b.get("pull_tox", qc.guards.pull_tox);
    b.get("widen_factor", qc.guards.widen_factor);
    b.get("tox_half_life", qc.guards.tox_half_life);
    b.get("tau_jump", qc.guards.tau_jump);
    b.get("refresh_interval", qc.guards.refresh_interval);
    b.get("ramp_seconds", qc.guards.ramp_seconds);
    b.get("gamma_ramp_max", qc.guards.gamma_ramp_max);
    b.get("fill_intensity", qc.fill_intensity);
    b.get("fill_decay", qc.fill_decay);
    b.get("sigma_window_s", qc.sigma_window_s);
    b.finish();
}

void parse_bench(const json& j, bench_stage_config& bc) {
    json_block b(j, "bench");
    std::int64_t h = static_cast<std::int64_t>(bc.cfg.task.h);
    b.get("h", h);
    if (h < 1) throw config_error("config: bench h must be at least 1");
    bc.cfg.task.h = static_cast<std::size_t>(h);
    b.get("ewma_half_life", bc.cfg.rn.ewma_half_life);
    b.get("cap_quantile", bc.cfg.rn.cap_quantile);
    b.get("window_s", bc.cfg.stream.window_s);
    b.get("init_iters", bc.cfg.stream.init_iters);
    b.get("step_iters", bc.cfg.stream.step_iters);
    b.get("tau_J", bc.cfg.stream.tau_J);
    std::string fam = family_name(bc.family);
    b.get("family", fam);
    bc.family = parse_family(fam, "bench");
    b.get("seeds", bc.seeds);
    b.get("write_series", bc.write_series);
    b.finish();
}

} // namespace

nlohmann::json run_config::to_json(bool include_paths) const {
    json j;
    j["seed"] = seed;
    if (include_paths) j["out_dir"] = out_dir;
    j["scenario"] = scenario_json(scenario);
    j["filter"] = {{"bin_s", filter.bin_s}, {"tick_size", filter.tick_size}};
    j["calibrate"] = {{"family", family_name(calibrate_family)},
                      {"global_steps", calibrate.global_steps},
                      {"rolling_window", calibrate.rolling_window},
                      {"tau_J", calibrate.tau_J},
                      {"outer_loops", calibrate.outer_loops},
                      {"tol", calibrate.tol},
                      {"window_iters", calibrate.window_iters},
                      {"drift_ewma_halflife", calibrate.drift_ewma_halflife}};
    j["surface"] = {{"resolution_time", surface.resolution_time},
                    {"n_tau", surface.grid.n_tau},
                    {"n_m", surface.grid.n_m},
                    {"alpha", std::isnan(surface.fit.alpha) ? -1.0 : surface.fit.alpha},
                    {"n_basis_tau", surface.fit.n_basis_tau},
                    {"n_basis_m", surface.fit.n_basis_m},
                    {"news_relax", surface.fit.news_relax},
                    {"edge_penalty_boost", surface.fit.edge_penalty_boost},
                    {"edge_quantile", surface.fit.edge_quantile},
                    {"bootstrap_resamples", surface.fit.bootstrap_resamples},
                    {"bootstrap_seed", surface.fit.bootstrap_seed},
                    {"compute_bands", surface.fit.compute_bands},
                    {"max_iterations", surface.fit.max_iterations}};
    j["price"] = {{"x0_p", price.x0_p},
                  {"t0", price.t0},
                  {"T", price.horizon_T},
                  {"kernel", kernel_json(price.kernel)},
                  {"kernel_j", kernel_json(price.kernel_j)},
                  {"instruments", instruments_json(price.instruments)},
                  {"pide",
                   {{"n_x", price.pide_default_grid ? 0 : static_cast<std::int64_t>(price.pide.n_x)},
                    {"n_t", price.pide_default_grid ? 0 : static_cast<std::int64_t>(price.pide.n_t)},
                    {"theta", price.pide.theta}}},
                  {"mc",
                   {{"enabled", price.run_mc},
                    {"n_paths", price.mc_paths},
                    {"dt", price.mc_dt},
                    {"antithetic", price.mc_antithetic}}},
                  {"greeks", price.run_greeks}};
    j["quote"] = {{"gamma", quote.params.gamma},
                  {"k", quote.params.k},
                  {"arrival_scale", quote.params.arrival_scale},
                  {"horizon_T", quote.params.horizon_T},
                  {"floor_delta_p", quote.params.floor_delta_p},
                  {"q_cap_scale", quote.params.q_cap_scale},
                  {"tau_tox", quote.guards.tau_tox},
                  {"pull_tox", quote.guards.pull_tox},
                  {"widen_factor", quote.guards.widen_factor},
                  {"tox_half_life", quote.guards.tox_half_life},
                  {"tau_jump", quote.guards.tau_jump},
                  {"refresh_interval", quote.guards.refresh_interval},
                  {"ramp_seconds", quote.guards.ramp_seconds},
                  {"gamma_ramp_max", quote.guards.gamma_ramp_max},
                  {"fill_intensity", quote.fill_intensity},
                  {"fill_decay", quote.fill_decay},
                  {"sigma_window_s", quote.sigma_window_s}};
    j["bench"] = {{"h", bench.cfg.task.h},
                  {"ewma_half_life", bench.cfg.rn.ewma_half_life},
                  {"cap_quantile", bench.cfg.rn.cap_quantile},
                  {"window_s", bench.cfg.stream.window_s},
                  {"init_iters", bench.cfg.stream.init_iters},
                  {"step_iters", bench.cfg.stream.step_iters},
                  {"tau_J", bench.cfg.stream.tau_J},
                  {"family", family_name(bench.family)},
                  {"seeds", bench.seeds},
                  {"write_series", bench.write_series}};
    return j;
}

run_config load_run_config(const std::string& path) {
    run_config cfg;
    // Default instrument set for the price stage.
    cfg.price.instruments = {price_instrument{"vanilla"}, price_instrument{"digital"},
                             price_instrument{"x_variance"}, price_instrument{"p_variance"},
                             price_instrument{"first_passage"}};
    cfg.price.kernel.sigma_b = {0.05};
    cfg.price.kernel.lambda = {0.002};
    cfg.price.kernel_j = cfg.price.kernel;
    if (path.empty()) return cfg;

    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config: parse error in '" + path + "': " + e.what());
    }
    json_block b(j, "<top>");
    b.get("seed", cfg.seed);
    b.get("out_dir", cfg.out_dir);
    if (b.has("scenario")) parse_scenario(b.raw("scenario"), cfg.scenario);
    if (b.has("filter")) parse_filter(b.raw("filter"), cfg.filter);
    if (b.has("calibrate")) parse_calibrate(b.raw("calibrate"), cfg.calibrate, cfg.calibrate_family);
    if (b.has("surface")) parse_surface(b.raw("surface"), cfg.surface);
    if (b.has("price")) parse_price(b.raw("price"), cfg.price);
    if (b.has("quote")) parse_quote(b.raw("quote"), cfg.quote);
    if (b.has("bench")) parse_bench(b.raw("bench"), cfg.bench);
    b.finish();
    return cfg;
}

void override_seed(run_config& cfg, std::uint64_t seed) { cfg.seed = seed; }
void override_out_dir(run_config& cfg, const std::string& out_dir) { cfg.out_dir = out_dir; }

std::string manifest_id(const std::string& subcommand, const run_config& cfg) {
    const std::string text =
        subcommand + "|" + cfg.to_json(false).dump() + "|" + std::to_string(cfg.seed);
    std::uint64_t h = 1469598103934665603ull; // FNV-1a 64
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

nlohmann::json run_manifest::to_json() const {
    json j;
    j["manifest"] = id;
    j["code_version"] = code_version;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["started_utc"] = started_utc;
    j["finished_utc"] = finished_utc;
    j["durations_s"] = durations_s;
    j["config"] = config;
    return j;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return std::string(buf);
}

void write_manifest(const std::string& path, const run_manifest& m) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write manifest '" + path + "'");
    out << m.to_json().dump(2) << "\n";
}

void write_json_artifact(const std::string& path, const std::string& id,
                         const nlohmann::json& config_echo, const std::string& payload_key,
                         const nlohmann::json& payload) {
    json j;
    j["manifest"] = id;
    j["config"] = config_echo;
    j[payload_key] = payload;
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

} // namespace oddskit
