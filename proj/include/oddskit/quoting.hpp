#pragma once

// ---------------------------------------------------------------------------
// Inventory-aware quoting in logit units: reservation quote and optimal
// spread, exact sigmoid mapping to display probabilities with a tick floor,
// an inventory cap that tightens near the probability boundaries, a guarded
// refresh loop (toxicity meter, scheduled-news pre-widening, jump alarm,
// staleness), hedge sizing, and an exact PnL attribution ledger.
//
// One engine instance owns the quoting state for a single event contract;
// all inventory mutations go through that owner.  Market snapshots may be
// produced elsewhere but are consumed whole, one per refresh tick.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "oddskit/dependence.hpp"
#include "oddskit/errors.hpp"

namespace oddskit {

struct quoting_params {
    double gamma = 0.02;         // risk aversion (1/logit^2); > 0
    double k = 1.2;              // arrival decay with quote distance (1/logit); > 0
    double arrival_scale = 1.0;  // A in the arrival intensity A*exp(-k*delta);
                                 // recorded for documentation, not used in the
                                 // reservation/spread formulas
    double horizon_T = 600.0;    // risk horizon on the replay clock (s); > 0
    double sigma2_bar = 0.0;     // short-horizon mean belief variance
                                 // (logit^2/s); >= 0
    double floor_delta_p = 0.005; // display half-spread floor (probability)
    double q_cap_scale = 25.0;    // inventory cap scale; > 0
    double sprime_floor = 1e-4;   // floor on S'(x) in the cap; > 0

    void validate() const;
};

struct pnl_components {
    double directional = 0.0; // delta * dp over unflagged steps
    double curvature = 0.0;   // 0.5 * gamma * dp^2 over unflagged steps
    double belief_vega = 0.0; // vega_b * d(sigma_b)
    double cross_event = 0.0; // vega_rho * d(rho)
    double jump = 0.0;        // position * dp on flagged steps
    double residual = 0.0;    // realized change minus the buckets above
    double total = 0.0;       // realized change; equals the sum by identity

    nlohmann::json to_json() const;
};

struct inventory_state {
    double q = 0.0;            // signed contract count
    double last_fill_ts = 0.0; // timestamp of the last accepted fill (s)
    std::vector<pnl_components> pnl_ledger;
};

enum class quote_state { live, widened, pulled };
const char* to_string(quote_state s);

struct quote_pair {
    double x_bid = 0.0;
    double x_ask = 0.0;
    double p_bid = 0.0; // S(x_bid) exactly
    double p_ask = 0.0; // S(x_ask) exactly
    double half_spread_x = 0.0;
    quote_state state = quote_state::live;
};

struct reservation_quote {
    double r_x = 0.0;     // inventory-skewed quote midpoint (logit)
    double delta_x = 0.0; // half spread (logit)
};

// Reservation quote and half spread:
//   r_x = x_t - q * gamma * sigma2_bar * time_left
//   2 * delta_x = gamma * sigma2_bar * time_left + (2/k) * log(1 + gamma/k)
// time_left < 0 (the default) uses params.horizon_T as the remaining horizon.
reservation_quote reservation_and_spread(double x_t, double q, const quoting_params& params,
                                         double time_left = -1.0);

// Exact sigmoid mapping of the x-quotes to display probabilities.  When the
// mapped half-spread in p falls below params.floor_delta_p the band widens
// symmetrically around its p midpoint (then shifts inside (0,1) if a boundary
// is hit), and the x-quotes are recomputed from the widened probabilities.
// The first-order relation delta_p ~ S'(x_t) * delta_x is kept as a debug
// assertion for delta_x <= 0.1.
quote_pair display_quotes(double r_x, double delta_x, double x_t, const quoting_params& params);

// Inventory cap q_max = q_cap_scale / max(S'(x_t), sprime_floor): tightens as
// the contract approaches either boundary.
double inventory_cap(double x_t, const quoting_params& params);

// Causal trailing mean of a per-step variance stream over window_s seconds
// (at least one sample; shorter prefixes average what is available).  Used to
// turn the calibration sigma_b^2 stream into the sigma2_bar input.
std::vector<double> trailing_sigma2(const std::vector<double>& sigma2, double dt,
                                    double window_s = 300.0);

struct news_window {
    double start = 0.0; // announced window start (s)
    double end = 0.0;   // announced window end (s); > start
};

struct guard_config {
    double tau_tox = 0.6;          // |toxicity| at which quotes widen
    double pull_tox = 0.85;        // |toxicity| at which quotes are pulled
    double widen_factor = 2.0;     // half-spread multiplier when widened
    double tox_half_life = 30.0;   // EWMA half-life of the toxicity meter (s)
    double tau_jump = 0.7;         // jump responsibility above which quotes pull
    double refresh_interval = 1.0; // expected snapshot cadence (s)
    double ramp_seconds = 90.0;    // pre-widening ramp ahead of a news window
    double gamma_ramp_max = 3.0;   // gamma multiplier inside a news window
    std::vector<news_window> news; // announced windows on the replay clock

    void validate() const;
};

struct market_snapshot {
    double t = 0.0;           // snapshot timestamp on the replay clock (s)
    double x = 0.0;           // filtered log-odds mid
    double sigma2_bar = 0.0;  // trailing mean belief variance (logit^2/s)
    double signed_flow = 0.0; // signed aggressor imbalance for this tick, in [-1, 1]
    double jump_gamma = 0.0;  // latest jump responsibility from the calibration stream
    double age = 0.0;         // seconds since the snapshot data was produced
};

struct hedge_inputs_book {
    double book_vega_b = 0.0;   // book sensitivity to sigma_b over the window
    double sigma_b = 0.0;       // current belief volatility (1/sqrt(s) units)
    double time_left = 0.0;     // window length T - t of the variance strip (s)
    double position = 0.0;      // directional position in the hedged event
    bool has_cross = false;     // whether a cross-event hedge is requested
    hedge_inputs cross{};       // dependence inputs for the hedge ratio
    double shrinkage_alpha = 0.7;
    double clamp_abs = 10.0;
    bool has_cojump = false;    // include the co-jump correction below
    pair_dependence cojump{};   // co-jump moments for the correction
};

struct hedge_orders {
    double variance_strip_notional = 0.0; // -vega_b / (2 * sigma_b * time_left)
    double cross_event_contracts = 0.0;   // -effective hedge ratio * position
    bool has_cross = false;
    std::vector<std::string> warnings;
};

// Sizes the calendar variance-strip hedge and, when requested, the
// cross-event hedge order.  Zero sigma_b (or zero time_left) yields a
// no-hedge recommendation with a warning instead of an error.
hedge_orders hedge_notionals(const hedge_inputs_book& book);

// Book sensitivities used by the attribution ledger.  delta and gamma are
// per unit move of the displayed probability; vega_b is per unit sigma_b,
// vega_rho per unit correlation.
struct book_greeks {
    double delta = 0.0;
    double gamma = 0.0;
    double vega_b = 0.0;
    double vega_rho = 0.0;
};

struct attribution_step {
    double t = 0.0;         // step timestamp (s)
    double dp = 0.0;        // realized probability move over the step
    double d_sigma_b = 0.0; // belief-volatility change over the step
    double d_rho = 0.0;     // correlation change over the step
    bool jump = false;      // step flagged as a jump
    double d_value = 0.0;   // realized book revaluation over the step
};

// Decomposes the realized revaluation of a path segment into directional,
// curvature, belief-vega, cross-event, and jump buckets.  Jump-flagged steps
// put position * dp into the jump bucket and skip the diffusive buckets.
// residual = total - (sum of buckets), so the ledger identity
// total == directional + curvature + belief_vega + cross_event + jump +
// residual holds exactly.
pnl_components pnl_attribution(double position, const std::vector<attribution_step>& steps,
                               const book_greeks& g);

struct refresh_result {
    quote_pair quotes;
    std::vector<std::string> actions; // guard decisions taken this tick
    hedge_orders hedges;              // present when a hedge book is configured
    bool has_hedges = false;
    double toxicity = 0.0;         // signed EWMA after this tick
    double gamma_multiplier = 1.0; // news pre-widening factor applied
    double time_left = 0.0;        // remaining risk horizon used (s)
};

// Quoting state machine for one event contract.  refresh() runs the loop:
// update toxicity and clocks; compute the reservation quote and spread with
// the news-ramped gamma; map to display quotes; apply toxicity, jump-alarm,
// and staleness guards; and size hedges when a hedge book is configured.
// Fills go through apply_fill(), which rejects any fill that would push
// |q| beyond inventory_cap at the fill-time x.
class quote_engine {
  public:
    quote_engine(quoting_params params, guard_config guards);

    refresh_result refresh(const market_snapshot& snap);

    // Returns true and updates inventory when the fill respects the cap.
    bool apply_fill(double signed_size, double x_at_fill, double ts);

    void set_hedge_book(const hedge_inputs_book& book);
    void clear_hedge_book();

    const inventory_state& inventory() const { return inv_; }
    inventory_state& inventory() { return inv_; }
    double toxicity() const { return tox_; }
    const quoting_params& params() const { return params_; }

    // News pre-widening factor at time t: ramps linearly from 1 to
    // gamma_ramp_max over the ramp_seconds before a window and stays at the
    // maximum inside it.
    double gamma_multiplier(double t) const;

  private:
    quoting_params params_;
    guard_config guards_;
    inventory_state inv_;
    hedge_inputs_book hedge_book_{};
    bool has_hedge_book_ = false;
    double tox_ = 0.0;
    double last_t_ = 0.0;
    bool seen_snapshot_ = false;
};

struct tape_row {
    double t = 0.0;
    quote_pair quotes{};
    double q = 0.0;
};

// Quote tape CSV: t,x_bid,x_ask,p_bid,p_ask,state,q
void write_quote_tape(const std::string& path, const std::vector<tape_row>& rows,
                      const std::string& manifest_id = "");

// PnL ledger CSV: t,directional,curvature,belief_vega,cross_event,jump,residual,total
void write_pnl_ledger(const std::string& path, const std::vector<double>& t,
                      const std::vector<pnl_components>& rows,
                      const std::string& manifest_id = "");

} // namespace oddskit
