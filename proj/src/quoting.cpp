#include "oddskit/quoting.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

#include "oddskit/csv.hpp"
#include "oddskit/logistic.hpp"

namespace oddskit {

namespace {

// Display probabilities live strictly inside (0,1); the band shifts away from
// a boundary before it would cross it.
constexpr double kDisplayEps = 1e-6;

} // namespace

void quoting_params::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw config_error("quoting: gamma must be positive");
    if (!(k > 0.0) || !std::isfinite(k)) throw config_error("quoting: k must be positive");
    if (!(horizon_T > 0.0) || !std::isfinite(horizon_T))
        throw config_error("quoting: horizon_T must be positive");
    if (!(sigma2_bar >= 0.0) || !std::isfinite(sigma2_bar))
        throw config_error("quoting: sigma2_bar must be non-negative");
    if (!(floor_delta_p >= 0.0) || !(floor_delta_p < 0.5))
        throw config_error("quoting: floor_delta_p must lie in [0, 0.5)");
    if (!(q_cap_scale > 0.0) || !std::isfinite(q_cap_scale))
        throw config_error("quoting: q_cap_scale must be positive");
    if (!(sprime_floor > 0.0) || !std::isfinite(sprime_floor))
        throw config_error("quoting: sprime_floor must be positive");
    if (!std::isfinite(arrival_scale) || arrival_scale < 0.0)
        throw config_error("quoting: arrival_scale must be non-negative");
}

void guard_config::validate() const {
    if (!(tau_tox > 0.0) || !(tau_tox <= 1.0))
        throw config_error("quoting guards: tau_tox must lie in (0, 1]");
    if (!(pull_tox >= tau_tox) || !(pull_tox <= 1.0))
        throw config_error("quoting guards: pull_tox must lie in [tau_tox, 1]");
    if (!(widen_factor >= 1.0)) throw config_error("quoting guards: widen_factor must be >= 1");
    if (!(tox_half_life > 0.0))
        throw config_error("quoting guards: tox_half_life must be positive");
    if (!(tau_jump > 0.0) || !(tau_jump <= 1.0))
        throw config_error("quoting guards: tau_jump must lie in (0, 1]");
    if (!(refresh_interval > 0.0))
        throw config_error("quoting guards: refresh_interval must be positive");
    if (!(ramp_seconds > 0.0)) throw config_error("quoting guards: ramp_seconds must be positive");
    if (!(gamma_ramp_max >= 1.0))
        throw config_error("quoting guards: gamma_ramp_max must be >= 1");
    for (const news_window& w : news)
        if (!(w.end > w.start))
            throw config_error("quoting guards: news window must have end > start");
}

const char* to_string(quote_state s) {
    switch (s) {
    case quote_state::live: return "live";
    case quote_state::widened: return "widened";
    case quote_state::pulled: return "pulled";
    }
    return "unknown";
}

nlohmann::json pnl_components::to_json() const {
    return nlohmann::json{{"directional", directional}, {"curvature", curvature},
                          {"belief_vega", belief_vega}, {"cross_event", cross_event},
                          {"jump", jump},               {"residual", residual},
                          {"total", total}};
}

reservation_quote reservation_and_spread(double x_t, double q, const quoting_params& params,
                                         double time_left) {
    params.validate();
    if (!std::isfinite(x_t)) throw config_error("quoting: x_t must be finite");
    const double tl = time_left < 0.0 ? params.horizon_T : time_left;
    const double inv_term = params.gamma * params.sigma2_bar * tl;
    reservation_quote out;
    out.r_x = x_t - q * inv_term;
    out.delta_x = 0.5 * (inv_term + (2.0 / params.k) * std::log1p(params.gamma / params.k));
    return out;
}

quote_pair display_quotes(double r_x, double delta_x, double x_t, const quoting_params& params) {
    params.validate();
    if (!std::isfinite(r_x) || !(delta_x >= 0.0))
        throw config_error("quoting: reservation quote must be finite with delta_x >= 0");
    quote_pair out;
    out.x_bid = r_x - delta_x;
    out.x_ask = r_x + delta_x;
    out.p_bid = sigmoid(out.x_bid);
    out.p_ask = sigmoid(out.x_ask);

    // First-order display relation, valid only for narrow spreads.  It is
    // anchored at the band center: with inventory skew the quotes sit around
    // r_x, not x_t, and the linearization applies there.
    (void)x_t;
    if (delta_x > 0.0 && delta_x <= 0.1) {
        const double approx = sigmoid_d1(r_x) * delta_x;
        const double exact = 0.5 * (out.p_ask - out.p_bid);
        assert(std::abs(exact - approx) <= 0.1 * approx + 1e-12);
        (void)approx;
        (void)exact;
    }

    const double half_p = 0.5 * (out.p_ask - out.p_bid);
    if (half_p < params.floor_delta_p) {
        const double mid_p = 0.5 * (out.p_ask + out.p_bid);
        double lo = mid_p - params.floor_delta_p;
        double hi = mid_p + params.floor_delta_p;
        if (lo < kDisplayEps) {
            hi += kDisplayEps - lo;
            lo = kDisplayEps;
        }
        if (hi > 1.0 - kDisplayEps) {
            lo -= hi - (1.0 - kDisplayEps);
            hi = 1.0 - kDisplayEps;
            lo = std::max(lo, kDisplayEps);
        }
        out.p_bid = lo;
        out.p_ask = hi;
        out.x_bid = logit(lo);
        out.x_ask = logit(hi);
    }
    out.half_spread_x = 0.5 * (out.x_ask - out.x_bid);
    out.state = quote_state::live;
    return out;
}

double inventory_cap(double x_t, const quoting_params& params) {
    params.validate();
    return params.q_cap_scale / std::max(sigmoid_d1(x_t), params.sprime_floor);
}

std::vector<double> trailing_sigma2(const std::vector<double>& sigma2, double dt,
                                    double window_s) {
    if (!(dt > 0.0)) throw config_error("quoting: trailing window needs dt > 0");
    if (!(window_s > 0.0)) throw config_error("quoting: trailing window must be positive");
    const std::size_t w =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window_s / dt)));
    std::vector<double> out(sigma2.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < sigma2.size(); ++i) {
        acc += sigma2[i];
        if (i >= w) acc -= sigma2[i - w];
        out[i] = acc / static_cast<double>(std::min(i + 1, w));
    }
    return out;
}

hedge_orders hedge_notionals(const hedge_inputs_book& book) {
    hedge_orders out;
    if (book.sigma_b > 0.0 && book.time_left > 0.0) {
        out.variance_strip_notional = -book.book_vega_b / (2.0 * book.sigma_b * book.time_left);
    } else if (book.book_vega_b != 0.0) {
        out.warnings.push_back("hedge: belief volatility (or window) is zero; cannot size a "
                               "variance strip against the book vega");
    }
    if (book.has_cross) {
        const pair_dependence* cj = book.has_cojump ? &book.cojump : nullptr;
        const hedge_ratio hr = beta_hedge(book.cross, book.shrinkage_alpha, book.clamp_abs, cj);
        out.cross_event_contracts = -hr.effective() * book.position;
        out.has_cross = true;
    }
    return out;
}

pnl_components pnl_attribution(double position, const std::vector<attribution_step>& steps,
                               const book_greeks& g) {
    pnl_components out;
    for (const attribution_step& s : steps) {
        if (s.jump) {
            out.jump += position * s.dp;
        } else {
            out.directional += g.delta * s.dp;
            out.curvature += 0.5 * g.gamma * s.dp * s.dp;
        }
        out.belief_vega += g.vega_b * s.d_sigma_b;
        out.cross_event += g.vega_rho * s.d_rho;
        out.total += s.d_value;
    }
    out.residual = out.total - (out.directional + out.curvature + out.belief_vega +
                                out.cross_event + out.jump);
    return out;
}

quote_engine::quote_engine(quoting_params params, guard_config guards)
    : params_(std::move(params)), guards_(std::move(guards)) {
    params_.validate();
    guards_.validate();
}

void quote_engine::set_hedge_book(const hedge_inputs_book& book) {
    hedge_book_ = book;
    has_hedge_book_ = true;
}

void quote_engine::clear_hedge_book() {
    hedge_book_ = hedge_inputs_book{};
    has_hedge_book_ = false;
}

double quote_engine::gamma_multiplier(double t) const {
    double mult = 1.0;
    for (const news_window& w : guards_.news) {
        double m = 1.0;
        if (t >= w.start && t <= w.end) {
            m = guards_.gamma_ramp_max;
        } else if (t >= w.start - guards_.ramp_seconds && t < w.start) {
            const double frac = (t - (w.start - guards_.ramp_seconds)) / guards_.ramp_seconds;
            m = 1.0 + (guards_.gamma_ramp_max - 1.0) * frac;
        }
        mult = std::max(mult, m);
    }
    return mult;
}

bool quote_engine::apply_fill(double signed_size, double x_at_fill, double ts) {
    if (!std::isfinite(signed_size) || !std::isfinite(x_at_fill))
        throw config_error("quoting: fill size and price must be finite");
    const double q_next = inv_.q + signed_size;
    if (std::abs(q_next) > inventory_cap(x_at_fill, params_)) return false;
    inv_.q = q_next;
    inv_.last_fill_ts = ts;
    return true;
}

refresh_result quote_engine::refresh(const market_snapshot& snap) {
    if (!std::isfinite(snap.x) || !std::isfinite(snap.sigma2_bar) || snap.sigma2_bar < 0.0)
        throw data_error("quoting: snapshot needs finite x and non-negative sigma2_bar");

    refresh_result out;

    // 1) Update rolling state: toxicity EWMA on the signed aggressor flow.
    const double dt =
        seen_snapshot_ ? std::max(snap.t - last_t_, 0.0) : guards_.refresh_interval;
    const double w = std::pow(2.0, -dt / guards_.tox_half_life);
    tox_ = w * tox_ + (1.0 - w) * std::clamp(snap.signed_flow, -1.0, 1.0);
    last_t_ = snap.t;
    seen_snapshot_ = true;
    out.toxicity = tox_;

    // 2) Reservation quote and spread with the news-ramped gamma.
    out.gamma_multiplier = gamma_multiplier(snap.t);
    quoting_params live = params_;
    live.gamma *= out.gamma_multiplier;
    live.sigma2_bar = snap.sigma2_bar;
    out.time_left = std::max(params_.horizon_T - snap.t, 0.0);
    const reservation_quote rq = reservation_and_spread(snap.x, inv_.q, live, out.time_left);
    if (out.gamma_multiplier > 1.0) out.actions.push_back("news: pre-widened gamma");

    // 3) Guards.  Widening scales the half spread before display; any pull
    //    trumps widening.
    double delta = rq.delta_x;
    bool widened = false;
    bool pulled = false;
    if (std::abs(tox_) >= guards_.pull_tox) {
        pulled = true;
        out.actions.push_back("toxicity: pulled quotes");
    } else if (std::abs(tox_) >= guards_.tau_tox) {
        widened = true;
        delta *= guards_.widen_factor;
        out.actions.push_back("toxicity: widened spread");
    }
    if (snap.jump_gamma > guards_.tau_jump) {
        pulled = true;
        out.actions.push_back("jump alarm: pulled quotes");
    }
    if (snap.age > 2.0 * guards_.refresh_interval) {
        pulled = true;
        out.actions.push_back("stale snapshot: pulled quotes");
    }

    out.quotes = display_quotes(rq.r_x, delta, snap.x, live);
    out.quotes.state =
        pulled ? quote_state::pulled : (widened ? quote_state::widened : quote_state::live);

    // 4)-5) Hedge recommendations when a hedge book is configured.
    if (has_hedge_book_) {
        out.hedges = hedge_notionals(hedge_book_);
        out.has_hedges = true;
    }
    return out;
}

void write_quote_tape(const std::string& path, const std::vector<tape_row>& rows,
                      const std::string& manifest_id) {
    csv_writer w(path, manifest_id, {"t", "x_bid", "x_ask", "p_bid", "p_ask", "state", "q"});
    for (const tape_row& r : rows)
        w.write_row(r.t, r.quotes.x_bid, r.quotes.x_ask, r.quotes.p_bid, r.quotes.p_ask,
                    to_string(r.quotes.state), r.q);
}

void write_pnl_ledger(const std::string& path, const std::vector<double>& t,
                      const std::vector<pnl_components>& rows, const std::string& manifest_id) {
    if (t.size() != rows.size())
        throw config_error("quoting: ledger timestamps and rows must align");
    csv_writer w(path, manifest_id,
                 {"t", "directional", "curvature", "belief_vega", "cross_event", "jump",
                  "residual", "total"});
    for (std::size_t i = 0; i < rows.size(); ++i)
        w.write_row(t[i], rows[i].directional, rows[i].curvature, rows[i].belief_vega,
                    rows[i].cross_event, rows[i].jump, rows[i].residual, rows[i].total);
}

} // namespace oddskit
